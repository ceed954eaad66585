#include "support/fixtures.hpp"

#include <cstddef>

#include "ebdiff/errors.hpp"

namespace ebtest {

using namespace ebdiff;

namespace {

// Small lexicon with shared stems and distinctive character n-grams; Zipf
// weights make a few words dominate so short-context models pick them up fast.
constexpr const char* kLexicon[] = {
    "the",   "and",   "state", "token", "chain",  "mask",  "noise", "level",
    "order", "field", "score", "time",  "sample", "bound", "grid",  "prior",
    "ratio", "weight", "scale", "draw",  "joint",  "space", "learn", "data",
};
constexpr std::size_t kLexiconSize = sizeof(kLexicon) / sizeof(kLexicon[0]);

}  // namespace

std::vector<Token> grammar_corpus(std::size_t len, std::uint64_t seed) {
  RngStream rng = RngStream(seed).child("grammar");
  std::vector<double> weights(kLexiconSize);
  for (std::size_t k = 0; k < kLexiconSize; ++k) weights[k] = 1.0 / static_cast<double>(k + 1);

  std::vector<Token> out;
  out.reserve(len + 16);
  int words_since_period = 0;
  while (out.size() < len) {
    const char* word = kLexicon[rng.next_categorical(weights)];
    for (const char* c = word; *c != '\0'; ++c) out.push_back(Token(1 + (*c - 'a')));
    ++words_since_period;
    if (words_since_period >= 4 && rng.next_double() < 0.3) {
      out.push_back(Token(27));
      words_since_period = 0;
    }
    out.push_back(Token(0));
  }
  out.resize(len);
  return out;
}

std::string grammar_text(std::span<const Token> tokens) {
  std::string text;
  text.reserve(tokens.size());
  for (Token t : tokens) {
    if (t == 0) {
      text.push_back(' ');
    } else if (t >= 1 && t <= 26) {
      text.push_back(static_cast<char>('a' + (t - 1)));
    } else if (t == 27) {
      text.push_back('.');
    } else {
      throw DomainError("token outside grammar alphabet");
    }
  }
  return text;
}

TokenSeq random_x0(Token vocab, std::size_t len, RngStream& rng) {
  std::vector<Token> t(len);
  for (auto& tok : t) tok = static_cast<Token>(rng.next_u64() % static_cast<std::uint64_t>(vocab));
  return TokenSeq(std::move(t), vocab);
}

TokenSeq random_xt(Token vocab, std::size_t len, double p_mask, RngStream& rng) {
  TokenSeq xt = random_x0(vocab, len, rng);
  for (std::size_t i = 0; i < len; ++i)
    if (rng.next_double() < p_mask) xt[i] = xt.mask_id();
  return xt;
}

FactorizedDenoiser random_denoiser(Token vocab, int radius, std::uint64_t seed, double width) {
  FactorizedDenoiser model(vocab, radius);
  RngStream rng = RngStream(seed).child("denoiser-init");
  model.init_random(rng, width);
  return model;
}

ARModel random_ar(Token vocab, int order, double smoothing, std::uint64_t seed,
                  std::size_t corpus_len) {
  RngStream rng = RngStream(seed).child("ar-corpus");
  std::vector<Token> corpus(corpus_len);
  for (auto& tok : corpus)
    tok = static_cast<Token>(rng.next_u64() % static_cast<std::uint64_t>(vocab));
  return ar_fit(corpus, vocab, order, smoothing);
}

double chi2_stat(std::span<const std::size_t> counts, std::span<const double> probs) {
  if (counts.size() != probs.size()) throw DomainError("chi2_stat size mismatch");
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  double stat = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double expected = static_cast<double>(n) * probs[k];
    if (expected == 0.0) {
      if (counts[k] != 0) throw DomainError("observation in zero-probability bin");
      continue;
    }
    const double d = static_cast<double>(counts[k]) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace ebtest
