#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ebdiff/rng.hpp"
#include "ebdiff/types.hpp"

namespace ebdiff {

// Add-k smoothed n-gram model over token streams. Counts are kept for every
// context length 0..order, all accumulated over the full stream; evaluation at
// position i uses context length min(i, order), so sequence starts back off to
// the lower orders instead of needing padding symbols.
//
// An unseen context yields the uniform distribution, which is the exact add-k
// value (0+k)/(0+kV) = 1/V, so conditionals stay normalized for every context.
// With k = 0 an unseen token in a seen context honestly scores -inf.
class ARModel {
 public:
  ARModel() = default;
  ARModel(Token vocab, int order, double smoothing);

  Token vocab() const { return vocab_; }
  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  std::uint64_t tokens_seen() const { return tokens_seen_; }

  // Accumulates counts from a token stream; callable repeatedly.
  void fit(std::span<const Token> stream);

  // p(next | context), context being the immediately preceding tokens in order
  // (oldest first). Longer contexts than `order` use only the last `order`.
  double cond_logprob(std::span<const Token> context, Token next) const;

  // Smoothed conditional distribution given a prefix; sums to 1 exactly up to
  // rounding for every context, seen or not.
  void conditionals(std::span<const Token> prefix, std::span<double> probs_out) const;

  // Chain-rule log-likelihood of a fully unmasked sequence.
  double logprob(const TokenSeq& x0) const;

  // Ancestral draw of `len` tokens. One uniform consumed per position.
  TokenSeq sample_sequence(std::size_t len, RngStream& rng) const;

  // Deterministic export/import of the raw counts, for checkpoints.
  struct CountRow {
    int context_len = 0;
    std::vector<Token> context;
    std::vector<std::uint64_t> counts;
  };
  std::vector<CountRow> export_counts() const;
  void import_counts(const std::vector<CountRow>& rows);
  void set_tokens_seen(std::uint64_t n) { tokens_seen_ = n; }

 private:
  struct Row {
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
  };

  std::uint64_t pack_(std::span<const Token> ctx) const;
  const Row* find_(std::span<const Token> ctx) const;

  Token vocab_ = 0;
  int order_ = 0;
  double smoothing_ = 0.0;
  std::uint64_t tokens_seen_ = 0;
  // one table per context length; key is the base-(vocab+1) packed context
  std::vector<std::unordered_map<std::uint64_t, Row>> tables_;
};

// Fits a fresh model on a corpus stream. Throws DataError on an empty corpus.
ARModel ar_fit(std::span<const Token> corpus, Token vocab, int order, double smoothing);

}  // namespace ebdiff
