#include "ebdiff/ar_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ebdiff/errors.hpp"

namespace ebdiff {

ARModel::ARModel(Token vocab, int order, double smoothing)
    : vocab_(vocab), order_(order), smoothing_(smoothing) {
  if (vocab < 1) throw ConfigError("ar model vocab must be >= 1");
  if (order < 1) throw ConfigError("ar model order must be >= 1");
  if (!(smoothing >= 0.0)) throw ConfigError("ar smoothing must be >= 0");
  // packed contexts must fit 64 bits
  double bits = order * std::log2(static_cast<double>(vocab) + 1.0);
  if (bits >= 63.0) throw ConfigError("ar order too large for this vocab (context key overflow)");
  tables_.resize(static_cast<std::size_t>(order) + 1);
}

std::uint64_t ARModel::pack_(std::span<const Token> ctx) const {
  std::uint64_t key = 0;
  std::uint64_t base = static_cast<std::uint64_t>(vocab_) + 1;
  for (Token t : ctx) key = key * base + static_cast<std::uint64_t>(t) + 1;
  return key;
}

const ARModel::Row* ARModel::find_(std::span<const Token> ctx) const {
  const auto& table = tables_[ctx.size()];
  auto it = table.find(pack_(ctx));
  return it == table.end() ? nullptr : &it->second;
}

void ARModel::fit(std::span<const Token> stream) {
  if (stream.empty()) throw DataError("ar fit: empty token stream");
  for (Token t : stream)
    if (t < 0 || t >= vocab_) throw DataError("ar fit: token outside data vocab");
  for (int c = 0; c <= order_; ++c) {
    auto& table = tables_[static_cast<std::size_t>(c)];
    for (std::size_t i = static_cast<std::size_t>(c); i < stream.size(); ++i) {
      std::uint64_t key = pack_(stream.subspan(i - static_cast<std::size_t>(c),
                                               static_cast<std::size_t>(c)));
      Row& row = table[key];
      if (row.counts.empty()) row.counts.assign(static_cast<std::size_t>(vocab_), 0);
      ++row.counts[static_cast<std::size_t>(stream[i])];
      ++row.total;
    }
  }
  tokens_seen_ += stream.size();
}

double ARModel::cond_logprob(std::span<const Token> context, Token next) const {
  if (next < 0 || next >= vocab_) throw DomainError("ar cond_logprob: token outside data vocab");
  std::size_t use = std::min(context.size(), static_cast<std::size_t>(order_));
  auto ctx = context.subspan(context.size() - use, use);
  const Row* row = find_(ctx);
  double v = static_cast<double>(vocab_);
  if (row == nullptr) return -std::log(v);  // add-k limit for an unseen context
  double num = static_cast<double>(row->counts[static_cast<std::size_t>(next)]) + smoothing_;
  double den = static_cast<double>(row->total) + smoothing_ * v;
  if (num == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(num) - std::log(den);
}

void ARModel::conditionals(std::span<const Token> prefix, std::span<double> probs_out) const {
  if (probs_out.size() != static_cast<std::size_t>(vocab_))
    throw PreconditionError("ar conditionals: output size != vocab");
  std::size_t use = std::min(prefix.size(), static_cast<std::size_t>(order_));
  auto ctx = prefix.subspan(prefix.size() - use, use);
  const Row* row = find_(ctx);
  double v = static_cast<double>(vocab_);
  if (row == nullptr) {
    std::fill(probs_out.begin(), probs_out.end(), 1.0 / v);
    return;
  }
  double den = static_cast<double>(row->total) + smoothing_ * v;
  for (std::size_t i = 0; i < probs_out.size(); ++i)
    probs_out[i] = (static_cast<double>(row->counts[i]) + smoothing_) / den;
}

double ARModel::logprob(const TokenSeq& x0) const {
  if (x0.vocab != vocab_) throw PreconditionError("ar logprob: vocab mismatch");
  if (!x0.fully_unmasked()) throw PreconditionError("ar logprob: x0 must contain no masks");
  double lp = 0.0;
  std::span<const Token> all(x0.tokens);
  for (std::size_t i = 0; i < x0.size(); ++i) lp += cond_logprob(all.first(i), x0[i]);
  return lp;
}

TokenSeq ARModel::sample_sequence(std::size_t len, RngStream& rng) const {
  TokenSeq out(std::vector<Token>(), vocab_);
  out.tokens.reserve(len);
  std::vector<double> probs(static_cast<std::size_t>(vocab_));
  for (std::size_t i = 0; i < len; ++i) {
    conditionals(std::span<const Token>(out.tokens), probs);
    out.tokens.push_back(static_cast<Token>(rng.next_categorical(probs)));
  }
  return out;
}

std::vector<ARModel::CountRow> ARModel::export_counts() const {
  std::vector<CountRow> rows;
  std::uint64_t base = static_cast<std::uint64_t>(vocab_) + 1;
  for (int c = 0; c <= order_; ++c) {
    const auto& table = tables_[static_cast<std::size_t>(c)];
    std::vector<std::uint64_t> keys;
    keys.reserve(table.size());
    for (const auto& [k, _] : table) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (std::uint64_t key : keys) {
      CountRow row;
      row.context_len = c;
      row.context.resize(static_cast<std::size_t>(c));
      std::uint64_t k = key;
      for (int j = c - 1; j >= 0; --j) {
        row.context[static_cast<std::size_t>(j)] = static_cast<Token>(k % base - 1);
        k /= base;
      }
      row.counts = table.at(key).counts;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void ARModel::import_counts(const std::vector<CountRow>& rows) {
  for (const auto& r : rows) {
    if (r.context_len < 0 || r.context_len > order_ ||
        r.counts.size() != static_cast<std::size_t>(vocab_))
      throw DataError("ar import: malformed count row");
    Row& row = tables_[static_cast<std::size_t>(r.context_len)][pack_(r.context)];
    row.counts = r.counts;
    row.total = 0;
    for (std::uint64_t n : row.counts) row.total += n;
  }
}

ARModel ar_fit(std::span<const Token> corpus, Token vocab, int order, double smoothing) {
  ARModel m(vocab, order, smoothing);
  m.fit(corpus);
  return m;
}

}  // namespace ebdiff
