#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ebdiff/errors.hpp"

namespace ebdiff {

using Token = std::int32_t;

// A sequence over a vocabulary of `vocab` data tokens 0..vocab-1 plus the
// distinguished mask token with id == vocab. Clean data sequences (x0) contain
// no masks; partially noised states (x_t) may.
struct TokenSeq {
  std::vector<Token> tokens;
  Token vocab = 0;

  TokenSeq() = default;
  TokenSeq(std::vector<Token> t, Token v) : tokens(std::move(t)), vocab(v) { validate(); }
  static TokenSeq filled(std::size_t len, Token value, Token vocab) {
    return TokenSeq(std::vector<Token>(len, value), vocab);
  }
  static TokenSeq all_masked(std::size_t len, Token vocab) { return filled(len, vocab, vocab); }

  Token mask_id() const { return vocab; }
  std::size_t size() const { return tokens.size(); }
  Token operator[](std::size_t i) const { return tokens[i]; }
  Token& operator[](std::size_t i) { return tokens[i]; }
  bool is_masked(std::size_t i) const { return tokens[i] == vocab; }

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (Token t : tokens) n += (t == vocab);
    return n;
  }
  bool fully_unmasked() const { return masked_count() == 0; }

  void validate() const {
    if (vocab < 1) throw DomainError("vocab size must be >= 1");
    for (Token t : tokens)
      if (t < 0 || t > vocab) throw DomainError("token id out of range");
  }

  bool operator==(const TokenSeq& o) const = default;
};

// Dense row-major matrix of doubles; rows() x cols() with contiguous rows.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }
  void fill(double v) { data_.assign(data_.size(), v); }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

}  // namespace ebdiff
