#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebdiff/ar_model.hpp"
#include "ebdiff/denoiser.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/types.hpp"

// File formats: UTF-8 text corpora, JSON model checkpoints, commented CSV.
// Everything written here is deterministic byte-for-byte given the same
// inputs; reruns with a fixed seed must diff clean.
namespace ebdiff {

// Token id <-> code point table; ids are positions in the sorted list.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<char32_t> code_points);  // sorted + deduplicated

  Token size() const { return static_cast<Token>(code_points_.size()); }
  char32_t code_point(Token id) const;
  // -1 when the code point is not in the vocabulary.
  Token token_of(char32_t cp) const;
  std::span<const char32_t> code_points() const { return code_points_; }

 private:
  std::vector<char32_t> code_points_;
};

// 'a'..'z' plus space: the classic 27-symbol character set.
Vocabulary text8_vocabulary();

// Strict UTF-8; malformed input raises DataError naming the byte offset.
std::u32string utf8_decode(std::string_view bytes);
std::string utf8_encode(std::u32string_view text);

struct Corpus {
  std::vector<Token> tokens;
  Vocabulary vocab;
};

// policy "text8": fixed a-z+space vocabulary, any other character is a
// DataError naming its position. policy "infer": vocabulary = sorted unique
// code points of the text.
Corpus tokenize_text(std::string_view utf8_text, std::string_view policy);
Corpus load_corpus(const std::string& path, std::string_view policy);

std::vector<Token> tokenize(std::u32string_view text, const Vocabulary& vocab);
std::string detokenize(std::span<const Token> tokens, const Vocabulary& vocab);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

// FNV-1a 64 of raw bytes, rendered as 16 hex digits; stamped into checkpoint
// metadata and CSV headers so outputs can be traced to their exact inputs.
std::string fnv1a_hex(std::string_view bytes);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  std::string corpus_digest;
};

// JSON checkpoints. Doubles survive the round trip bit-exactly (shortest
// round-trip serialization); object keys serialize sorted, so saving the same
// model twice yields identical bytes.
void save_ar_model(const std::string& path, const ARModel& model, const Vocabulary& vocab,
                   const CheckpointMeta& meta);
ARModel load_ar_model(const std::string& path, Vocabulary* vocab_out = nullptr,
                      CheckpointMeta* meta_out = nullptr);

void save_denoiser(const std::string& path, const FactorizedDenoiser& model,
                   const Vocabulary& vocab, const CheckpointMeta& meta);
FactorizedDenoiser load_denoiser(const std::string& path, Vocabulary* vocab_out = nullptr,
                                 CheckpointMeta* meta_out = nullptr);

void save_nce_energy(const std::string& path, const NceEnergy& energy, const Vocabulary& vocab,
                     const CheckpointMeta& meta);
NceEnergy load_nce_energy(const std::string& path, Vocabulary* vocab_out = nullptr,
                          CheckpointMeta* meta_out = nullptr);

// CSV with '#'-prefixed header comments (seed, digests, config) ahead of the
// column row. Numbers format with shortest round-trip precision.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::span<const std::string> columns,
            std::span<const std::string> comments);
  void row(std::span<const double> values);
  void row_strings(std::span<const std::string> values);

 private:
  std::ostream* out_;
  std::size_t columns_;
};

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace ebdiff
