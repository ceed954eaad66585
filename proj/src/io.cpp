#include "ebdiff/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "ebdiff/errors.hpp"

namespace ebdiff {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

[[noreturn]] void bad_utf8(std::size_t offset) {
  throw DataError("invalid UTF-8 at byte " + std::to_string(offset));
}

json meta_to_json(const CheckpointMeta& meta) {
  return json{{"seed", meta.seed}, {"steps", meta.steps}, {"corpus_digest", meta.corpus_digest}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.steps = j.at("steps").get<std::uint64_t>();
  m.corpus_digest = j.at("corpus_digest").get<std::string>();
  return m;
}

json vocab_to_json(const Vocabulary& vocab) {
  std::vector<std::uint32_t> cps;
  cps.reserve(static_cast<std::size_t>(vocab.size()));
  for (char32_t cp : vocab.code_points()) cps.push_back(static_cast<std::uint32_t>(cp));
  return json{{"code_points", cps}};
}

Vocabulary vocab_from_json(const json& j) {
  std::vector<char32_t> cps;
  for (std::uint32_t v : j.at("code_points").get<std::vector<std::uint32_t>>())
    cps.push_back(static_cast<char32_t>(v));
  return Vocabulary(std::move(cps));
}

json load_checkpoint_json(const std::string& path, std::string_view expect_kind) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("kind") || !j.contains("format_version"))
    throw DataError("checkpoint " + path + ": not a model checkpoint");
  if (j.at("format_version").get<int>() != kFormatVersion)
    throw DataError("checkpoint " + path + ": unsupported format version");
  if (j.at("kind").get<std::string>() != expect_kind)
    throw DataError("checkpoint " + path + ": kind is '" + j.at("kind").get<std::string>() +
                    "', expected '" + std::string(expect_kind) + "'");
  return j;
}

void write_checkpoint_json(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

Vocabulary::Vocabulary(std::vector<char32_t> code_points) : code_points_(std::move(code_points)) {
  std::sort(code_points_.begin(), code_points_.end());
  code_points_.erase(std::unique(code_points_.begin(), code_points_.end()), code_points_.end());
  if (code_points_.empty()) throw DataError("empty vocabulary");
}

char32_t Vocabulary::code_point(Token id) const {
  if (id < 0 || id >= size()) throw PreconditionError("token id outside the vocabulary");
  return code_points_[static_cast<std::size_t>(id)];
}

Token Vocabulary::token_of(char32_t cp) const {
  auto it = std::lower_bound(code_points_.begin(), code_points_.end(), cp);
  if (it == code_points_.end() || *it != cp) return -1;
  return static_cast<Token>(it - code_points_.begin());
}

Vocabulary text8_vocabulary() {
  std::vector<char32_t> cps;
  cps.push_back(U' ');
  for (char32_t c = U'a'; c <= U'z'; ++c) cps.push_back(c);
  return Vocabulary(std::move(cps));
}

std::u32string utf8_decode(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    std::size_t extra;
    char32_t cp;
    if (b0 < 0x80) {
      extra = 0;
      cp = b0;
    } else if (b0 >= 0xc2 && b0 <= 0xdf) {
      extra = 1;
      cp = b0 & 0x1fu;
    } else if (b0 >= 0xe0 && b0 <= 0xef) {
      extra = 2;
      cp = b0 & 0x0fu;
    } else if (b0 >= 0xf0 && b0 <= 0xf4) {
      extra = 3;
      cp = b0 & 0x07u;
    } else {
      bad_utf8(i);
    }
    if (i + extra >= bytes.size()) bad_utf8(i);
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xc0u) != 0x80u) bad_utf8(i + k);
      cp = (cp << 6) | (b & 0x3fu);
    }
    // Overlong forms, surrogates, and > U+10FFFF are errors.
    static constexpr char32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) bad_utf8(i);
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))
      throw DataError("code point outside the UTF-8 range");
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xc0u | (cp >> 6)));
      out.push_back(static_cast<char>(0x80u | (cp & 0x3fu)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xe0u | (cp >> 12)));
      out.push_back(static_cast<char>(0x80u | ((cp >> 6) & 0x3fu)));
      out.push_back(static_cast<char>(0x80u | (cp & 0x3fu)));
    } else {
      out.push_back(static_cast<char>(0xf0u | (cp >> 18)));
      out.push_back(static_cast<char>(0x80u | ((cp >> 12) & 0x3fu)));
      out.push_back(static_cast<char>(0x80u | ((cp >> 6) & 0x3fu)));
      out.push_back(static_cast<char>(0x80u | (cp & 0x3fu)));
    }
  }
  return out;
}

Corpus tokenize_text(std::string_view utf8_text, std::string_view policy) {
  const std::u32string text = utf8_decode(utf8_text);
  if (text.empty()) throw DataError("empty corpus");
  Corpus c;
  if (policy == "text8") {
    c.vocab = text8_vocabulary();
  } else if (policy == "infer") {
    c.vocab = Vocabulary(std::vector<char32_t>(text.begin(), text.end()));
  } else {
    throw ConfigError("unknown vocabulary policy '" + std::string(policy) + "'");
  }
  c.tokens.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const Token t = c.vocab.token_of(text[i]);
    if (t < 0)
      throw DataError("character at position " + std::to_string(i) +
                      " is outside the text8 vocabulary");
    c.tokens.push_back(t);
  }
  return c;
}

Corpus load_corpus(const std::string& path, std::string_view policy) {
  return tokenize_text(read_text_file(path), policy);
}

std::vector<Token> tokenize(std::u32string_view text, const Vocabulary& vocab) {
  std::vector<Token> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const Token t = vocab.token_of(text[i]);
    if (t < 0)
      throw DataError("character at position " + std::to_string(i) +
                      " is outside the vocabulary");
    out.push_back(t);
  }
  return out;
}

std::string detokenize(std::span<const Token> tokens, const Vocabulary& vocab) {
  std::u32string text;
  text.reserve(tokens.size());
  for (Token t : tokens) text.push_back(vocab.code_point(t));
  return utf8_encode(text);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw DataError("read failed on " + path);
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed on " + path);
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_ar_model(const std::string& path, const ARModel& model, const Vocabulary& vocab,
                   const CheckpointMeta& meta) {
  json rows = json::array();
  for (const ARModel::CountRow& r : model.export_counts()) {
    rows.push_back(json{{"len", r.context_len}, {"ctx", r.context}, {"counts", r.counts}});
  }
  const json j{{"format_version", kFormatVersion},
               {"kind", "ar-ngram"},
               {"vocab", vocab_to_json(vocab)},
               {"model",
                {{"vocab_size", model.vocab()},
                 {"order", model.order()},
                 {"smoothing", model.smoothing()},
                 {"tokens_seen", model.tokens_seen()},
                 {"rows", std::move(rows)}}},
               {"metadata", meta_to_json(meta)}};
  write_checkpoint_json(path, j);
}

ARModel load_ar_model(const std::string& path, Vocabulary* vocab_out,
                      CheckpointMeta* meta_out) {
  const json j = load_checkpoint_json(path, "ar-ngram");
  const json& m = j.at("model");
  ARModel model(m.at("vocab_size").get<Token>(), m.at("order").get<int>(),
                m.at("smoothing").get<double>());
  std::vector<ARModel::CountRow> rows;
  for (const json& r : m.at("rows")) {
    ARModel::CountRow row;
    row.context_len = r.at("len").get<int>();
    row.context = r.at("ctx").get<std::vector<Token>>();
    row.counts = r.at("counts").get<std::vector<std::uint64_t>>();
    rows.push_back(std::move(row));
  }
  model.import_counts(rows);
  model.set_tokens_seen(m.at("tokens_seen").get<std::uint64_t>());
  if (vocab_out != nullptr) *vocab_out = vocab_from_json(j.at("vocab"));
  if (meta_out != nullptr) *meta_out = meta_from_json(j.at("metadata"));
  return model;
}

void save_denoiser(const std::string& path, const FactorizedDenoiser& model,
                   const Vocabulary& vocab, const CheckpointMeta& meta) {
  const std::span<const double> p = model.params();
  const json j{{"format_version", kFormatVersion},
               {"kind", "denoiser-window"},
               {"vocab", vocab_to_json(vocab)},
               {"model",
                {{"vocab_size", model.vocab()},
                 {"context_radius", model.context_radius()},
                 {"params", std::vector<double>(p.begin(), p.end())}}},
               {"metadata", meta_to_json(meta)}};
  write_checkpoint_json(path, j);
}

FactorizedDenoiser load_denoiser(const std::string& path, Vocabulary* vocab_out,
                                 CheckpointMeta* meta_out) {
  const json j = load_checkpoint_json(path, "denoiser-window");
  const json& m = j.at("model");
  FactorizedDenoiser model(m.at("vocab_size").get<Token>(), m.at("context_radius").get<int>());
  const auto params = m.at("params").get<std::vector<double>>();
  if (params.size() != model.param_count())
    throw DataError("checkpoint " + path + ": parameter count mismatch");
  std::copy(params.begin(), params.end(), model.params().begin());
  if (vocab_out != nullptr) *vocab_out = vocab_from_json(j.at("vocab"));
  if (meta_out != nullptr) *meta_out = meta_from_json(j.at("metadata"));
  return model;
}

void save_nce_energy(const std::string& path, const NceEnergy& energy, const Vocabulary& vocab,
                     const CheckpointMeta& meta) {
  const std::span<const double> p = energy.params();
  const json j{{"format_version", kFormatVersion},
               {"kind", "nce-energy"},
               {"vocab", vocab_to_json(vocab)},
               {"model",
                {{"vocab_size", energy.vocab()},
                 {"params", std::vector<double>(p.begin(), p.end())}}},
               {"metadata", meta_to_json(meta)}};
  write_checkpoint_json(path, j);
}

NceEnergy load_nce_energy(const std::string& path, Vocabulary* vocab_out,
                          CheckpointMeta* meta_out) {
  const json j = load_checkpoint_json(path, "nce-energy");
  const json& m = j.at("model");
  NceEnergy energy(m.at("vocab_size").get<Token>());
  const auto params = m.at("params").get<std::vector<double>>();
  if (params.size() != energy.feature_count())
    throw DataError("checkpoint " + path + ": parameter count mismatch");
  std::copy(params.begin(), params.end(), energy.params().begin());
  if (vocab_out != nullptr) *vocab_out = vocab_from_json(j.at("vocab"));
  if (meta_out != nullptr) *meta_out = meta_from_json(j.at("metadata"));
  return energy;
}

CsvWriter::CsvWriter(std::ostream& out, std::span<const std::string> columns,
                     std::span<const std::string> comments)
    : out_(&out), columns_(columns.size()) {
  if (columns.empty()) throw PreconditionError("csv needs at least one column");
  for (const std::string& c : comments) *out_ << "# " << c << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i)
    *out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != columns_) throw PreconditionError("csv row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    *out_ << format_double(values[i]) << (i + 1 < values.size() ? "," : "\n");
}

void CsvWriter::row_strings(std::span<const std::string> values) {
  if (values.size() != columns_) throw PreconditionError("csv row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    *out_ << values[i] << (i + 1 < values.size() ? "," : "\n");
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace ebdiff
