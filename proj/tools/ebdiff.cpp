#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ebdiff/ar_model.hpp"
#include "ebdiff/denoiser.hpp"
#include "ebdiff/diffusion.hpp"
#include "ebdiff/energy.hpp"
#include "ebdiff/errors.hpp"
#include "ebdiff/eval.hpp"
#include "ebdiff/io.hpp"
#include "ebdiff/nce.hpp"
#include "ebdiff/oracle.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/sampler.hpp"
#include "ebdiff/schedule.hpp"
#include "ebdiff/types.hpp"
#include "ebdiff/verify.hpp"

namespace {

using namespace ebdiff;

// Canonical key=value joins hashed into the config digest stamped on outputs,
// so a result file names the exact settings that produced it.
class ConfigDigest {
 public:
  explicit ConfigDigest(std::string_view cmd) { add("cmd", std::string(cmd)); }
  void add(std::string_view key, const std::string& value) {
    s_ += std::string(key) + "=" + value + ";";
  }
  void add(std::string_view key, std::uint64_t value) { add(key, std::to_string(value)); }
  void add(std::string_view key, int value) { add(key, std::to_string(value)); }
  void add(std::string_view key, double value) { add(key, format_double(value)); }
  std::string hex() const { return fnv1a_hex(s_); }

 private:
  std::string s_;
};

NoiseSchedule make_schedule(const std::string& kind, double c) {
  NoiseSchedule s;
  s.kind = schedule_kind_from_string(kind);
  s.c = c;
  return s;
}

// Shared corpus options.
struct CorpusOpts {
  std::string path;
  std::string policy = "text8";
  double heldout_frac = 0.1;
};

// with_policy is false for commands that read a checkpoint: those tokenize
// with the checkpoint's own vocabulary, since a freshly inferred alphabet can
// silently assign different ids to the same characters.
void add_corpus_opts(CLI::App* cmd, CorpusOpts& o, bool with_heldout, bool with_policy = true) {
  cmd->add_option("--corpus", o.path, "UTF-8 text file")->required();
  if (with_policy)
    cmd->add_option("--policy", o.policy, "vocabulary policy: text8 | infer")
        ->check(CLI::IsMember({"text8", "infer"}));
  if (with_heldout)
    cmd->add_option("--heldout-frac", o.heldout_frac, "tail fraction held out for the trace")
        ->check(CLI::Range(0.0, 0.5));
}

struct SchedOpts {
  std::string kind = "linear";
  double c = 1.0;
};

void add_sched_opts(CLI::App* cmd, SchedOpts& o) {
  cmd->add_option("--schedule", o.kind, "masking schedule: linear | loglinear")
      ->check(CLI::IsMember({"linear", "loglinear"}));
  cmd->add_option("--schedule-c", o.c, "loglinear exponent");
}

// Optional energy attached to a sampler or evaluator. Exactly one of --energy
// (learned) or --ar-energy (reference model, with --coar for the carry-over
// variant) may be given.
struct EnergyOpts {
  std::string nce_path;
  std::string ar_path;
  bool coar = false;
};

void add_energy_opts(CLI::App* cmd, EnergyOpts& o) {
  auto* nce = cmd->add_option("--energy", o.nce_path, "learned energy checkpoint");
  auto* ar = cmd->add_option("--ar-energy", o.ar_path, "reference-model energy checkpoint");
  cmd->add_flag("--coar", o.coar, "carry-over variant of --ar-energy (self-normalized)");
  nce->excludes(ar);
}

struct LoadedEnergy {
  std::unique_ptr<ARModel> ar;         // keeps the reference model alive for ArEnergy
  std::unique_ptr<EnergyModel> model;  // null when no energy requested
  std::string digest;                  // checkpoint file digest, "" when none
};

LoadedEnergy load_energy(const EnergyOpts& o) {
  if (o.coar && o.ar_path.empty()) throw ConfigError("--coar needs --ar-energy");
  LoadedEnergy out;
  if (!o.nce_path.empty()) {
    out.digest = fnv1a_hex(read_text_file(o.nce_path));
    out.model = std::make_unique<NceEnergy>(load_nce_energy(o.nce_path));
  } else if (!o.ar_path.empty()) {
    out.ar = std::make_unique<ARModel>(load_ar_model(o.ar_path));
    out.digest = fnv1a_hex(read_text_file(o.ar_path));
    out.model = std::make_unique<ArEnergy>(*out.ar, o.coar);
  }
  return out;
}

std::vector<std::string> csv_comments(std::uint64_t seed, const std::string& config_digest,
                                      const std::string& corpus_digest = "") {
  std::vector<std::string> c{"format-version=1", "seed=" + std::to_string(seed),
                             "config-digest=" + config_digest};
  if (!corpus_digest.empty()) c.push_back("corpus-digest=" + corpus_digest);
  return c;
}

void write_trace_csv(const std::string& path, const std::vector<TrainTraceRow>& trace,
                     const std::vector<std::string>& comments) {
  std::ostringstream ss;
  const std::vector<std::string> cols{"step", "train_loss", "heldout_loss"};
  CsvWriter csv(ss, cols, comments);
  for (const TrainTraceRow& r : trace) {
    const double vals[] = {static_cast<double>(r.step), r.train_loss, r.heldout_loss};
    csv.row(vals);
  }
  write_text_file(path, ss.str());
}

// Tail split for the heldout trace; too-short tails fall back to empty (the
// trainers then reuse training data for the fixed evaluation tuples).
std::pair<std::span<const Token>, std::span<const Token>> split_heldout(
    std::span<const Token> tokens, double frac, std::size_t min_len) {
  const auto cut = static_cast<std::size_t>(static_cast<double>(tokens.size()) * frac);
  if (cut < min_len) return {tokens, {}};
  return {tokens.subspan(0, tokens.size() - cut), tokens.subspan(tokens.size() - cut)};
}

// ---- fit-ar ----

struct FitArOpts {
  CorpusOpts corpus;
  int order = 3;
  double smoothing = 0.1;
  std::string out;
  std::uint64_t seed = 1;
};

int run_fit_ar(const FitArOpts& o) {
  const std::string text = read_text_file(o.corpus.path);
  const Corpus corpus = tokenize_text(text, o.corpus.policy);
  const ARModel model = ar_fit(corpus.tokens, corpus.vocab.size(), o.order, o.smoothing);
  ConfigDigest cfg("fit-ar");
  cfg.add("corpus", fnv1a_hex(text));
  cfg.add("policy", o.corpus.policy);
  cfg.add("order", o.order);
  cfg.add("smoothing", o.smoothing);
  CheckpointMeta meta;
  meta.seed = o.seed;
  meta.steps = 0;
  meta.corpus_digest = fnv1a_hex(text);
  save_ar_model(o.out, model, corpus.vocab, meta);
  std::cout << "fit-ar: vocab=" << model.vocab() << " order=" << model.order()
            << " tokens=" << model.tokens_seen() << " config=" << cfg.hex() << " -> " << o.out
            << "\n";
  return 0;
}

// ---- train-denoiser ----

struct TrainDenoiserOpts {
  CorpusOpts corpus;
  SchedOpts sched;
  int radius = 2;
  int steps = 20000;
  double lr = 0.1;
  std::size_t seq_len = 64;
  double weight_cap = 20.0;
  int trace_every = 200;
  std::string trace_path;
  std::string out;
  std::uint64_t seed = 1;
};

int run_train_denoiser(const TrainDenoiserOpts& o) {
  const std::string text = read_text_file(o.corpus.path);
  const Corpus corpus = tokenize_text(text, o.corpus.policy);
  const NoiseSchedule sched = make_schedule(o.sched.kind, o.sched.c);
  const auto [train, heldout] = split_heldout(corpus.tokens, o.corpus.heldout_frac, o.seq_len);

  FactorizedDenoiser model(corpus.vocab.size(), o.radius);
  DenoiserTrainConfig cfg;
  cfg.steps = o.steps;
  cfg.lr = o.lr;
  cfg.seq_len = o.seq_len;
  cfg.weight_cap = o.weight_cap;
  cfg.trace_every = o.trace_path.empty() ? 0 : o.trace_every;
  const RngStream rng = RngStream(o.seed).child("train-denoiser");
  const std::vector<TrainTraceRow> trace =
      denoiser_train(model, train, heldout, sched, cfg, rng);

  ConfigDigest dig("train-denoiser");
  dig.add("corpus", fnv1a_hex(text));
  dig.add("policy", o.corpus.policy);
  dig.add("schedule", o.sched.kind);
  dig.add("schedule-c", o.sched.c);
  dig.add("radius", o.radius);
  dig.add("steps", o.steps);
  dig.add("lr", o.lr);
  dig.add("seq-len", static_cast<std::uint64_t>(o.seq_len));
  dig.add("weight-cap", o.weight_cap);
  dig.add("heldout-frac", o.corpus.heldout_frac);
  dig.add("seed", o.seed);

  CheckpointMeta meta;
  meta.seed = o.seed;
  meta.steps = static_cast<std::uint64_t>(o.steps);
  meta.corpus_digest = fnv1a_hex(text);
  save_denoiser(o.out, model, corpus.vocab, meta);
  if (!o.trace_path.empty())
    write_trace_csv(o.trace_path, trace, csv_comments(o.seed, dig.hex(), meta.corpus_digest));
  std::cout << "train-denoiser: params=" << model.param_count()
            << " final_heldout=" << (trace.empty() ? 0.0 : trace.back().heldout_loss)
            << " config=" << dig.hex() << " -> " << o.out << "\n";
  return 0;
}

// ---- train-nce ----

struct TrainNceOpts {
  CorpusOpts corpus;
  SchedOpts sched;
  std::string denoiser_path;
  int steps = 30000;
  double lr = 0.05;
  std::size_t seq_len = 64;
  int trace_every = 200;
  std::string trace_path;
  std::string out;
  std::uint64_t seed = 1;
};

int run_train_nce(const TrainNceOpts& o) {
  const std::string text = read_text_file(o.corpus.path);
  const NoiseSchedule sched = make_schedule(o.sched.kind, o.sched.c);
  Vocabulary vocab;
  const FactorizedDenoiser denoiser = load_denoiser(o.denoiser_path, &vocab);
  const std::vector<Token> tokens = tokenize(utf8_decode(text), vocab);
  const auto [train, heldout] = split_heldout(tokens, o.corpus.heldout_frac, o.seq_len);

  NceEnergy energy(denoiser.vocab());
  NceTrainConfig cfg;
  cfg.steps = o.steps;
  cfg.lr = o.lr;
  cfg.seq_len = o.seq_len;
  cfg.trace_every = o.trace_path.empty() ? 0 : o.trace_every;
  const RngStream rng = RngStream(o.seed).child("train-nce");
  const std::vector<TrainTraceRow> trace = nce_train(energy, denoiser, train, heldout, sched,
                                                     cfg, rng);
  const NceSeparation sep =
      nce_separation(energy, denoiser, heldout.empty() ? train : heldout, sched, 256, o.seq_len,
                     rng.child("separation"));

  ConfigDigest dig("train-nce");
  dig.add("corpus", fnv1a_hex(text));
  dig.add("schedule", o.sched.kind);
  dig.add("schedule-c", o.sched.c);
  dig.add("denoiser", fnv1a_hex(read_text_file(o.denoiser_path)));
  dig.add("steps", o.steps);
  dig.add("lr", o.lr);
  dig.add("seq-len", static_cast<std::uint64_t>(o.seq_len));
  dig.add("heldout-frac", o.corpus.heldout_frac);
  dig.add("seed", o.seed);

  CheckpointMeta meta;
  meta.seed = o.seed;
  meta.steps = static_cast<std::uint64_t>(o.steps);
  meta.corpus_digest = fnv1a_hex(text);
  save_nce_energy(o.out, energy, vocab, meta);
  if (!o.trace_path.empty())
    write_trace_csv(o.trace_path, trace, csv_comments(o.seed, dig.hex(), meta.corpus_digest));
  std::cout << "train-nce: final_heldout="
            << (trace.empty() ? 0.0 : trace.back().heldout_loss)
            << " energy_gap=" << sep.gap_mean << " (se " << sep.gap_se << ")"
            << " config=" << dig.hex() << " -> " << o.out << "\n";
  return 0;
}

// ---- sample ----

struct SampleOpts {
  std::string denoiser_path;
  EnergyOpts energy;
  SchedOpts sched;
  int steps = 32;
  int k = 8;
  double window = 1.0;
  std::size_t len = 64;
  std::size_t num = 16;
  std::string out;
  std::uint64_t seed = 1;
};

int run_sample(const SampleOpts& o) {
  Vocabulary vocab;
  const FactorizedDenoiser denoiser = load_denoiser(o.denoiser_path, &vocab);
  const LoadedEnergy energy = load_energy(o.energy);
  const NoiseSchedule sched = make_schedule(o.sched.kind, o.sched.c);
  SamplerConfig cfg;
  cfg.steps = o.steps;
  cfg.k = o.k;
  cfg.window = o.window;

  ConfigDigest dig("sample");
  dig.add("denoiser", fnv1a_hex(read_text_file(o.denoiser_path)));
  dig.add("energy", energy.digest.empty() ? "none" : energy.digest);
  dig.add("coar", o.energy.coar ? 1 : 0);
  dig.add("schedule", o.sched.kind);
  dig.add("schedule-c", o.sched.c);
  dig.add("steps", o.steps);
  dig.add("k", o.k);
  dig.add("window", o.window);
  dig.add("len", static_cast<std::uint64_t>(o.len));
  dig.add("num", static_cast<std::uint64_t>(o.num));
  dig.add("seed", o.seed);

  const RngStream rng = RngStream(o.seed).child("sample");
  std::ostringstream ss;
  ss << "# seed=" << o.seed << " config-digest=" << dig.hex() << "\n";
  for (std::size_t i = 0; i < o.num; ++i) {
    const RngStream ri = rng.child_indexed("sequence", i);
    const TokenSeq s =
        energy.model ? sample_energy(denoiser, *energy.model, sched, o.len, cfg, ri)
                     : sample_base(denoiser, sched, o.len, cfg, ri);
    ss << detokenize(s.tokens, vocab) << "\n";
  }
  write_text_file(o.out, ss.str());
  std::cout << "sample: num=" << o.num << " len=" << o.len << " config=" << dig.hex() << " -> "
            << o.out << "\n";
  return 0;
}

// ---- eval ----

struct EvalOpts {
  CorpusOpts corpus;
  SchedOpts sched;
  std::string denoiser_path;
  EnergyOpts energy;
  std::size_t chunk_len = 64;
  int mc_samples = 64;
  int partition_n = 64;
  int discrete_T = 0;  // 0 = continuous-time bound
  std::string samples_path;  // alternative mode: score a sample file
  std::string oracle_path;   // reference model for the sample file
  std::string out;
  std::uint64_t seed = 1;
};

int run_eval_samples(const EvalOpts& o) {
  Vocabulary vocab;
  const ARModel oracle_model = load_ar_model(o.oracle_path, &vocab);
  const std::string text = read_text_file(o.samples_path);
  std::vector<TokenSeq> samples;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    samples.push_back(TokenSeq(tokenize(utf8_decode(line), vocab), oracle_model.vocab()));
  }
  const GenerativeMetrics gm = generative_metrics(samples, oracle_model);
  ConfigDigest dig("eval-samples");
  dig.add("samples", fnv1a_hex(text));
  dig.add("oracle", fnv1a_hex(read_text_file(o.oracle_path)));
  if (!o.out.empty()) {
    std::ostringstream ss;
    const std::vector<std::string> cols{"sequences", "gen_ppl", "entropy", "nll_mean", "nll_se"};
    CsvWriter csv(ss, cols, csv_comments(o.seed, dig.hex()));
    const double vals[] = {static_cast<double>(gm.sequences), gm.gen_ppl, gm.entropy,
                           gm.nll_mean, gm.nll_se};
    csv.row(vals);
    write_text_file(o.out, ss.str());
  }
  std::cout << "eval-samples: sequences=" << gm.sequences << " gen_ppl=" << gm.gen_ppl
            << " entropy=" << gm.entropy << " nll=" << gm.nll_mean << "+-" << gm.nll_se
            << " config=" << dig.hex() << "\n";
  return 0;
}

int run_eval(const EvalOpts& o) {
  if (!o.samples_path.empty()) return run_eval_samples(o);
  const std::string text = read_text_file(o.corpus.path);
  Vocabulary vocab;
  const FactorizedDenoiser denoiser = load_denoiser(o.denoiser_path, &vocab);
  const std::vector<Token> tokens = tokenize(utf8_decode(text), vocab);
  const LoadedEnergy energy = load_energy(o.energy);
  const ZeroEnergy zero;
  const EnergyModel& em = energy.model ? *energy.model : static_cast<const EnergyModel&>(zero);
  const NoiseSchedule sched = make_schedule(o.sched.kind, o.sched.c);

  CorpusEvalConfig cfg;
  cfg.chunk_len = o.chunk_len;
  cfg.nelbo.mc_samples = o.mc_samples;
  cfg.nelbo.partition_n = o.partition_n;
  cfg.continuous = o.discrete_T == 0;
  cfg.discrete_T = o.discrete_T == 0 ? 8 : o.discrete_T;

  const RngStream rng = RngStream(o.seed).child("eval");
  const std::vector<MetricsRow> rows = corpus_metrics(denoiser, em, tokens, sched, cfg, rng);

  ConfigDigest dig("eval");
  dig.add("corpus", fnv1a_hex(text));
  dig.add("denoiser", fnv1a_hex(read_text_file(o.denoiser_path)));
  dig.add("energy", energy.digest.empty() ? "none" : energy.digest);
  dig.add("coar", o.energy.coar ? 1 : 0);
  dig.add("schedule", o.sched.kind);
  dig.add("schedule-c", o.sched.c);
  dig.add("chunk-len", static_cast<std::uint64_t>(o.chunk_len));
  dig.add("mc-samples", o.mc_samples);
  dig.add("partition-n", o.partition_n);
  dig.add("discrete-T", o.discrete_T);
  dig.add("seed", o.seed);

  double mean_nelbo = 0.0, mean_ess = 0.0;
  std::size_t ess_rows = 0;
  for (const MetricsRow& r : rows) {
    mean_nelbo += r.nelbo;
    if (r.ess == r.ess) {
      mean_ess += r.ess;
      ++ess_rows;
    }
  }
  mean_nelbo /= static_cast<double>(rows.size());
  const double bpc = mean_nelbo / std::log(2.0);
  const double ppl = std::exp(mean_nelbo);

  if (!o.out.empty()) {
    std::ostringstream ss;
    const std::vector<std::string> cols{"doc", "nelbo", "bpc", "ppl", "ess"};
    CsvWriter csv(ss, cols, csv_comments(o.seed, dig.hex(), fnv1a_hex(text)));
    for (std::size_t d = 0; d < rows.size(); ++d) {
      const double vals[] = {static_cast<double>(d), rows[d].nelbo, rows[d].bpc, rows[d].ppl,
                             rows[d].ess};
      csv.row(vals);
    }
    write_text_file(o.out, ss.str());
  }
  std::cout << "eval: docs=" << rows.size() << " nelbo=" << mean_nelbo << " bpc=" << bpc
            << " ppl=" << ppl;
  if (ess_rows > 0) std::cout << " ess=" << mean_ess / static_cast<double>(ess_rows);
  std::cout << " config=" << dig.hex() << (o.out.empty() ? "" : " -> " + o.out) << "\n";
  return 0;
}

// ---- bench ----

struct BenchOpts {
  std::string denoiser_path;
  EnergyOpts energy;
  SchedOpts sched;
  std::string oracle_path;
  std::vector<int> steps{8, 32};
  std::vector<int> ks{1, 8};
  std::vector<double> windows{0.0, 1.0};
  std::size_t len = 64;
  std::size_t num = 200;
  bool timings = false;
  std::string out;
  std::uint64_t seed = 1;
};

int run_bench(const BenchOpts& o) {
  Vocabulary vocab;
  const FactorizedDenoiser denoiser = load_denoiser(o.denoiser_path, &vocab);
  const LoadedEnergy energy = load_energy(o.energy);
  std::unique_ptr<ARModel> oracle_model;
  if (!o.oracle_path.empty())
    oracle_model = std::make_unique<ARModel>(load_ar_model(o.oracle_path));
  const NoiseSchedule sched = make_schedule(o.sched.kind, o.sched.c);

  ConfigDigest dig("bench");
  dig.add("denoiser", fnv1a_hex(read_text_file(o.denoiser_path)));
  dig.add("energy", energy.digest.empty() ? "none" : energy.digest);
  dig.add("len", static_cast<std::uint64_t>(o.len));
  dig.add("num", static_cast<std::uint64_t>(o.num));
  dig.add("seed", o.seed);

  const RngStream rng = RngStream(o.seed).child("bench");
  nlohmann::json cells = nlohmann::json::array();
  std::uint64_t cell_idx = 0;
  for (int steps : o.steps) {
    for (int k : o.ks) {
      for (double w : o.windows) {
        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.k = k;
        cfg.window = w;
        const RngStream cell_rng = rng.child_indexed("cell", cell_idx);
        std::vector<TokenSeq> samples;
        samples.reserve(o.num);
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < o.num; ++i) {
          const RngStream ri = cell_rng.child_indexed("sequence", i);
          samples.push_back(energy.model
                                ? sample_energy(denoiser, *energy.model, sched, o.len, cfg, ri)
                                : sample_base(denoiser, sched, o.len, cfg, ri));
        }
        const auto t1 = std::chrono::steady_clock::now();
        nlohmann::json cell{{"steps", steps}, {"k", k}, {"window", w}};
        // Pooled per-token entropy of the cell's samples.
        std::vector<std::size_t> hist(static_cast<std::size_t>(denoiser.vocab()), 0);
        for (const TokenSeq& s : samples)
          for (Token t : s.tokens) hist[static_cast<std::size_t>(t)] += 1;
        double entropy = 0.0;
        const double total = static_cast<double>(o.num * o.len);
        for (std::size_t c : hist) {
          if (c == 0) continue;
          const double p = static_cast<double>(c) / total;
          entropy -= p * std::log(p);
        }
        cell["entropy"] = entropy;
        if (oracle_model) {
          const GenerativeMetrics gm = generative_metrics(samples, *oracle_model);
          cell["gen_ppl"] = gm.gen_ppl;
          cell["gen_nll"] = gm.nll_mean;
          cell["gen_nll_se"] = gm.nll_se;
        }
        if (o.timings) {
          cell["wall_ms"] =
              std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;
        }
        cells.push_back(std::move(cell));
        ++cell_idx;
      }
    }
  }
  const nlohmann::json report{{"config_digest", dig.hex()},
                              {"seed", o.seed},
                              {"len", o.len},
                              {"num", o.num},
                              {"cells", std::move(cells)}};
  write_text_file(o.out, report.dump(2) + "\n");
  std::cout << "bench: cells=" << cell_idx << " config=" << dig.hex() << " -> " << o.out << "\n";
  return 0;
}

// ---- verify ----

int run_verify(std::uint64_t seed) {
  const std::vector<VerifyCheck> checks = verify_all(seed);
  bool all_pass = true;
  for (const VerifyCheck& c : checks) {
    std::cout << (c.pass ? "PASS" : "FAIL") << " " << c.name << ": " << c.detail << "\n";
    all_pass = all_pass && c.pass;
  }
  std::cout << (all_pass ? "verify: all checks passed" : "verify: FAILURES above") << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked diffusion sequence models with energy-based residual correction"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read defaults from a TOML/INI file");

  FitArOpts fit_ar;
  auto* cmd_fit = app.add_subcommand("fit-ar", "fit an n-gram reference model");
  add_corpus_opts(cmd_fit, fit_ar.corpus, false);
  cmd_fit->add_option("--order", fit_ar.order)->check(CLI::Range(1, 8));
  cmd_fit->add_option("--smoothing", fit_ar.smoothing)->check(CLI::NonNegativeNumber);
  cmd_fit->add_option("--out", fit_ar.out, "checkpoint path")->required();
  cmd_fit->add_option("--seed", fit_ar.seed);

  TrainDenoiserOpts td;
  auto* cmd_td = app.add_subcommand("train-denoiser", "train the factorized predictor");
  add_corpus_opts(cmd_td, td.corpus, true);
  add_sched_opts(cmd_td, td.sched);
  cmd_td->add_option("--radius", td.radius)->check(CLI::Range(0, 8));
  cmd_td->add_option("--steps", td.steps)->check(CLI::NonNegativeNumber);
  cmd_td->add_option("--lr", td.lr)->check(CLI::PositiveNumber);
  cmd_td->add_option("--seq-len", td.seq_len);
  cmd_td->add_option("--weight-cap", td.weight_cap);
  cmd_td->add_option("--trace-every", td.trace_every);
  cmd_td->add_option("--trace", td.trace_path, "training trace CSV");
  cmd_td->add_option("--out", td.out, "checkpoint path")->required();
  cmd_td->add_option("--seed", td.seed);

  TrainNceOpts tn;
  auto* cmd_tn = app.add_subcommand("train-nce", "train the learned energy against a denoiser");
  add_corpus_opts(cmd_tn, tn.corpus, true, false);
  add_sched_opts(cmd_tn, tn.sched);
  cmd_tn->add_option("--denoiser", tn.denoiser_path, "denoiser checkpoint")->required();
  cmd_tn->add_option("--steps", tn.steps)->check(CLI::NonNegativeNumber);
  cmd_tn->add_option("--lr", tn.lr)->check(CLI::PositiveNumber);
  cmd_tn->add_option("--seq-len", tn.seq_len);
  cmd_tn->add_option("--trace-every", tn.trace_every);
  cmd_tn->add_option("--trace", tn.trace_path, "training trace CSV");
  cmd_tn->add_option("--out", tn.out, "checkpoint path")->required();
  cmd_tn->add_option("--seed", tn.seed);

  SampleOpts so;
  auto* cmd_s = app.add_subcommand("sample", "draw sequences from the reverse chain");
  cmd_s->add_option("--denoiser", so.denoiser_path)->required();
  add_energy_opts(cmd_s, so.energy);
  add_sched_opts(cmd_s, so.sched);
  cmd_s->add_option("--steps", so.steps)->check(CLI::PositiveNumber);
  cmd_s->add_option("--k", so.k)->check(CLI::PositiveNumber);
  cmd_s->add_option("--window", so.window)->check(CLI::Range(0.0, 1.0));
  cmd_s->add_option("--len", so.len);
  cmd_s->add_option("--num", so.num);
  cmd_s->add_option("--out", so.out, "sample text file")->required();
  cmd_s->add_option("--seed", so.seed);

  EvalOpts eo;
  auto* cmd_e = app.add_subcommand("eval", "likelihood bounds on a corpus, or score samples");
  cmd_e->add_option("--corpus", eo.corpus.path, "UTF-8 text file");
  add_sched_opts(cmd_e, eo.sched);
  cmd_e->add_option("--denoiser", eo.denoiser_path);
  add_energy_opts(cmd_e, eo.energy);
  cmd_e->add_option("--chunk-len", eo.chunk_len);
  cmd_e->add_option("--mc-samples", eo.mc_samples)->check(CLI::PositiveNumber);
  cmd_e->add_option("--partition-n", eo.partition_n)->check(CLI::PositiveNumber);
  cmd_e->add_option("--discrete-T", eo.discrete_T, "T-step bound instead of continuous (0 = continuous)");
  cmd_e->add_option("--samples", eo.samples_path, "sample file to score with --gen-oracle");
  cmd_e->add_option("--gen-oracle", eo.oracle_path, "reference model checkpoint for --samples");
  cmd_e->add_option("--out", eo.out, "metrics CSV");
  cmd_e->add_option("--seed", eo.seed);

  BenchOpts bo;
  auto* cmd_b = app.add_subcommand("bench", "sampler grid benchmark");
  cmd_b->add_option("--denoiser", bo.denoiser_path)->required();
  add_energy_opts(cmd_b, bo.energy);
  add_sched_opts(cmd_b, bo.sched);
  cmd_b->add_option("--gen-oracle", bo.oracle_path, "reference model for generative metrics");
  cmd_b->add_option("--steps", bo.steps)->delimiter(',');
  cmd_b->add_option("--k", bo.ks)->delimiter(',');
  cmd_b->add_option("--window", bo.windows)->delimiter(',');
  cmd_b->add_option("--len", bo.len);
  cmd_b->add_option("--num", bo.num);
  cmd_b->add_flag("--timings", bo.timings,
                  "include wall-clock times (makes reruns non-identical)");
  cmd_b->add_option("--out", bo.out, "JSON report")->required();
  cmd_b->add_option("--seed", bo.seed);

  std::uint64_t verify_seed = 1;
  auto* cmd_v = app.add_subcommand("verify", "run the built-in property checks");
  cmd_v->add_option("--seed", verify_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fit->parsed()) return run_fit_ar(fit_ar);
    if (cmd_td->parsed()) return run_train_denoiser(td);
    if (cmd_tn->parsed()) return run_train_nce(tn);
    if (cmd_s->parsed()) return run_sample(so);
    if (cmd_e->parsed()) {
      if (eo.samples_path.empty() && (eo.corpus.path.empty() || eo.denoiser_path.empty()))
        throw ConfigError("eval needs --corpus and --denoiser, or --samples with --gen-oracle");
      if (!eo.samples_path.empty() && eo.oracle_path.empty())
        throw ConfigError("--samples needs --gen-oracle");
      return run_eval(eo);
    }
    if (cmd_b->parsed()) return run_bench(bo);
    if (cmd_v->parsed()) return run_verify(verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
