#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "ebdiff/io.hpp"
#include "support/fixtures.hpp"

// End-to-end runs of the installed binary. Commands execute through std::system
// with stdout/stderr captured into the scratch directory; every artifact write
// is compared byte-for-byte across reruns of the same seed.

using namespace ebdiff;
namespace fs = std::filesystem;

namespace {

const std::string kCli = EBDIFF_CLI_PATH;

struct Workspace {
  fs::path dir;
  Workspace() {
    std::string tpl = (fs::temp_directory_path() / "ebdiff-cli-XXXXXX").string();
    std::vector<char> buf(tpl.begin(), tpl.end());
    buf.push_back('\0');
    REQUIRE(mkdtemp(buf.data()) != nullptr);
    dir = buf.data();
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& log) {
  std::string cmd = "\"" + kCli + "\" " + args + " >" + log + " 2>&1";
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) { return read_text_file(path); }

}  // namespace

TEST_CASE("full pipeline with byte-identical reruns") {
  Workspace ws;
  std::vector<Token> tokens = ebtest::grammar_corpus(30000, 7);
  write_text_file(ws.p("corpus.txt"), ebtest::grammar_text(tokens));
  std::string log = ws.p("log.txt");

  // --- fit-ar ---
  std::string fit_args = "fit-ar --corpus " + ws.p("corpus.txt") +
                         " --policy infer --order 3 --smoothing 0.1 --seed 5 --out ";
  REQUIRE(run(fit_args + ws.p("ar1.json"), log) == 0);
  REQUIRE(run(fit_args + ws.p("ar2.json"), log) == 0);
  CHECK(slurp(ws.p("ar1.json")) == slurp(ws.p("ar2.json")));

  // --- train-denoiser ---
  std::string td_args = "train-denoiser --corpus " + ws.p("corpus.txt") +
                        " --policy infer --radius 1 --steps 200 --seq-len 32"
                        " --trace-every 50 --seed 5";
  REQUIRE(run(td_args + " --out " + ws.p("den1.json") + " --trace " + ws.p("trace1.csv"), log) ==
          0);
  REQUIRE(run(td_args + " --out " + ws.p("den2.json") + " --trace " + ws.p("trace2.csv"), log) ==
          0);
  CHECK(slurp(ws.p("den1.json")) == slurp(ws.p("den2.json")));
  CHECK(slurp(ws.p("trace1.csv")) == slurp(ws.p("trace2.csv")));
  CHECK(slurp(ws.p("trace1.csv")).find("step,train_loss,heldout_loss") != std::string::npos);

  // --- train-nce ---
  std::string tn_args = "train-nce --corpus " + ws.p("corpus.txt") +
                        " --denoiser " + ws.p("den1.json") +
                        " --steps 200 --seq-len 32 --seed 5";
  REQUIRE(run(tn_args + " --out " + ws.p("nce1.json"), log) == 0);
  REQUIRE(run(tn_args + " --out " + ws.p("nce2.json"), log) == 0);
  CHECK(slurp(ws.p("nce1.json")) == slurp(ws.p("nce2.json")));

  // --- sample: base, learned energy, reference energy ---
  std::string s_base = "sample --denoiser " + ws.p("den1.json") +
                       " --steps 16 --len 32 --num 8 --seed 9 --out ";
  REQUIRE(run(s_base + ws.p("samp1.txt"), log) == 0);
  REQUIRE(run(s_base + ws.p("samp2.txt"), log) == 0);
  CHECK(slurp(ws.p("samp1.txt")) == slurp(ws.p("samp2.txt")));

  std::string s_nce = "sample --denoiser " + ws.p("den1.json") + " --energy " + ws.p("nce1.json") +
                      " --steps 16 --k 4 --window 1.0 --len 32 --num 8 --seed 9 --out ";
  REQUIRE(run(s_nce + ws.p("samp_nce1.txt"), log) == 0);
  REQUIRE(run(s_nce + ws.p("samp_nce2.txt"), log) == 0);
  CHECK(slurp(ws.p("samp_nce1.txt")) == slurp(ws.p("samp_nce2.txt")));

  std::string s_ar = "sample --denoiser " + ws.p("den1.json") + " --ar-energy " + ws.p("ar1.json") +
                     " --coar --steps 16 --k 4 --window 1.0 --len 32 --num 8 --seed 9 --out ";
  REQUIRE(run(s_ar + ws.p("samp_ar.txt"), log) == 0);

  // samples are plain text lines over the corpus alphabet, after one header
  {
    std::string text = slurp(ws.p("samp1.txt"));
    CHECK(text.rfind("# seed=9", 0) == 0);
    std::size_t lines = 0;
    for (char ch : text) lines += ch == '\n';
    CHECK(lines == 9);  // header + 8 samples
  }

  // --- eval: corpus bound and sample scoring ---
  std::string small = ws.p("small.txt");
  write_text_file(small, ebtest::grammar_text(ebtest::grammar_corpus(256, 11)));
  std::string e_args = "eval --corpus " + small + " --denoiser " + ws.p("den1.json") +
                       " --ar-energy " + ws.p("ar1.json") +
                       " --chunk-len 64 --mc-samples 4 --partition-n 4 --seed 3 --out ";
  REQUIRE(run(e_args + ws.p("eval1.csv"), log) == 0);
  REQUIRE(run(e_args + ws.p("eval2.csv"), log) == 0);
  CHECK(slurp(ws.p("eval1.csv")) == slurp(ws.p("eval2.csv")));
  CHECK(slurp(ws.p("eval1.csv")).find("nelbo") != std::string::npos);

  std::string g_args = "eval --samples " + ws.p("samp1.txt") + " --gen-oracle " + ws.p("ar1.json") +
                       " --seed 3 --out ";
  REQUIRE(run(g_args + ws.p("gen1.csv"), log) == 0);
  REQUIRE(run(g_args + ws.p("gen2.csv"), log) == 0);
  CHECK(slurp(ws.p("gen1.csv")) == slurp(ws.p("gen2.csv")));
  CHECK(slurp(ws.p("gen1.csv")).find("gen_ppl") != std::string::npos);

  // --- bench ---
  std::string b_args = "bench --denoiser " + ws.p("den1.json") + " --ar-energy " + ws.p("ar1.json") +
                       " --gen-oracle " + ws.p("ar1.json") +
                       " --steps 8 --k 1,4 --window 0,1 --len 24 --num 4 --seed 13 --out ";
  REQUIRE(run(b_args + ws.p("bench1.json"), log) == 0);
  REQUIRE(run(b_args + ws.p("bench2.json"), log) == 0);
  CHECK(slurp(ws.p("bench1.json")) == slurp(ws.p("bench2.json")));
  CHECK(slurp(ws.p("bench1.json")).find("cells") != std::string::npos);
}

TEST_CASE("verify subcommand passes, also with the scalar backend pinned") {
  Workspace ws;
  std::string log = ws.p("verify.txt");
  CHECK(run("verify --seed 42", log) == 0);
  CHECK(slurp(log).find("FAIL") == std::string::npos);
  CHECK(slurp(log).find("PASS") != std::string::npos);

  std::string cmd = "EBDIFF_KERNELS=scalar \"" + kCli + "\" verify --seed 42 >" + ws.p("v2.txt") +
                    " 2>&1";
  int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 0);
}

TEST_CASE("bad invocations exit nonzero with a message") {
  Workspace ws;
  std::string log = ws.p("err.txt");
  CHECK(run("", log) != 0);                            // a subcommand is required
  CHECK(run("frobnicate", log) != 0);                  // unknown subcommand
  CHECK(run("fit-ar --out x.json", log) != 0);         // missing required --corpus
  CHECK(run("fit-ar --corpus /no/such/file --out " + ws.p("x.json"), log) == 2);
  CHECK(slurp(log).find("error:") != std::string::npos);

  // --coar without a reference energy is a configuration error
  std::vector<Token> tokens = ebtest::grammar_corpus(2000, 3);
  write_text_file(ws.p("c.txt"), ebtest::grammar_text(tokens));
  REQUIRE(run("train-denoiser --corpus " + ws.p("c.txt") + " --policy infer --steps 10 --out " +
                  ws.p("d.json"),
              log) == 0);
  CHECK(run("sample --denoiser " + ws.p("d.json") + " --coar --out " + ws.p("s.txt"), log) == 2);

  // corpora scored against a checkpoint must stay inside its alphabet
  write_text_file(ws.p("bad.txt"), "tokens? not these.");
  CHECK(run("eval --corpus " + ws.p("bad.txt") + " --denoiser " + ws.p("d.json") +
                " --mc-samples 2 --partition-n 2 --out " + ws.p("e.csv"),
            log) == 2);
  CHECK(slurp(log).find("outside the vocabulary") != std::string::npos);
}
