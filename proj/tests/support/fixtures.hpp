#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ebdiff/ar_model.hpp"
#include "ebdiff/denoiser.hpp"
#include "ebdiff/rng.hpp"
#include "ebdiff/types.hpp"

// Shared test inputs: a synthetic word-salad corpus with strong character
// structure, random model builders, and small statistics helpers.
namespace ebtest {

// Corpus alphabet: 0 = space, 1..26 = a..z, 27 = period.
inline constexpr ebdiff::Token kGrammarVocab = 28;

// Deterministic stream of lexicon words (Zipf-weighted) separated by spaces,
// with sentence-final periods. Same (len, seed) always yields the same tokens.
std::vector<ebdiff::Token> grammar_corpus(std::size_t len, std::uint64_t seed);

// Render grammar tokens as the text they encode (for CLI fixtures).
std::string grammar_text(std::span<const ebdiff::Token> tokens);

ebdiff::TokenSeq random_x0(ebdiff::Token vocab, std::size_t len, ebdiff::RngStream& rng);
// Each position masked independently with probability p_mask.
ebdiff::TokenSeq random_xt(ebdiff::Token vocab, std::size_t len, double p_mask,
                           ebdiff::RngStream& rng);

ebdiff::FactorizedDenoiser random_denoiser(ebdiff::Token vocab, int radius, std::uint64_t seed,
                                           double width = 0.5);

// N-gram model fitted on a uniform random corpus: smooth, full-support, and
// cheap; useful wherever some fixed nontrivial reference model is needed.
ebdiff::ARModel random_ar(ebdiff::Token vocab, int order, double smoothing, std::uint64_t seed,
                          std::size_t corpus_len = 500);

// Pearson statistic sum (obs - n p)^2 / (n p); bins with zero expectation must
// have zero observations.
double chi2_stat(std::span<const std::size_t> counts, std::span<const double> probs);

// Critical value, chi-square df=1, p = 0.001.
inline constexpr double kChi2Df1P999 = 10.828;

}  // namespace ebtest
