#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "m2slt/event_core.hpp"

namespace m2slt {

enum class BleuSmoothing {
  none,
  add_one,  // (matches + 1) / (candidates + 1) for orders >= 2
};

// Corpus-level BLEU-1..4, each = brevity penalty × geometric mean of the
// modified n-gram precisions up to that order. Single reference per candidate.
std::array<double, 4> bleu(std::span<const TokenSequence> candidates,
                           std::span<const TokenSequence> references,
                           BleuSmoothing smoothing = BleuSmoothing::add_one);

// LCS-based F-measure for one pair.
double rouge_l(const TokenSequence& candidate, const TokenSequence& reference);
// Mean of per-pair ROUGE-L.
double rouge_l(std::span<const TokenSequence> candidates, std::span<const TokenSequence> references);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

struct ScoreReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  std::size_t n_samples = 0;
};

ScoreReport score_corpus(std::span<const TokenSequence> candidates,
                         std::span<const TokenSequence> references,
                         BleuSmoothing smoothing = BleuSmoothing::add_one);

}  // namespace m2slt
