#include "m2slt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "m2slt/error.hpp"

namespace m2slt {

namespace {

using NgramCounts = std::map<std::vector<int>, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                              tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

void check_corpus(std::span<const TokenSequence> c, std::span<const TokenSequence> r,
                  const char* what) {
  if (c.size() != r.size())
    throw ArgumentError(std::string(what) + ": candidate and reference counts differ");
  if (c.empty()) throw ArgumentError(std::string(what) + ": empty corpus");
}

}  // namespace

std::array<double, 4> bleu(std::span<const TokenSequence> candidates,
                           std::span<const TokenSequence> references, BleuSmoothing smoothing) {
  check_corpus(candidates, references, "bleu");
  constexpr std::size_t kMaxN = 4;
  std::array<double, kMaxN> matches{}, totals{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    cand_len += static_cast<double>(candidates[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const NgramCounts cand = count_ngrams(candidates[s], n);
      const NgramCounts ref = count_ngrams(references[s], n);
      for (const auto& [gram, count] : cand) {
        totals[n - 1] += static_cast<double>(count);
        auto it = ref.find(gram);
        if (it != ref.end()) matches[n - 1] += static_cast<double>(std::min(count, it->second));
      }
    }
  }

  std::array<double, kMaxN> out{};
  if (cand_len == 0.0) return out;
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);

  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    double p;
    if (n >= 2 && smoothing == BleuSmoothing::add_one) {
      p = (matches[n - 1] + 1.0) / (totals[n - 1] + 1.0);
    } else {
      p = totals[n - 1] > 0.0 ? matches[n - 1] / totals[n - 1] : 0.0;
    }
    if (p <= 0.0) zero = true;
    if (!zero) log_sum += std::log(p);
    out[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  if (reference.empty()) throw ArgumentError("rouge_l: empty reference");
  const double l = static_cast<double>(lcs_length(candidate, reference));
  const double p = candidate.empty() ? 0.0 : l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double rouge_l(std::span<const TokenSequence> candidates,
               std::span<const TokenSequence> references) {
  check_corpus(candidates, references, "rouge_l");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) sum += rouge_l(candidates[i], references[i]);
  return sum / static_cast<double>(candidates.size());
}

ScoreReport score_corpus(std::span<const TokenSequence> candidates,
                         std::span<const TokenSequence> references, BleuSmoothing smoothing) {
  ScoreReport report;
  report.bleu = bleu(candidates, references, smoothing);
  report.rouge_l = rouge_l(candidates, references);
  report.n_samples = candidates.size();
  return report;
}

}  // namespace m2slt
