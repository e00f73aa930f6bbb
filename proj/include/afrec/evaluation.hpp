#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "afrec/checkpoint.hpp"
#include "afrec/data_model.hpp"
#include "afrec/model.hpp"

namespace afrec {

// One positive test pair and its sampled negative bottoms. scores is empty
// until the case is scored; when set, scores[0] belongs to the positive.
struct RankedCase {
  std::size_t top = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
  std::vector<double> scores;

  bool scored() const { return scores.size() == negatives.size() + 1; }
};

inline constexpr int kDefaultNegatives = 100;
inline constexpr int kReportedCutoffs[] = {5, 10, 20, 40};

// For each positive in split, draws n_negatives distinct bottoms that are not
// positives of the top anywhere in the corpus.
std::vector<RankedCase> build_cases(const Corpus& corpus, const std::vector<std::size_t>& split,
                                    std::size_t n_negatives, std::uint64_t seed);

inline std::vector<RankedCase> build_cases(const Corpus& corpus, std::size_t n_negatives, std::uint64_t seed) {
  return build_cases(corpus, corpus.splits().test, n_negatives, seed);
}

// Largest negative count every top in split can supply, capped at limit.
std::size_t feasible_negatives(const Corpus& corpus, const std::vector<std::size_t>& split, std::size_t limit);

// Rank of the positive among its candidates, counting ties against it.
std::size_t positive_rank(const RankedCase& c);

double hit_rate(std::span<const RankedCase> cases, int k);

// Pooled fraction of (positive, negative) score pairs with positive strictly higher.
double auc(std::span<const RankedCase> cases);

void score_cases(const Model& model, const Corpus& corpus, std::vector<RankedCase>& cases, AblationVariant variant);

struct MetricsReport {
  double auc = 0.0;
  std::map<int, double> hr;
  std::size_t n_cases = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

MetricsReport metrics_report(std::span<const RankedCase> cases, std::uint64_t seed);

MetricsReport evaluate(const Model& model, const Corpus& corpus, std::uint64_t seed,
                       AblationVariant variant = AblationVariant::Full, std::size_t n_negatives = kDefaultNegatives);

// Uses the variant recorded in the checkpoint; checks the schema first.
MetricsReport evaluate(const Checkpoint& checkpoint, const Corpus& corpus, std::uint64_t seed,
                       std::size_t n_negatives = kDefaultNegatives);

AblationVariant checkpoint_variant(const Checkpoint& checkpoint);

}  // namespace afrec
