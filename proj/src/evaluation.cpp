#include "afrec/evaluation.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

#include "afrec/errors.hpp"

namespace afrec {

namespace {

std::size_t max_positives_per_top(const Corpus& corpus, const std::vector<std::size_t>& split) {
  std::unordered_map<std::size_t, std::size_t> counts;
  for (const auto& pair : corpus.positive_indices()) ++counts[pair.top];
  std::size_t worst = 0;
  for (std::size_t p : split) worst = std::max(worst, counts[corpus.positive_indices().at(p).top]);
  return worst;
}

}  // namespace

std::size_t feasible_negatives(const Corpus& corpus, const std::vector<std::size_t>& split, std::size_t limit) {
  const std::size_t taken = max_positives_per_top(corpus, split);
  const std::size_t available = corpus.bottoms().size() > taken ? corpus.bottoms().size() - taken : 0;
  return std::min(limit, available);
}

std::vector<RankedCase> build_cases(const Corpus& corpus, const std::vector<std::size_t>& split,
                                    std::size_t n_negatives, std::uint64_t seed) {
  if (split.empty()) throw EmptyCorpus("evaluation split is empty");
  std::mt19937_64 rng(seed);
  std::vector<RankedCase> cases;
  cases.reserve(split.size());
  std::vector<std::size_t> pool;
  for (std::size_t p : split) {
    const PairIndex& pair = corpus.positive_indices().at(p);
    pool.clear();
    for (std::size_t b : corpus.bottoms()) {
      if (!corpus.is_positive(pair.top, b)) pool.push_back(b);
    }
    if (pool.size() < n_negatives) {
      throw InsufficientNegatives("top '" + corpus.item(pair.top).id + "' has only " + std::to_string(pool.size()) +
                                  " non-matching bottoms, " + std::to_string(n_negatives) + " requested");
    }
    // Partial Fisher-Yates: the first n_negatives entries become a uniform
    // sample without replacement.
    for (std::size_t i = 0; i < n_negatives; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    RankedCase c;
    c.top = pair.top;
    c.positive = pair.bottom;
    c.negatives.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_negatives));
    cases.push_back(std::move(c));
  }
  return cases;
}

std::size_t positive_rank(const RankedCase& c) {
  if (!c.scored()) throw UnscoredCase("case has not been scored");
  const double positive = c.scores[0];
  std::size_t rank = 1;
  for (std::size_t i = 1; i < c.scores.size(); ++i) rank += c.scores[i] >= positive;
  return rank;
}

double hit_rate(std::span<const RankedCase> cases, int k) {
  if (cases.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& c : cases) hits += positive_rank(c) <= static_cast<std::size_t>(k);
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

double auc(std::span<const RankedCase> cases) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& c : cases) {
    if (!c.scored()) throw UnscoredCase("case has not been scored");
    for (std::size_t i = 1; i < c.scores.size(); ++i) correct += c.scores[0] > c.scores[i];
    total += c.scores.size() - 1;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void score_cases(const Model& model, const Corpus& corpus, std::vector<RankedCase>& cases, AblationVariant variant) {
  std::unordered_map<std::size_t, ItemEncoding> encodings;
  auto encoding = [&](std::size_t index) -> const ItemEncoding& {
    auto it = encodings.find(index);
    if (it == encodings.end()) it = encodings.emplace(index, encode_item(model, corpus.item(index).image)).first;
    return it->second;
  };
  for (auto& c : cases) {
    const Item& top = corpus.item(c.top);
    const ItemEncoding& top_enc = encoding(c.top);
    c.scores.clear();
    c.scores.reserve(c.negatives.size() + 1);
    auto score_bottom = [&](std::size_t b) {
      const Item& bottom = corpus.item(b);
      c.scores.push_back(score_encoded(model, top_enc, top.category, encoding(b), bottom.category, variant).score);
    };
    score_bottom(c.positive);
    for (std::size_t b : c.negatives) score_bottom(b);
  }
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json out;
  out["auc"] = auc;
  for (const auto& [k, value] : hr) out["hr@" + std::to_string(k)] = value;
  out["n_cases"] = n_cases;
  out["seed"] = seed;
  return out;
}

MetricsReport metrics_report(std::span<const RankedCase> cases, std::uint64_t seed) {
  MetricsReport report;
  report.auc = auc(cases);
  for (int k : kReportedCutoffs) report.hr[k] = hit_rate(cases, k);
  report.n_cases = cases.size();
  report.seed = seed;
  return report;
}

MetricsReport evaluate(const Model& model, const Corpus& corpus, std::uint64_t seed, AblationVariant variant,
                       std::size_t n_negatives) {
  if (model.fingerprint() != schema_fingerprint(corpus.schema(), corpus.categories())) {
    throw SchemaMismatch("model schema does not match corpus");
  }
  std::vector<RankedCase> cases = build_cases(corpus, n_negatives, seed);
  score_cases(model, corpus, cases, variant);
  return metrics_report(cases, seed);
}

AblationVariant checkpoint_variant(const Checkpoint& checkpoint) {
  const auto& h = checkpoint.header;
  if (h.contains("train") && h.at("train").contains("variant")) {
    return variant_from_string(h.at("train").at("variant").get<std::string>());
  }
  return AblationVariant::Full;
}

MetricsReport evaluate(const Checkpoint& checkpoint, const Corpus& corpus, std::uint64_t seed,
                       std::size_t n_negatives) {
  check_schema(checkpoint, corpus.schema(), corpus.categories());
  const Model model = model_from_checkpoint(checkpoint);
  return evaluate(model, corpus, seed, checkpoint_variant(checkpoint), n_negatives);
}

}  // namespace afrec
