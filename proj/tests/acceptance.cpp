// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// when any of them fails. The desk-scale experiments take tens of minutes on
// a single core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "afrec/evaluation.hpp"
#include "afrec/explain.hpp"
#include "afrec/math.hpp"
#include "afrec/png_io.hpp"
#include "afrec/synthetic.hpp"
#include "afrec/training.hpp"
#include "test_support.hpp"

using namespace afrec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::map<std::string, std::string> summary;

// Properties outside the numbered criteria are printed but do not set the
// exit status.
void report(const std::string& label, bool pass, const std::string& detail, bool gating = true) {
  const std::string line = label + ": " + (pass ? "PASS" : "FAIL") + (gating ? "" : " (informational)") + "  " + detail;
  std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  summary[label] = line;
  if (!pass && gating) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (double v : values) out += (out.empty() ? "" : ",") + fmt("%.4f", v);
  return out;
}

constexpr std::uint64_t kEvalSeed = 7;
const std::vector<std::uint64_t> kSeeds{7, 8, 9, 10, 11};

struct Run {
  TrainResult result;
  MetricsReport metrics;
  double seconds = 0.0;
};

Run run_variant(const Corpus& corpus, AblationVariant variant, std::uint64_t seed) {
  TrainConfig config = TrainConfig::desk_defaults();
  config.variant = variant;
  config.seed = seed;
  const auto start = Clock::now();
  TrainResult result = train(corpus, config);
  MetricsReport metrics = evaluate(result.model, corpus, kEvalSeed, variant);
  const double elapsed = seconds_since(start);
  std::printf("  trained %-18s seed %2llu  auc %.4f  hr@10 %.4f  (%.0f s)\n", to_string(variant),
              static_cast<unsigned long long>(seed), metrics.auc, metrics.hr.at(10), elapsed);
  std::fflush(stdout);
  return {std::move(result), metrics, elapsed};
}

// Gradient checks of each loss term on the micro model.
void criterion_gradients() {
  const auto start = Clock::now();
  const Corpus corpus = testing::micro_corpus();
  const auto batch = sample_training_triples(corpus, 5, 21);
  struct Term {
    const char* name;
    LossWeights weights;
  };
  double worst = 0.0;
  std::string worst_name;
  bool covered = true;
  for (const Term& term : {Term{"bpr", {1, 0, 0}}, Term{"category", {0, 1, 0}}, Term{"attribute", {0, 0, 1}},
                           Term{"total", {1, 1, 1}}}) {
    Model model(testing::micro_config(), corpus.schema(), corpus.categories());
    TrainConfig config;
    config.profile = Profile::Micro;
    config.loss_weights = term.weights;
    ModelParams grads;
    total_loss(batch, model, corpus, config, &grads);
    const auto check =
        testing::check_gradients(model, grads, [&] { return total_loss(batch, model, corpus, config).total; });
    if (check.max_relative_error > worst) {
      worst = check.max_relative_error;
      worst_name = std::string(term.name) + ":" + check.worst;
    }
    if (std::string(term.name) == "total") {
      // Every weight array must be reached by the total loss.
      for (const ParamRef& ref : model.parameters(grads)) {
        if (ref.name.find(".bias") != std::string::npos || ref.name.back() == 'b') continue;
        if (Eigen::Map<const Vector>(ref.data, ref.size()).cwiseAbs().maxCoeff() == 0.0) covered = false;
      }
    }
  }
  const double elapsed = seconds_since(start);
  report("criterion 4", worst < 1e-4 && covered && elapsed < 60.0,
         fmt("micro gradients: max rel err %.2e (%s), all groups reached %s, %.1f s", worst, worst_name.c_str(),
             covered ? "yes" : "no", elapsed));
}

Matrix loop_compat(const Matrix& a, const Matrix& b, const Matrix& wcc, const Matrix& wc) {
  const Eigen::Index k = a.rows(), d = a.cols();
  Matrix out = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      for (Eigen::Index p = 0; p < d; ++p)
        for (Eigen::Index q = 0; q < d; ++q) {
          double left = 0.0, right = 0.0;
          for (Eigen::Index r = 0; r < d; ++r) left += a(i, r) * wcc(r, p);
          for (Eigen::Index r = 0; r < d; ++r) right += b(j, r) * wcc(r, q);
          out(i, j) += left * wc(p, q) * right;
        }
  return out;
}

std::vector<RankedCase> random_cases(std::size_t n, std::mt19937_64& rng, bool with_ties) {
  std::uniform_int_distribution<int> negatives(1, 12), coarse(0, 5);
  std::normal_distribution<double> gauss;
  std::vector<RankedCase> cases(n);
  for (RankedCase& c : cases) {
    c.negatives.resize(static_cast<std::size_t>(negatives(rng)));
    std::iota(c.negatives.begin(), c.negatives.end(), std::size_t{1});
    for (std::size_t i = 0; i <= c.negatives.size(); ++i)
      c.scores.push_back(with_ties ? static_cast<double>(coarse(rng)) : gauss(rng));
  }
  return cases;
}

void criterion_oracles() {
  std::mt19937_64 rng(5);
  const Corpus corpus = testing::micro_corpus();
  Model model(testing::micro_config(), corpus.schema(), corpus.categories());
  model.ensure_projection(0, 1);
  model.params().projections.pairs[{0, 1}] = testing::random_matrix(model.dim(), model.dim(), rng);
  model.params().projections.compat = testing::random_matrix(model.dim(), model.dim(), rng);
  const Matrix& wcc = model.params().projections.pairs.at({0, 1});
  const Matrix& wc = model.params().projections.compat;

  double score_gap = 0.0, compat_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Item top{"t", Side::Top, testing::random_image(8, rng), 0, {}};
    Item bottom{"b", Side::Bottom, testing::random_image(8, rng), 1, {}};
    const CompatibilityBundle bundle = score_pair(model, top, bottom);
    score_gap = std::max(score_gap, std::abs(bundle.score - bundle.alpha_top.dot(bundle.compat * bundle.alpha_bottom)));
    const Matrix oracle =
        loop_compat(encode_item(model, top.image).attrs, encode_item(model, bottom.image).attrs, wcc, wc);
    compat_gap = std::max(compat_gap, (bundle.compat - oracle).cwiseAbs().maxCoeff());
  }

  bool metrics_exact = true;
  for (bool ties : {false, true}) {
    auto cases = random_cases(50, rng, ties);
    std::size_t above = 0, total = 0;
    std::map<int, std::size_t> hits;
    for (const RankedCase& c : cases) {
      std::size_t rank = 1;
      for (std::size_t i = 1; i < c.scores.size(); ++i) {
        if (c.scores[i] >= c.scores[0]) ++rank;
        if (c.scores[0] > c.scores[i]) ++above;
        ++total;
      }
      for (int k : {1, 5, 10, 20, 40})
        if (rank <= static_cast<std::size_t>(k)) ++hits[k];
    }
    if (auc(cases) != static_cast<double>(above) / static_cast<double>(total)) metrics_exact = false;
    for (const auto& [k, h] : hits)
      if (hit_rate(cases, k) != static_cast<double>(h) / 50.0) metrics_exact = false;
  }
  report("criterion 5", score_gap < 1e-10 && compat_gap < 1e-12 && metrics_exact,
         fmt("score vs bilinear %.1e, compat vs loop %.1e, metrics match counting oracle %s", score_gap, compat_gap,
             metrics_exact ? "exactly" : "NOT exactly"));
}

void criterion_metric_units() {
  std::mt19937_64 rng(6);
  double bpr_gap = 0.0, ce_gap = 0.0, softmax_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double x = std::normal_distribution<double>(0.0, 10.0)(rng);
    const std::vector<double> s(4, x);
    bpr_gap = std::max(bpr_gap, std::abs(bpr_loss(s, s) / 4.0 - std::log(2.0)));
    const int n = 2 + trial % 9;
    const Vector logits = Vector::Constant(n, x);
    ce_gap = std::max(ce_gap, std::abs(softmax_cross_entropy(logits, trial % n) - std::log(n)));
    softmax_gap = std::max(softmax_gap, std::abs(softmax(testing::random_vector(n, rng, 50.0)).sum() - 1.0));
  }
  auto cases = random_cases(1000, rng, false);
  for (RankedCase& c : cases) {
    c.negatives.resize(100);
    c.scores.resize(101);
    for (double& v : c.scores) v = std::normal_distribution<double>()(rng);
  }
  bool monotone = true;
  double previous = 0.0;
  for (int k = 1; k <= 101; ++k) {
    const double hr = hit_rate(cases, k);
    if (hr < previous) monotone = false;
    previous = hr;
  }
  monotone = monotone && previous == 1.0;
  report("criterion 6", bpr_gap < 1e-9 && ce_gap < 1e-9 && softmax_gap < 1e-6 && monotone,
         fmt("bpr-ln2 %.1e, ce-ln(n) %.1e, softmax sum %.1e, HR monotone over 1000 cases %s", bpr_gap, ce_gap,
             softmax_gap, monotone ? "yes" : "no"));
}

int run(const std::string& command) {
  const std::string line = command + " > /dev/null 2>&1";
  return std::system(line.c_str());
}

void criterion_cli_determinism(const fs::path& work) {
  const fs::path dir = work / "cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = AFREC_CLI_PATH;
  const std::string data = (dir / "corpus" / "manifest.json").string();
  bool ok = run(cli + " --seed 3 data synth --out " + (dir / "corpus").string() + " --n-tops 60 --n-bottoms 60") == 0;
  for (const char* name : {"a", "b"}) {
    const fs::path base = dir / name;
    ok = ok && run(cli + " --seed 5 train --data " + data + " --out " + base.string() + ".ckpt --epochs 3 --sae-epochs 2" +
                   " --log " + base.string() + ".log") == 0;
    ok = ok && run(cli + " --seed 5 eval --ckpt " + base.string() + ".ckpt --data " + data + " --negatives 20 --out " +
                   base.string() + ".json") == 0;
  }
  const bool logs = ok && !slurp(dir / "a.log").empty() && slurp(dir / "a.log") == slurp(dir / "b.log");
  const bool ckpts = ok && slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");
  const bool reports = ok && !slurp(dir / "a.json").empty() && slurp(dir / "a.json") == slurp(dir / "b.json");
  report("criterion 7", ok && logs && ckpts && reports,
         fmt("cli exit codes %s, logs identical %s, checkpoints identical %s, reports identical %s", ok ? "ok" : "bad",
             logs ? "yes" : "no", ckpts ? "yes" : "no", reports ? "yes" : "no"));
}

void criterion_explanations(const fs::path& work, const Checkpoint& checkpoint, const Corpus& corpus) {
  const fs::path dir = work / "explain";
  fs::create_directories(dir);
  std::mt19937_64 rng(8);
  const auto tops = corpus.tops(), bottoms = corpus.bottoms();

  double oracle_gap = 0.0, csv_gap = 0.0;
  int argmax_matches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Item& top = corpus.item(tops[rng() % tops.size()]);
    const Item& bottom = corpus.item(bottoms[rng() % bottoms.size()]);
    const fs::path top_path = dir / (top.id + ".png"), bottom_path = dir / (bottom.id + ".png");
    write_png(top_path, top.image);
    write_png(bottom_path, bottom.image);
    const Explanation e = explain_pair(checkpoint, top_path, bottom_path, corpus.categories()[top.category],
                                       corpus.categories()[bottom.category]);
    const double lo = e.raw.minCoeff(), hi = e.raw.maxCoeff();
    const Matrix oracle = hi > lo ? Matrix((e.raw.array() - lo) / (hi - lo)) : Matrix::Constant(e.raw.rows(), e.raw.cols(), 0.5);
    oracle_gap = std::max(oracle_gap, (e.scaled - oracle).cwiseAbs().maxCoeff());
    const ScaledTable table = parse_explanation_csv(explanation_csv(e));
    csv_gap = std::max(csv_gap, (table.values - e.scaled).cwiseAbs().maxCoeff());

    CompatibilityBundle b;
    b.compat = testing::random_matrix(10, 10, rng, 3.0);
    b.alpha_top = testing::random_distribution(10, rng);
    b.alpha_bottom = testing::random_distribution(10, rng);
    b.affinity = affinity_matrix(b.alpha_top, b.alpha_bottom);
    b.weighted = weighted_compat(b.compat, b.affinity);
    b.score = score(b.weighted);
    std::vector<std::string> labels;
    for (int i = 0; i < 10; ++i) labels.push_back("a" + std::to_string(i));
    const Explanation random_e = explain_bundle(b, labels, "t", "b");
    Eigen::Index r1, c1, r2, c2;
    random_e.raw.maxCoeff(&r1, &c1);
    random_e.scaled.maxCoeff(&r2, &c2);
    if (r1 == r2 && c1 == c2 && random_e.top_pairs.front().row == static_cast<std::size_t>(r1) &&
        random_e.top_pairs.front().col == static_cast<std::size_t>(c1))
      ++argmax_matches;
    csv_gap = std::max(csv_gap, (parse_explanation_csv(explanation_csv(random_e)).values - random_e.scaled)
                                    .cwiseAbs()
                                    .maxCoeff());
  }
  report("criterion 8", oracle_gap < 1e-12 && argmax_matches == 100 && csv_gap < 1e-9,
         fmt("min-max oracle gap %.1e, argmax preserved %d/100, csv round trip %.1e", oracle_gap, argmax_matches,
             csv_gap));
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "afrec_acceptance";
  fs::create_directories(work);

  criterion_gradients();
  criterion_oracles();
  criterion_metric_units();
  criterion_cli_determinism(work);

  const Corpus corpus = synthetic::generate(synthetic::SyntheticConfig{});
  std::printf("  synthetic corpus: %zu tops, %zu bottoms, %zu positives, %zu test pairs\n", corpus.tops().size(),
              corpus.bottoms().size(), corpus.positives().size(), corpus.splits().test.size());

  // Untrained and trained FULL model at the default seed.
  auto untrained_auc = [](const Corpus& c, std::uint64_t seed) {
    TrainConfig config = TrainConfig::desk_defaults();
    config.seed = seed;
    config.epochs = 0;
    config.sae_epochs = 0;
    return evaluate(train(c, config).model, c, kEvalSeed).auc;
  };
  const double untrained = untrained_auc(corpus, kSeeds.front());
  std::map<AblationVariant, std::vector<Run>> runs;
  runs[AblationVariant::Full].push_back(run_variant(corpus, AblationVariant::Full, kSeeds.front()));
  const Run& headline = runs[AblationVariant::Full].front();
  report("criterion 1",
         headline.metrics.auc >= 0.85 && headline.metrics.hr.at(10) >= 0.60 && untrained >= 0.45 &&
             untrained <= 0.55 && headline.seconds <= 1800.0,
         fmt("trained auc %.4f hr@10 %.4f in %.0f s; same initialisation untrained auc %.4f", headline.metrics.auc,
             headline.metrics.hr.at(10), headline.seconds, untrained));

  {
    std::vector<double> small, large;
    synthetic::SyntheticConfig big;
    big.n_tops = big.n_bottoms = 1000;
    const Corpus large_corpus = synthetic::generate(big);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      small.push_back(untrained_auc(corpus, seed));
      large.push_back(untrained_auc(large_corpus, seed));
    }
    auto in_band = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double a) { return a >= 0.45 && a <= 0.55; });
    };
    report("property untrained-chance", in_band(large),
           fmt("untrained auc over seeds 0-4, 1000x1000 corpus [%s]; default corpus [%s]", join(large).c_str(),
               join(small).c_str()),
           false);
  }

  const PretrainReport& sae = *headline.result.pretrain;
  double lowest = 1.0;
  std::string accuracies;
  for (const auto& [name, accuracy] : sae.attribute_accuracy) {
    lowest = std::min(lowest, accuracy);
    accuracies += (accuracies.empty() ? "" : " ") + name + "=" + fmt("%.3f", accuracy);
  }
  report("criterion 3", lowest >= 0.90 && headline.result.config.sae_epochs <= 20,
         fmt("%d pretraining epochs, test accuracy %s", headline.result.config.sae_epochs, accuracies.c_str()));

  criterion_explanations(work, headline.result.checkpoint(), corpus);

  // Explanation scores agree with the ranking on held-out cases.
  {
    auto cases = build_cases(corpus, kDefaultNegatives, kEvalSeed);
    score_cases(headline.result.model, corpus, cases, AblationVariant::Full);
    std::size_t above = 0;
    for (const RankedCase& c : cases) {
      const double med = median(std::vector<double>(c.scores.begin() + 1, c.scores.end()));
      if (c.scores[0] >= med) ++above;
    }
    const double share = static_cast<double>(above) / static_cast<double>(cases.size());
    report("property positive-above-median", share >= 0.80, fmt("%.3f of %zu test cases", share, cases.size()),
           false);
  }

  for (std::size_t i = 1; i < kSeeds.size(); ++i)
    runs[AblationVariant::Full].push_back(run_variant(corpus, AblationVariant::Full, kSeeds[i]));
  {
    std::vector<double> medians;
    for (int epoch = 0; epoch < 3; ++epoch) {
      std::vector<double> values;
      for (const Run& r : runs[AblationVariant::Full]) values.push_back(r.result.log.at(epoch).validation_auc.value());
      medians.push_back(median(values));
    }
    report("property early-validation-gain", medians[0] < medians[1] && medians[1] < medians[2],
           fmt("median validation auc over epochs 1-3 [%s]", join(medians).c_str()), false);
  }

  const AblationVariant ablations[] = {AblationVariant::NoAttention, AblationVariant::NoCateProjection,
                                       AblationVariant::AttrAvg};
  for (AblationVariant variant : ablations)
    for (std::uint64_t seed : kSeeds) runs[variant].push_back(run_variant(corpus, variant, seed));
  auto median_auc = [&](AblationVariant variant) {
    std::vector<double> values;
    for (const Run& r : runs[variant]) values.push_back(r.metrics.auc);
    return median(values);
  };
  const double full = median_auc(AblationVariant::Full);
  bool ordered = true;
  std::string detail = fmt("median auc full %.4f", full);
  for (AblationVariant variant : ablations) {
    const double m = median_auc(variant);
    ordered = ordered && full >= m;
    detail += fmt(", %s %.4f", to_string(variant), m);
  }
  report("criterion 2", ordered, detail);

  std::printf("\nsummary\n");
  for (const auto& [label, line] : summary) std::printf("%s\n", line.c_str());
  std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return failures == 0 ? 0 : 1;
}
