#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "afrec/errors.hpp"
#include "afrec/evaluation.hpp"
#include "afrec/explain.hpp"
#include "afrec/math.hpp"
#include "afrec/synthetic.hpp"
#include "afrec/training.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

std::string synth(const fs::path& out, int n_tops, int n_bottoms, int image_size, std::uint64_t seed,
                  const std::string& rules, std::size_t max_positives, double label_dropout) {
  afrec::synthetic::SyntheticConfig config;
  config.n_tops = n_tops;
  config.n_bottoms = n_bottoms;
  config.image_size = image_size;
  config.seed = seed;
  config.rule_set = afrec::synthetic::rule_set_from_string(rules);
  config.max_positives = max_positives;
  config.label_dropout = label_dropout;
  return afrec::save_corpus(afrec::synthetic::generate(config), out).string();
}

std::string corpus_summary(const fs::path& manifest) {
  const afrec::Corpus corpus = afrec::load_corpus(manifest);
  return nlohmann::json{{"tops", corpus.tops().size()},
                        {"bottoms", corpus.bottoms().size()},
                        {"positives", corpus.positives().size()},
                        {"train", corpus.splits().train.size()},
                        {"valid", corpus.splits().valid.size()},
                        {"test", corpus.splits().test.size()},
                        {"attributes", corpus.schema().size()},
                        {"categories", corpus.categories().names()}}
      .dump();
}

std::string train(const fs::path& manifest, const fs::path& out, int epochs, int sae_epochs, std::uint64_t seed,
                  const std::string& variant, const std::string& profile, bool freeze_sae, bool single_phase,
                  std::optional<double> learning_rate) {
  const afrec::Corpus corpus = afrec::load_corpus(manifest);
  const afrec::Profile p = afrec::profile_from_string(profile);
  afrec::TrainConfig config = p == afrec::Profile::Paper ? afrec::TrainConfig{} : afrec::TrainConfig::desk_defaults();
  config.profile = p;
  config.epochs = epochs;
  config.sae_epochs = sae_epochs;
  config.seed = seed;
  config.variant = afrec::variant_from_string(variant);
  config.freeze_sae = freeze_sae;
  config.two_phase = !single_phase;
  if (learning_rate) config.learning_rate = *learning_rate;
  std::optional<afrec::TrainResult> trained;
  {
    py::gil_scoped_release release;
    trained.emplace(afrec::train(corpus, config));
  }
  const afrec::TrainResult& result = *trained;
  afrec::write_checkpoint(out, result.checkpoint());
  nlohmann::json log = nlohmann::json::array();
  for (const auto& m : result.log) log.push_back(m.to_json());
  nlohmann::json summary{{"log", log}, {"best_epoch", result.best_epoch}};
  if (result.pretrain) summary["pretrain"] = result.pretrain->to_json();
  return summary.dump();
}

std::string evaluate(const fs::path& checkpoint, const fs::path& manifest, std::uint64_t seed, std::size_t negatives) {
  const afrec::Checkpoint ckpt = afrec::read_checkpoint(checkpoint);
  const afrec::Corpus corpus = afrec::load_corpus(manifest);
  py::gil_scoped_release release;
  return afrec::evaluate(ckpt, corpus, seed, negatives).to_json().dump();
}

std::string explain(const fs::path& checkpoint, const fs::path& top, const fs::path& bottom, const std::string& top_cat,
                    const std::string& bottom_cat, std::size_t top_n, std::optional<fs::path> out_dir) {
  const afrec::Explanation e =
      afrec::explain_pair(afrec::read_checkpoint(checkpoint), top, bottom, top_cat, bottom_cat, top_n);
  if (out_dir) {
    fs::create_directories(*out_dir);
    afrec::render_heatmap(e, *out_dir / "heatmap.png");
  }
  return e.to_json().dump();
}

std::vector<afrec::RankedCase> to_cases(const std::vector<std::vector<double>>& scores) {
  std::vector<afrec::RankedCase> cases;
  for (const auto& s : scores) {
    if (s.empty()) throw afrec::UnscoredCase("each case needs a positive score");
    afrec::RankedCase c;
    c.negatives.resize(s.size() - 1);
    c.scores = s;
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

PYBIND11_MODULE(_afrec, m) {
  m.doc() = "Attribute-aware top/bottom compatibility model";

  auto base = py::register_exception<afrec::Error>(m, "AfrecError");
  py::register_exception<afrec::ModelError>(m, "ModelError", base.ptr());

  m.def("synth", &synth, py::arg("out"), py::arg("n_tops") = 300, py::arg("n_bottoms") = 300,
        py::arg("image_size") = 64, py::arg("seed") = 7, py::arg("rules") = "planted",
        py::arg("max_positives") = 20000, py::arg("label_dropout") = 0.0);
  m.def("corpus_summary", &corpus_summary, py::arg("manifest"));
  m.def("train", &train, py::arg("manifest"), py::arg("out"), py::arg("epochs") = 30, py::arg("sae_epochs") = 20,
        py::arg("seed") = 0, py::arg("variant") = "full", py::arg("profile") = "desk", py::arg("freeze_sae") = false,
        py::arg("single_phase") = false, py::arg("learning_rate") = py::none());
  m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("manifest"), py::arg("seed") = 0,
        py::arg("negatives") = afrec::kDefaultNegatives);
  m.def("explain", &explain, py::arg("checkpoint"), py::arg("top"), py::arg("bottom"), py::arg("top_category"),
        py::arg("bottom_category"), py::arg("top_n") = 3, py::arg("out_dir") = py::none());
  m.def("bpr_loss", [](const std::vector<double>& pos, const std::vector<double>& neg) { return afrec::bpr_loss(pos, neg); });
  m.def("hit_rate", [](const std::vector<std::vector<double>>& scores, int k) { return afrec::hit_rate(to_cases(scores), k); },
        py::arg("scores"), py::arg("k"));
  m.def("auc", [](const std::vector<std::vector<double>>& scores) { return afrec::auc(to_cases(scores)); },
        py::arg("scores"));
}
