// afrec command-line front end.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "afrec/errors.hpp"
#include "afrec/evaluation.hpp"
#include "afrec/explain.hpp"
#include "afrec/synthetic.hpp"
#include "afrec/training.hpp"

namespace {

using json = nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitModel = 3;

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw afrec::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw afrec::IoError("failed writing " + path.string());
}

struct TrainOptions {
  std::string data;
  std::string out;
  std::string log;
  int epochs = 30;
  int sae_epochs = 20;
  std::string variant = "full";
  std::string neg_side = "both";
  bool freeze_sae = false;
  bool single_phase = false;
  bool untied_attention = false;
  std::optional<double> learning_rate;
  std::optional<double> sae_learning_rate;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;
};

afrec::TrainConfig train_config(const TrainOptions& o, afrec::Profile profile, std::uint64_t seed) {
  afrec::TrainConfig config = profile == afrec::Profile::Paper ? afrec::TrainConfig{} : afrec::TrainConfig::desk_defaults();
  config.profile = profile;
  config.seed = seed;
  config.epochs = o.epochs;
  config.sae_epochs = o.sae_epochs;
  config.variant = afrec::variant_from_string(o.variant);
  config.negatives = afrec::negative_side_from_string(o.neg_side);
  config.freeze_sae = o.freeze_sae;
  config.two_phase = !o.single_phase;
  config.untied_attention = o.untied_attention;
  if (o.learning_rate) config.learning_rate = *o.learning_rate;
  if (o.sae_learning_rate) config.sae_learning_rate = *o.sae_learning_rate;
  config.weight_decay = o.weight_decay;
  config.batch_size = o.batch_size;
  return config;
}

void add_train_options(CLI::App* cmd, TrainOptions& o, bool full) {
  cmd->add_option("--data", o.data, "Corpus manifest")->required();
  cmd->add_option("--out", o.out, "Output checkpoint")->required();
  if (full) {
    cmd->add_option("--epochs", o.epochs, "Joint training epochs")->capture_default_str();
    cmd->add_option("--sae-epochs", o.sae_epochs, "Pretraining epochs")->capture_default_str();
    cmd->add_option("--variant", o.variant, "Ablation variant")
        ->check(CLI::IsMember({"full", "no-attr-loss", "no-cate-loss", "no-attention", "self-attention",
                               "no-cate-projection", "attr-avg"}))
        ->capture_default_str();
    cmd->add_option("--neg-side", o.neg_side, "Corrupted sides")->check(CLI::IsMember({"both", "bottom"}))->capture_default_str();
    cmd->add_flag("--freeze-sae", o.freeze_sae, "Keep backbone and extractor fixed after pretraining");
    cmd->add_flag("--single-phase", o.single_phase, "Skip extractor pretraining");
    cmd->add_flag("--untied-attention", o.untied_attention, "Separate attention parameters per side");
    cmd->add_option("--log", o.log, "Epoch log (JSON lines); stdout when omitted");
    cmd->add_option("--lr", o.learning_rate, "Joint learning rate");
  } else {
    cmd->add_option("--epochs", o.sae_epochs, "Pretraining epochs")->capture_default_str();
  }
  cmd->add_option("--sae-lr", o.sae_learning_rate, "Pretraining learning rate");
  cmd->add_option("--weight-decay", o.weight_decay)->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-aware top/bottom compatibility modelling"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::string profile_name = "desk";
  app.add_option("--seed", seed, "Random seed")->expected(1);
  app.add_option("--profile", profile_name, "Model scale")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();

  auto* data = app.add_subcommand("data", "Corpus utilities")->fallthrough();
  data->require_subcommand(1);
  afrec::synthetic::SyntheticConfig synth;
  std::string synth_out, rules = "planted";
  auto* synth_cmd = data->add_subcommand("synth", "Generate the synthetic garment corpus")->fallthrough();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--n-tops", synth.n_tops)->capture_default_str();
  synth_cmd->add_option("--n-bottoms", synth.n_bottoms)->capture_default_str();
  synth_cmd->add_option("--image-size", synth.image_size)->capture_default_str();
  synth_cmd->add_option("--rules", rules)->check(CLI::IsMember({"planted", "always"}))->capture_default_str();
  synth_cmd->add_option("--max-positives", synth.max_positives)->capture_default_str();
  synth_cmd->add_option("--label-dropout", synth.label_dropout)->capture_default_str();
  std::string validate_manifest;
  auto* validate_cmd = data->add_subcommand("validate", "Check a corpus manifest")->fallthrough();
  validate_cmd->add_option("manifest", validate_manifest)->required();

  TrainOptions pretrain_opts;
  auto* pretrain_cmd = app.add_subcommand("pretrain-sae", "Pretrain the backbone and attribute extractor")->fallthrough();
  add_train_options(pretrain_cmd, pretrain_opts, false);

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train the compatibility model")->fallthrough();
  add_train_options(train_cmd, train_opts, true);

  std::string eval_ckpt, eval_data, eval_out;
  std::size_t eval_negatives = afrec::kDefaultNegatives;
  auto* eval_cmd = app.add_subcommand("eval", "Ranking evaluation on the test split")->fallthrough();
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--out", eval_out, "Report JSON path");
  eval_cmd->add_option("--negatives", eval_negatives)->capture_default_str();

  std::string ex_ckpt, ex_top, ex_bottom, ex_top_cat, ex_bottom_cat, ex_out;
  std::size_t ex_top_n = 3;
  auto* explain_cmd = app.add_subcommand("explain", "Attribute-level explanation for one pair")->fallthrough();
  explain_cmd->add_option("--ckpt", ex_ckpt)->required();
  explain_cmd->add_option("--top", ex_top)->required();
  explain_cmd->add_option("--bottom", ex_bottom)->required();
  explain_cmd->add_option("--top-cat", ex_top_cat)->required();
  explain_cmd->add_option("--bottom-cat", ex_bottom_cat)->required();
  explain_cmd->add_option("--out", ex_out)->required();
  explain_cmd->add_option("--top-n", ex_top_n)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const afrec::Profile profile = afrec::profile_from_string(profile_name);
    if (*synth_cmd) {
      synth.seed = seed.value_or(7);
      synth.rule_set = afrec::synthetic::rule_set_from_string(rules);
      const afrec::Corpus corpus = afrec::synthetic::generate(synth);
      const auto manifest = afrec::save_corpus(corpus, synth_out);
      std::cout << json{{"manifest", manifest.string()},
                        {"items", corpus.items().size()},
                        {"positives", corpus.positives().size()}}
                       .dump()
                << "\n";
    } else if (*validate_cmd) {
      const afrec::Corpus corpus = afrec::load_corpus(validate_manifest);
      std::cout << json{{"valid", true},
                        {"tops", corpus.tops().size()},
                        {"bottoms", corpus.bottoms().size()},
                        {"positives", corpus.positives().size()},
                        {"train", corpus.splits().train.size()},
                        {"valid_split", corpus.splits().valid.size()},
                        {"test", corpus.splits().test.size()}}
                       .dump()
                << "\n";
    } else if (*pretrain_cmd) {
      const afrec::Corpus corpus = afrec::load_corpus(pretrain_opts.data);
      const afrec::TrainConfig config = train_config(pretrain_opts, profile, seed.value_or(0));
      afrec::Model model(afrec::model_config_for(corpus, config), corpus.schema(), corpus.categories());
      const afrec::PretrainReport report = afrec::pretrain_sae(corpus, model, config);
      afrec::write_checkpoint(pretrain_opts.out,
                              afrec::make_checkpoint(model, {{"train", config.to_json()}, {"pretrain", report.to_json()}}));
      std::cout << report.to_json().dump() << "\n";
    } else if (*train_cmd) {
      const afrec::Corpus corpus = afrec::load_corpus(train_opts.data);
      const afrec::TrainConfig config = train_config(train_opts, profile, seed.value_or(0));
      std::ofstream log_file;
      if (!train_opts.log.empty()) {
        log_file.open(train_opts.log, std::ios::binary);
        if (!log_file) throw afrec::IoError("cannot write " + train_opts.log);
      }
      std::ostream& log = train_opts.log.empty() ? std::cout : log_file;
      const afrec::TrainResult result = afrec::train(corpus, config, [&](const afrec::EpochMetrics& m) {
        log << m.to_json().dump() << "\n";
        log.flush();
      });
      afrec::write_checkpoint(train_opts.out, result.checkpoint());
    } else if (*eval_cmd) {
      const afrec::Checkpoint checkpoint = afrec::read_checkpoint(eval_ckpt);
      const afrec::Corpus corpus = afrec::load_corpus(eval_data);
      const afrec::MetricsReport report = afrec::evaluate(checkpoint, corpus, seed.value_or(0), eval_negatives);
      const std::string text = report.to_json().dump(2) + "\n";
      if (!eval_out.empty()) write_text(eval_out, text);
      std::cout << text;
    } else if (*explain_cmd) {
      const afrec::Checkpoint checkpoint = afrec::read_checkpoint(ex_ckpt);
      const afrec::Explanation e = afrec::explain_pair(checkpoint, ex_top, ex_bottom, ex_top_cat, ex_bottom_cat, ex_top_n);
      std::filesystem::create_directories(ex_out);
      const std::filesystem::path dir(ex_out);
      afrec::render_heatmap(e, dir / "heatmap.png");
      write_text(dir / "explanation.json", e.to_json().dump(2) + "\n");
      std::cout << e.to_json().dump() << "\n";
    }
  } catch (const afrec::ModelError& e) {
    std::cerr << "afrec: " << e.what() << "\n";
    return kExitModel;
  } catch (const afrec::Error& e) {
    std::cerr << "afrec: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "afrec: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
