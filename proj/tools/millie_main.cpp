#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "millie/commands.hpp"
#include "millie/errors.hpp"

namespace {

using millie::RunConfig;

struct CommonFlags {
  std::string config_path;
  std::int64_t seed = -1;
  int tta_replicas = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_tta) {
  cmd->add_option("--config", flags.config_path, "Configuration file (JSON)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "Run seed, overrides the config file");
  if (with_tta)
    cmd->add_option("--tta-replicas", flags.tta_replicas,
                    "Test-time augmentation replicas, overrides the config file");
}

RunConfig make_config(const CommonFlags& flags) {
  RunConfig config;
  if (!flags.config_path.empty()) config = millie::load_run_config(flags.config_path);
  if (flags.seed >= 0) {
    config.train.seed = static_cast<std::uint64_t>(flags.seed);
    config.synth.seed = static_cast<std::uint64_t>(flags.seed);
  }
  if (flags.tta_replicas >= 0) config.train.tta_replicas = flags.tta_replicas;
  config.validate();
  return config;
}

const char* error_name(const millie::Error& e) {
  if (dynamic_cast<const millie::DimensionError*>(&e)) return "DimensionError";
  if (dynamic_cast<const millie::IndexError*>(&e)) return "IndexError";
  if (dynamic_cast<const millie::EmptyBagError*>(&e)) return "EmptyBagError";
  if (dynamic_cast<const millie::DegenerateInputError*>(&e)) return "DegenerateInputError";
  if (dynamic_cast<const millie::ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const millie::DataError*>(&e)) return "DataError";
  if (dynamic_cast<const millie::IoError*>(&e)) return "IoError";
  if (dynamic_cast<const millie::IntegrityError*>(&e)) return "IntegrityError";
  if (dynamic_cast<const millie::VersionError*>(&e)) return "VersionError";
  if (dynamic_cast<const millie::TrainingError*>(&e)) return "TrainingError";
  if (dynamic_cast<const millie::UndefinedMetricError*>(&e)) return "UndefinedMetricError";
  return "Error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"millie: weakly supervised screening over bags of segmented cells"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  add_common(synth, flags, false);

  auto* segment = app.add_subcommand("segment", "Segment field images into cell patches");
  std::string segment_fields, segment_out;
  segment->add_option("fields", segment_fields, "Field listing (fields.tsv)")
      ->required()
      ->check(CLI::ExistingFile);
  segment->add_option("--out", segment_out, "Output directory")->required();
  add_common(segment, flags, false);

  auto* train = app.add_subcommand("train", "Train a bag classifier from a manifest");
  std::string train_manifest, train_out;
  train->add_option("manifest", train_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory")->required();
  add_common(train, flags, false);

  auto* crossval = app.add_subcommand("crossval", "Stratified k-fold cross validation");
  std::string cv_manifest, cv_cells, cv_out;
  int cv_k = 3, cv_jobs = 1;
  crossval->add_option("manifest", cv_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  crossval->add_option("--cells", cv_cells, "Cell annotations for held-out cell scoring")
      ->check(CLI::ExistingFile);
  crossval->add_option("--k", cv_k, "Fold count");
  crossval->add_option("--jobs", cv_jobs, "Fold-level worker threads");
  crossval->add_option("--out", cv_out, "Output directory")->required();
  add_common(crossval, flags, true);

  auto* predict = app.add_subcommand("predict", "Score samples with a trained checkpoint");
  std::string pr_checkpoint, pr_manifest, pr_out;
  predict->add_option("checkpoint", pr_checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("manifest", pr_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--out", pr_out, "Output directory")->required();
  add_common(predict, flags, true);

  auto* score = app.add_subcommand("score-cells", "Score individual cell patches");
  std::string sc_checkpoint, sc_cells, sc_out;
  score->add_option("checkpoint", sc_checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("cells", sc_cells, "Cell annotation file or patch directory")->required();
  score->add_option("--out", sc_out, "Output directory")->required();
  add_common(score, flags, false);

  auto* pca = app.add_subcommand("pca", "Project patch embeddings to 2-D");
  std::string pca_checkpoint, pca_manifest, pca_cells, pca_layer = "fc1", pca_out;
  pca->add_option("checkpoint", pca_checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  pca->add_option("manifest", pca_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  pca->add_option("--cells", pca_cells, "Cell annotations for point labels")
      ->check(CLI::ExistingFile);
  pca->add_option("--layer", pca_layer, "Embedding tap: conv or fc1")
      ->check(CLI::IsMember({"conv", "fc1"}));
  pca->add_option("--out", pca_out, "Output directory")->required();
  add_common(pca, flags, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig config = make_config(flags);
    if (synth->parsed()) {
      millie::cmd_synth({synth_out}, config, std::cout);
    } else if (segment->parsed()) {
      const millie::Json report = millie::cmd_segment({segment_fields, segment_out}, config,
                                                      std::cout);
      if (report.at("total_patches").get<int>() == 0) {
        std::cerr << "no cells segmented\n";
        return 2;
      }
    } else if (train->parsed()) {
      millie::cmd_train({train_manifest, train_out}, config, std::cout);
    } else if (crossval->parsed()) {
      millie::cmd_crossval({cv_manifest, cv_cells, cv_out, cv_k, cv_jobs}, config, std::cout);
    } else if (predict->parsed()) {
      millie::cmd_predict({pr_checkpoint, pr_manifest, pr_out}, config, std::cout);
    } else if (score->parsed()) {
      millie::cmd_score_cells({sc_checkpoint, sc_cells, sc_out}, config, std::cout);
    } else if (pca->parsed()) {
      millie::cmd_pca({pca_checkpoint, pca_manifest, pca_cells, pca_layer, pca_out}, config,
                      std::cout);
    }
  } catch (const millie::Error& e) {
    std::cerr << "error: " << error_name(e) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
