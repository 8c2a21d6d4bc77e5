#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "millie/dataio.hpp"
#include "millie/imageio.hpp"
#include "millie/ops.hpp"
#include "millie/training.hpp"

using namespace millie;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "millie_training" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// one shared synthetic corpus for the training runs in this file
const SyntheticDataset& corpus() {
  static const SyntheticDataset ds = [] {
    SyntheticConfig cfg;
    cfg.samples_per_class = 4;
    cfg.fields_per_sample = 1;
    cfg.glyphs_per_field = 6;
    cfg.field_side = 420;
    cfg.witness_fraction = 0.5;
    cfg.seed = 2024;
    return generate_synthetic(cfg, fresh_dir("corpus").generic_string());
  }();
  return ds;
}

// healthy vs class-a subset keeps the unit-scale runs to two classes
std::pair<std::vector<Sample>, std::vector<std::string>> two_class_set() {
  std::vector<Sample> samples;
  for (const auto& s : corpus().manifest.samples)
    if (s.label == "healthy" || s.label == "class-a") samples.push_back(s);
  return {samples, {"healthy", "class-a"}};
}

BackboneConfig tiny_backbone() {
  BackboneConfig cfg;
  cfg.input_side = 16;
  cfg.channels = {6, 12};
  return cfg;
}

AugmentConfig no_augment() {
  AugmentConfig cfg;
  cfg.enable_geometric = false;
  cfg.enable_hue = false;
  cfg.enable_gamma = false;
  cfg.enable_noise = false;
  return cfg;
}

std::vector<std::string> fake_patches(const fs::path& dir, int n) {
  std::vector<std::string> paths;
  RgbImage img(kPatchSide, kPatchSide);
  for (int i = 0; i < n; ++i) {
    const fs::path p = dir / ("p" + std::to_string(i) + ".png");
    save_png(img, p.string());
    paths.push_back(p.generic_string());
  }
  return paths;
}

bool same_params(ModelParams& a, ModelParams& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->value.data != pb[i]->value.data) return false;
  return true;
}

// replica of the training module's validation split, used to verify the
// best-weights-restore contract from outside
std::vector<int> replica_val_split(const std::vector<Sample>& dataset,
                                   const std::vector<std::string>& classes,
                                   const TrainConfig& config) {
  std::vector<int> val_idx;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<int> members;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset[i].label == classes[c] && !dataset[i].patch_paths.empty())
        members.push_back(static_cast<int>(i));
    Rng rng = Rng::derive(config.seed, {fnv1a64("val-split"), static_cast<std::uint64_t>(c)});
    rng.shuffle(members);
    const int n = static_cast<int>(members.size());
    const int n_val =
        std::clamp(static_cast<int>(std::lround(config.validation_fraction * n)), 0, n - 1);
    for (int i = 0; i < n_val; ++i) val_idx.push_back(members[static_cast<std::size_t>(i)]);
  }
  std::sort(val_idx.begin(), val_idx.end());
  return val_idx;
}

}  // namespace

TEST_CASE("sample_bag returns every patch shuffled when under the cap") {
  const fs::path dir = fresh_dir("bag_small");
  Sample s{"s1", "pos", fake_patches(dir, 30)};
  PatchCache cache;
  Rng rng(7);
  const std::vector<PatchImage> bag = sample_bag(s, 50, rng, cache);
  REQUIRE(bag.size() == 30);

  std::vector<std::string> got;
  for (const auto& p : bag) got.push_back(p.source_id);
  std::vector<std::string> sorted_got = got;
  std::sort(sorted_got.begin(), sorted_got.end());
  std::vector<std::string> want = s.patch_paths;
  std::sort(want.begin(), want.end());
  CHECK(sorted_got == want);  // same multiset
  CHECK(got != s.patch_paths);  // and genuinely shuffled for this seed
}

TEST_CASE("sample_bag caps large samples at distinct patches") {
  const fs::path dir = fresh_dir("bag_large");
  Sample s{"s1", "pos", fake_patches(dir, 120)};
  PatchCache cache;
  Rng rng(11);
  const std::vector<PatchImage> bag = sample_bag(s, 50, rng, cache);
  REQUIRE(bag.size() == 50);
  std::set<std::string> distinct;
  for (const auto& p : bag) distinct.insert(p.source_id);
  CHECK(distinct.size() == 50);

  // fresh draw each call: a second bag differs for this seed
  const std::vector<PatchImage> bag2 = sample_bag(s, 50, rng, cache);
  std::vector<std::string> a, b;
  for (const auto& p : bag) a.push_back(p.source_id);
  for (const auto& p : bag2) b.push_back(p.source_id);
  CHECK(a != b);

  Sample empty{"s2", "pos", {}};
  CHECK_THROWS_AS(sample_bag(empty, 50, rng, cache), EmptyBagError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.validation_fraction = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.validation_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.bag_size_cap = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tta_replicas = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("max_epochs zero returns the initialized model untouched") {
  auto [samples, classes] = two_class_set();
  TrainConfig cfg;
  cfg.max_epochs = 0;
  cfg.seed = 9;
  PatchCache cache;
  TrainedModel tm = train(samples, classes, cfg, tiny_backbone(), no_augment(), cache);
  CHECK(tm.history.empty());
  CHECK(tm.stopping_reason == "max_epochs");
  ModelParams fresh = ModelParams::init(tiny_backbone(), classes, cfg.seed);
  CHECK(same_params(tm.params, fresh));
}

TEST_CASE("training is bit-identical for a fixed seed") {
  auto [samples, classes] = two_class_set();
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.learning_rate = 0.002;
  cfg.seed = 21;
  PatchCache cache;
  TrainedModel a = train(samples, classes, cfg, tiny_backbone(), no_augment(), cache);
  TrainedModel b = train(samples, classes, cfg, tiny_backbone(), no_augment(), cache);
  CHECK(same_params(a.params, b.params));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
    CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
  }

  TrainConfig other = cfg;
  other.seed = 22;
  TrainedModel c = train(samples, classes, other, tiny_backbone(), no_augment(), cache);
  CHECK(!same_params(a.params, c.params));
}

TEST_CASE("training loss halves within 20 epochs on separable synthetic data") {
  auto [samples, classes] = two_class_set();
  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.early_stop_patience = 20;  // let it run the full budget
  cfg.learning_rate = 0.005;
  cfg.seed = 4;
  PatchCache cache;
  std::ostringstream log;
  TrainedModel tm = train(samples, classes, cfg, tiny_backbone(), no_augment(), cache, &log);
  REQUIRE(!tm.history.empty());
  const double first = tm.history.front().train_loss;
  const double last = tm.history.back().train_loss;
  INFO("first ", first, " last ", last);
  CHECK(last <= 0.5 * first);

  // log has one data line per epoch plus comment lines
  int data_lines = 0;
  std::string line;
  std::istringstream in(log.str());
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++data_lines;
  CHECK(data_lines == static_cast<int>(tm.history.size()));
}

TEST_CASE("early stopping restores the best validation weights") {
  auto [samples, classes] = two_class_set();
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.early_stop_patience = 3;
  cfg.learning_rate = 0.05;  // deliberately jumpy so validation loss oscillates
  cfg.validation_fraction = 0.25;
  cfg.seed = 15;
  PatchCache cache;
  TrainedModel tm = train(samples, classes, cfg, tiny_backbone(), no_augment(), cache);
  REQUIRE(!tm.history.empty());

  double best = tm.history.front().val_loss;
  for (const auto& h : tm.history) best = std::min(best, h.val_loss);

  // recompute the validation loss of the returned weights with a replica of
  // the split; it must equal the best recorded epoch, not the last one
  const std::vector<int> val_idx = replica_val_split(samples, classes, cfg);
  REQUIRE(!val_idx.empty());
  double val_sum = 0.0;
  for (int idx : val_idx) {
    const Sample& s = samples[static_cast<std::size_t>(idx)];
    std::vector<PatchImage> bag;
    for (const auto& p : s.patch_paths) bag.push_back(load_patch(p, cache));
    const BagPrediction pred = predict_bag(bag, tm.params);
    const int target = s.label == classes[0] ? 0 : 1;
    val_sum += static_cast<double>(ops::cross_entropy_forward(pred.probabilities, target));
  }
  const double restored = val_sum / static_cast<double>(val_idx.size());
  CHECK(restored == doctest::Approx(best).epsilon(1e-12));

  if (tm.stopping_reason == "early_stop")
    CHECK(tm.history.size() < static_cast<std::size_t>(cfg.max_epochs));
}

TEST_CASE("samples without patches are skipped with a logged warning") {
  auto [samples, classes] = two_class_set();
  samples.push_back({"ghost", "healthy", {}});
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.seed = 2;
  PatchCache cache;
  std::ostringstream log;
  TrainedModel tm = train(samples, classes, cfg, tiny_backbone(), no_augment(), cache, &log);
  CHECK(tm.history.size() == 1);
  CHECK(log.str().find("#warning") != std::string::npos);
  CHECK(log.str().find("ghost") != std::string::npos);
}

TEST_CASE("train rejects bad label spaces") {
  auto [samples, classes] = two_class_set();
  TrainConfig cfg;
  cfg.max_epochs = 1;
  PatchCache cache;
  CHECK_THROWS_AS(train(samples, {"healthy"}, cfg, tiny_backbone(), no_augment(), cache),
                  ConfigError);
  CHECK_THROWS_AS(train(samples, {"healthy", "healthy"}, cfg, tiny_backbone(), no_augment(), cache),
                  ConfigError);
  CHECK_THROWS_AS(train(samples, {"healthy", "class-b"}, cfg, tiny_backbone(), no_augment(), cache),
                  DataError);  // class-a samples fall outside the label space
  CHECK_THROWS_AS(train({}, classes, cfg, tiny_backbone(), no_augment(), cache), DataError);
}

TEST_CASE("diverging runs abort naming the epoch and sample") {
  auto [samples, classes] = two_class_set();
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.learning_rate = 1e25;
  cfg.seed = 3;
  PatchCache cache;
  try {
    train(samples, classes, cfg, tiny_backbone(), no_augment(), cache);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("sample '") != std::string::npos);
  }
}

TEST_CASE("tta with one replica and no augmentation equals predict_bag") {
  auto [samples, classes] = two_class_set();
  PatchCache cache;
  ModelParams model = ModelParams::init(tiny_backbone(), classes, 77);
  const Sample& s = samples[1];

  Rng rng(5);
  const Tensor tta = evaluate_with_tta(model, s, no_augment(), 1, rng, cache);

  std::vector<PatchImage> bag;
  for (const auto& p : s.patch_paths) bag.push_back(load_patch(p, cache));
  const BagPrediction pred = predict_bag(bag, model);
  REQUIRE(tta.numel() == pred.probabilities.numel());
  for (std::size_t i = 0; i < tta.data.size(); ++i)
    CHECK(tta.data[i] == pred.probabilities.data[i]);
}

TEST_CASE("tta averages stay a probability vector and are seed-deterministic") {
  auto [samples, classes] = two_class_set();
  PatchCache cache;
  ModelParams model = ModelParams::init(tiny_backbone(), classes, 78);
  const Sample& s = samples[0];
  AugmentConfig aug;  // full augmentation on

  Rng rng_a(9);
  const Tensor a = evaluate_with_tta(model, s, aug, 6, rng_a, cache);
  Rng rng_b(9);
  const Tensor b = evaluate_with_tta(model, s, aug, 6, rng_b, cache);
  CHECK(a.data == b.data);

  double sum = 0.0;
  for (float v : a.data) {
    CHECK(v >= 0.0f);
    sum += static_cast<double>(v);
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));

  Sample empty{"none", classes[0], {}};
  Rng rng_c(1);
  CHECK_THROWS_AS(evaluate_with_tta(model, empty, aug, 2, rng_c, cache), EmptyBagError);
  CHECK_THROWS_AS(evaluate_with_tta(model, s, aug, 0, rng_c, cache), ConfigError);
}
