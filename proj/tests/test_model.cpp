#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "millie/gradcheck.hpp"
#include "millie/model.hpp"
#include "millie/rng.hpp"

using namespace millie;

namespace {

PatchImage random_patch(Rng& rng, const std::string& id) {
  PatchImage patch;
  patch.image = RgbImage(kPatchSide, kPatchSide);
  for (auto& px : patch.image.pixels) px = static_cast<std::uint8_t>(rng.below(256));
  patch.source_id = id;
  return patch;
}

BackboneConfig tiny_config() {
  BackboneConfig cfg;
  cfg.input_side = 8;
  cfg.channels = {2, 3};
  return cfg;
}

ModelParams tiny_model(std::uint64_t seed) {
  return ModelParams::init(tiny_config(), {"neg", "pos"}, seed, 4, 3);
}

// head with hand-picked weights; all downstream numbers are frozen from a
// double-precision evaluation of the same arithmetic
MilHead hand_head() {
  Rng rng = Rng::derive(0, {0});
  MilHead head(2, 2, 2, 2, rng);
  head.w1.value.data = {0.6f, -0.2f, 0.25f, 0.4f};
  head.b1.value.data = {0.0f, 0.0f};
  head.w2.value.data = {1.0f, 0.5f, 0.3f, -0.7f};
  head.b2.value.data = {0.05f, -0.05f};
  head.w3.value.data = {2.0f, -0.5f, 0.5f, 0.6f};
  head.b3.value.data = {0.0f, 0.0f};
  return head;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  float m = 0.0f;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("backbone config validates pooling divisibility") {
  BackboneConfig cfg;
  CHECK_NOTHROW(cfg.validate());  // 64 over 4 blocks -> 4
  CHECK(cfg.feature_dim() == 128);

  cfg.input_side = 60;  // 60/16 is fractional
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = BackboneConfig{};
  cfg.channels = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = BackboneConfig{};
  cfg.input_side = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = tiny_config();  // 8 over 2 blocks -> 2
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.feature_dim() == 3);
}

TEST_CASE("init produces named, shaped, Kaiming-scaled parameters") {
  ModelParams params = ModelParams::init(BackboneConfig{}, {"neg", "pos"}, 11);
  REQUIRE(params.blocks.size() == 4);
  CHECK(params.blocks[0].weight.value.shape() == std::vector<int>{16, 3, 3, 3});
  CHECK(params.blocks[1].weight.value.shape() == std::vector<int>{32, 16, 3, 3});
  CHECK(params.blocks[3].weight.value.shape() == std::vector<int>{128, 64, 3, 3});
  CHECK(params.blocks[2].bias.value.shape() == std::vector<int>{64});
  CHECK(params.head.w1.value.shape() == std::vector<int>{128, 256});
  CHECK(params.head.w2.value.shape() == std::vector<int>{256, 64});
  CHECK(params.head.w3.value.shape() == std::vector<int>{64, 2});
  CHECK(params.head.b3.value.shape() == std::vector<int>{2});
  CHECK(params.blocks[0].weight.name == "backbone.conv1.weight");
  CHECK(params.blocks[3].bias.name == "backbone.conv4.bias");
  CHECK(params.head.w1.name == "head.fc1.weight");
  CHECK(params.head.b3.name == "head.fc3.bias");
  CHECK_NOTHROW(params.validate());

  // biases start at zero
  for (float v : params.blocks[0].bias.value.data) CHECK(v == 0.0f);
  for (float v : params.head.b1.value.data) CHECK(v == 0.0f);

  // conv2 weights: fan_in = 16*9 = 144, so std should be sqrt(2/144)
  const auto& w = params.blocks[1].weight.value.data;
  double sum = 0, sum_sq = 0;
  for (float v : w) {
    sum += v;
    sum_sq += static_cast<double>(v) * v;
  }
  const double mean = sum / static_cast<double>(w.size());
  const double sd = std::sqrt(sum_sq / static_cast<double>(w.size()) - mean * mean);
  const double expect = std::sqrt(2.0 / 144.0);
  CHECK(std::abs(mean) < 0.2 * expect);
  CHECK(sd == doctest::Approx(expect).epsilon(0.1));

  // deterministic per seed, distinct across seeds
  ModelParams again = ModelParams::init(BackboneConfig{}, {"neg", "pos"}, 11);
  CHECK(again.blocks[0].weight.value.data == params.blocks[0].weight.value.data);
  ModelParams other = ModelParams::init(BackboneConfig{}, {"neg", "pos"}, 12);
  CHECK(other.blocks[0].weight.value.data != params.blocks[0].weight.value.data);

  // parameters() walks blocks then head, weight before bias
  auto ptrs = params.parameters();
  REQUIRE(ptrs.size() == 4 * 2 + 6);
  CHECK(ptrs[0]->name == "backbone.conv1.weight");
  CHECK(ptrs[1]->name == "backbone.conv1.bias");
  CHECK(ptrs[8]->name == "head.fc1.weight");
  CHECK(ptrs[13]->name == "head.fc3.bias");

  CHECK_THROWS_AS(ModelParams::init(BackboneConfig{}, {"solo"}, 1), ConfigError);
  CHECK_THROWS_AS(ModelParams::init(BackboneConfig{}, {}, 1), ConfigError);
}

TEST_CASE("preprocess scales bytes into [0,1] planes") {
  PatchImage patch;
  patch.image = RgbImage(kPatchSide, kPatchSide);
  for (int y = 0; y < kPatchSide; ++y)
    for (int x = 0; x < kPatchSide; ++x) {
      patch.image.at(y, x, 0) = 100;
      patch.image.at(y, x, 1) = 150;
      patch.image.at(y, x, 2) = 200;
    }
  const Tensor t = preprocess_patch(patch, 50);
  REQUIRE(t.shape() == std::vector<int>{3, 50, 50});
  for (int i = 0; i < 50 * 50; ++i) {
    CHECK(t.data[static_cast<std::size_t>(i)] == doctest::Approx(100.0 / 255.0).epsilon(1e-6));
    CHECK(t.data[static_cast<std::size_t>(2500 + i)] ==
          doctest::Approx(150.0 / 255.0).epsilon(1e-6));
    CHECK(t.data[static_cast<std::size_t>(5000 + i)] ==
          doctest::Approx(200.0 / 255.0).epsilon(1e-6));
  }

  // left half red, right half green; 2x2 boxes align with the split
  for (int y = 0; y < kPatchSide; ++y)
    for (int x = 0; x < kPatchSide; ++x) {
      patch.image.at(y, x, 0) = x < 100 ? 255 : 0;
      patch.image.at(y, x, 1) = x < 100 ? 0 : 255;
      patch.image.at(y, x, 2) = 0;
    }
  const Tensor h = preprocess_patch(patch, 100);
  REQUIRE(h.shape() == std::vector<int>{3, 100, 100});
  for (int x = 0; x < 100; ++x) {
    CHECK(h.at3(0, 30, x) == doctest::Approx(x < 50 ? 1.0 : 0.0));
    CHECK(h.at3(1, 30, x) == doctest::Approx(x < 50 ? 0.0 : 1.0));
    CHECK(h.at3(2, 30, x) == doctest::Approx(0.0));
  }

  PatchImage wrong;
  wrong.image = RgbImage(64, 64);
  CHECK_THROWS_AS(preprocess_patch(wrong, 32), DimensionError);
}

TEST_CASE("fuse is an elementwise max with provenance") {
  const Tensor a = Tensor::vector({1.0f, 5.0f, 3.0f});
  const Tensor b = Tensor::vector({4.0f, 2.0f, 6.0f});
  std::vector<int> argmax;
  const Tensor fused = fuse({a, b}, &argmax);
  CHECK(fused.data == std::vector<float>{4.0f, 5.0f, 6.0f});
  CHECK(argmax == std::vector<int>{1, 0, 1});

  // ties pick the earliest instance
  const Tensor c = Tensor::vector({4.0f, 5.0f, 6.0f});
  std::vector<int> tie_argmax;
  const Tensor tied = fuse({c, c}, &tie_argmax);
  CHECK(tie_argmax == std::vector<int>{0, 0, 0});
  CHECK(tied.data == c.data);

  CHECK_THROWS_AS(fuse({}, nullptr), EmptyBagError);

  const Tensor short_vec = Tensor::vector({1.0f, 2.0f});
  CHECK_THROWS_AS(fuse({a, short_vec}, nullptr), DimensionError);
}

TEST_CASE("head forward matches the frozen hand computation") {
  const MilHead head = hand_head();
  const Tensor fused = Tensor::vector({1.0f, -0.5f});
  const Tensor probs = head_forward(fused, head);
  REQUIRE(probs.shape() == std::vector<int>{2});
  CHECK(probs.data[0] == doctest::Approx(0.784781239227).epsilon(1e-5));
  CHECK(probs.data[1] == doctest::Approx(0.215218760773).epsilon(1e-5));
  CHECK(probs.data[0] + probs.data[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zeroed weights give uniform class probabilities") {
  ModelParams params = tiny_model(13);
  for (Parameter* p : params.parameters()) std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
  Rng rng = Rng::derive(50, {0});
  const PatchImage patch = random_patch(rng, "p0");
  const BagPrediction pred = predict_bag({patch}, params);
  REQUIRE(pred.probabilities.numel() == 2);
  CHECK(pred.probabilities.data[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(pred.probabilities.data[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("embedding is deterministic and sized by the last block") {
  ModelParams params = tiny_model(14);
  Rng rng = Rng::derive(51, {0});
  const PatchImage patch = random_patch(rng, "p0");
  const Tensor f1 = embed_patch(patch, params);
  const Tensor f2 = embed_patch(patch, params);
  REQUIRE(f1.shape() == std::vector<int>{3});
  CHECK(f1.data == f2.data);
}

TEST_CASE("bag prediction is invariant to instance order and duplication") {
  ModelParams params = tiny_model(15);
  Rng rng = Rng::derive(52, {0});
  std::vector<PatchImage> bag;
  for (int i = 0; i < 4; ++i) bag.push_back(random_patch(rng, "p" + std::to_string(i)));

  const BagPrediction base = predict_bag(bag, params);
  std::vector<PatchImage> shuffled = {bag[2], bag[0], bag[3], bag[1]};
  const BagPrediction perm = predict_bag(shuffled, params);
  CHECK(base.probabilities.data == perm.probabilities.data);  // bit exact

  std::vector<PatchImage> doubled = bag;
  doubled.push_back(bag[1]);  // duplicate cannot change an elementwise max
  const BagPrediction dup = predict_bag(doubled, params);
  CHECK(base.probabilities.data == dup.probabilities.data);

  CHECK_THROWS_AS(predict_bag({}, params), EmptyBagError);
}

TEST_CASE("fusion argmax reports the winning instance per feature") {
  ModelParams params = tiny_model(16);
  Rng rng = Rng::derive(53, {0});
  std::vector<PatchImage> bag;
  for (int i = 0; i < 3; ++i) bag.push_back(random_patch(rng, "p" + std::to_string(i)));

  std::vector<Tensor> features;
  for (const auto& p : bag) features.push_back(embed_patch(p, params));
  const BagPrediction pred = predict_bag(bag, params);
  REQUIRE(pred.fusion_argmax.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) {
    int expect = 0;
    for (int i = 1; i < 3; ++i)
      if (features[static_cast<std::size_t>(i)].data[f] >
          features[static_cast<std::size_t>(expect)].data[f])
        expect = i;
    CHECK(pred.fusion_argmax[f] == expect);
  }
}

TEST_CASE("scoring one cell equals a singleton bag") {
  ModelParams params = tiny_model(17);
  Rng rng = Rng::derive(54, {0});
  const PatchImage patch = random_patch(rng, "solo");
  const Tensor solo = score_cell(patch, params);
  const BagPrediction bag = predict_bag({patch}, params);
  CHECK(solo.data == bag.probabilities.data);
}

TEST_CASE("embedding extraction matches the forward pass layer by layer") {
  ModelParams params = tiny_model(18);
  params.head = hand_head();
  params.head.w1.name = "head.fc1.weight";  // keep naming consistent after swap

  Rng rng = Rng::derive(55, {0});
  const PatchImage patch = random_patch(rng, "p0");
  const Tensor feats = embed_patch(patch, params);

  const Tensor post_conv = extract_embedding(patch, params, EmbeddingLayer::PostFusionConv);
  CHECK(post_conv.data == feats.data);

  // tiny backbone yields 3 features but the hand head takes 2, so rebuild a
  // matching head for the fc1 check
  ModelParams p2 = tiny_model(19);
  const Tensor feats2 = embed_patch(patch, p2);
  const Tensor fc1 = extract_embedding(patch, p2, EmbeddingLayer::Fc1);
  REQUIRE(fc1.numel() == p2.head.w1.value.dim(1));
  for (int m = 0; m < p2.head.w1.value.dim(1); ++m) {
    float acc = p2.head.b1.value.data[static_cast<std::size_t>(m)];
    for (int n = 0; n < p2.head.w1.value.dim(0); ++n)
      acc += feats2.data[static_cast<std::size_t>(n)] * p2.head.w1.value.at2(n, m);
    CHECK(fc1.data[static_cast<std::size_t>(m)] ==
          doctest::Approx(std::max(0.0f, acc)).epsilon(1e-5));
  }

  CHECK(parse_embedding_layer("post-fusion-conv") == EmbeddingLayer::PostFusionConv);
  CHECK(parse_embedding_layer("fc1") == EmbeddingLayer::Fc1);
  CHECK_THROWS_WITH_AS(parse_embedding_layer("fc9"),
                       doctest::Contains("post-fusion-conv"), ConfigError);
}

TEST_CASE("taped forward agrees with the raw forward bit for bit") {
  ModelParams params = tiny_model(20);
  Rng rng = Rng::derive(56, {0});
  const PatchImage patch = random_patch(rng, "p0");

  const Tensor raw_feats = embed_patch(patch, params);
  const Tensor raw_probs = score_cell(patch, params);

  Tape tape;
  TapedParams ids = register_params(tape, params);
  const int x_id = tape.input(preprocess_patch(patch, params.config.input_side));
  const int feat_id = embed_patch_taped(tape, ids, x_id, params.config);
  const int prob_id = head_forward_taped(tape, ids, feat_id);

  CHECK(tape.value(feat_id).data == raw_feats.data);
  CHECK(tape.value(prob_id).data == raw_probs.data);
}

TEST_CASE("one optimizer step on a bag lowers the loss") {
  ModelParams params = tiny_model(21);
  Rng rng = Rng::derive(57, {0});
  std::vector<PatchImage> bag;
  for (int i = 0; i < 2; ++i) bag.push_back(random_patch(rng, "p" + std::to_string(i)));

  auto bag_loss = [&](bool step) {
    Tape tape;
    TapedParams ids = register_params(tape, params);
    std::vector<int> feat_ids;
    for (const auto& p : bag) {
      const int x_id = tape.input(preprocess_patch(p, params.config.input_side));
      feat_ids.push_back(embed_patch_taped(tape, ids, x_id, params.config));
    }
    const int stacked = tape.stack_rows(feat_ids);
    std::vector<int> argmax;
    const int fused = tape.max_rows(stacked, &argmax);
    const int probs = head_forward_taped(tape, ids, fused);
    const int loss = tape.cross_entropy(probs, 1);
    const float before = tape.value(loss).data[0];
    if (step) {
      tape.backward(loss);
      sgd_step(params.parameters(), 0.05f);
    }
    return before;
  };

  const float first = bag_loss(true);
  const float second = bag_loss(false);
  CHECK(std::isfinite(first));
  CHECK(second < first);
}
