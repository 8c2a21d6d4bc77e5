#include "millie/model.hpp"

#include <cmath>

#include "millie/errors.hpp"
#include "millie/ops.hpp"

namespace millie {

void BackboneConfig::validate() const {
  if (input_side < 1) throw ConfigError("backbone input_side must be positive");
  if (channels.empty()) throw ConfigError("backbone needs at least one conv block");
  for (int c : channels)
    if (c < 1) throw ConfigError("backbone channel counts must be positive");
  int side = input_side;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (side % 2 != 0)
      throw ConfigError("input_side " + std::to_string(input_side) + " is not divisible by 2^" +
                        std::to_string(channels.size()) + " (blocks)");
    side /= 2;
  }
}

namespace {

Tensor kaiming_init(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<float>(rng.gaussian() * std_dev);
  return t;
}

}  // namespace

MilHead::MilHead() = default;

MilHead::MilHead(int n_f, int n_classes, int width1, int width2, Rng& rng)
    : w1("head.fc1.weight", kaiming_init(rng, {n_f, width1}, n_f)),
      b1("head.fc1.bias", Tensor::zeros({width1})),
      w2("head.fc2.weight", kaiming_init(rng, {width1, width2}, width1)),
      b2("head.fc2.bias", Tensor::zeros({width2})),
      w3("head.fc3.weight", kaiming_init(rng, {width2, n_classes}, width2)),
      b3("head.fc3.bias", Tensor::zeros({n_classes})) {}

void MilHead::validate() const {
  if (w1.value.rank() != 2 || w2.value.rank() != 2 || w3.value.rank() != 2)
    throw DimensionError("head weight matrices must be rank 2");
  if (w1.value.dim(1) != w2.value.dim(0) || w2.value.dim(1) != w3.value.dim(0))
    throw DimensionError("head layer shapes do not chain: [" + shape_str(w1.value.shape()) +
                         "] -> [" + shape_str(w2.value.shape()) + "] -> [" +
                         shape_str(w3.value.shape()) + "]");
  if (b1.value.dim(0) != w1.value.dim(1) || b2.value.dim(0) != w2.value.dim(1) ||
      b3.value.dim(0) != w3.value.dim(1))
    throw DimensionError("head bias shapes do not match their layers");
}

ModelParams ModelParams::init(const BackboneConfig& config, std::vector<std::string> class_names,
                              std::uint64_t seed, int head_width1, int head_width2) {
  config.validate();
  if (class_names.size() < 2) throw ConfigError("label space needs at least 2 classes");
  ModelParams p;
  p.config = config;
  p.class_names = std::move(class_names);
  Rng rng = Rng::derive(seed, {fnv1a64("model-init")});
  int c_in = 3;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const int c_out = config.channels[i];
    const std::string prefix = "backbone.conv" + std::to_string(i + 1);
    ConvBlock block{
        Parameter(prefix + ".weight", kaiming_init(rng, {c_out, c_in, 3, 3}, c_in * 9)),
        Parameter(prefix + ".bias", Tensor::zeros({c_out}))};
    p.blocks.push_back(std::move(block));
    c_in = c_out;
  }
  p.head = MilHead(config.feature_dim(), p.n_classes(), head_width1, head_width2, rng);
  return p;
}

std::vector<Parameter*> ModelParams::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
  }
  out.push_back(&head.w1);
  out.push_back(&head.b1);
  out.push_back(&head.w2);
  out.push_back(&head.b2);
  out.push_back(&head.w3);
  out.push_back(&head.b3);
  return out;
}

void ModelParams::validate() const {
  config.validate();
  head.validate();
  if (static_cast<int>(class_names.size()) != head.n_classes())
    throw DimensionError("label space has " + std::to_string(class_names.size()) +
                         " classes but the head emits " + std::to_string(head.n_classes()));
  if (static_cast<int>(blocks.size()) != static_cast<int>(config.channels.size()))
    throw DimensionError("backbone block count does not match config");
  if (head.n_features() != config.feature_dim())
    throw DimensionError("head expects n_f=" + std::to_string(head.n_features()) +
                         " but backbone produces " + std::to_string(config.feature_dim()));
}

Tensor preprocess_patch(const PatchImage& patch, int input_side) {
  const RgbImage& img = patch.image;
  if (img.width != kPatchSide || img.height != kPatchSide)
    throw DimensionError("patch must be " + std::to_string(kPatchSide) + "x" +
                         std::to_string(kPatchSide) + ", got " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
  // split into float planes in [0,1], then box-resample each
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  std::vector<float> plane(n);
  Tensor out = Tensor::zeros({3, input_side, input_side});
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < n; ++i) plane[i] = img.pixels[i * 3 + ch] / 255.0f;
    ops::resize_area_plane(plane.data(), img.height, img.width,
                           out.data.data() + static_cast<std::size_t>(ch) * input_side * input_side,
                           input_side, input_side);
  }
  return out;
}

Tensor embed_patch(const PatchImage& patch, const ModelParams& params) {
  Tensor x = preprocess_patch(patch, params.config.input_side);
  std::vector<std::int64_t> scratch;
  for (const auto& block : params.blocks) {
    x = ops::conv2d_forward(x, block.weight.value, block.bias.value, 1, 1);
    x = ops::relu_forward(x);
    x = ops::maxpool2_forward(x, scratch);
  }
  return ops::global_spatial_max_forward(x, scratch);
}

Tensor fuse(const std::vector<Tensor>& features, std::vector<int>* argmax) {
  if (features.empty()) throw EmptyBagError("fuse over an empty bag");
  Tensor stacked = Tensor::zeros({static_cast<int>(features.size()), features[0].dim(0)});
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!features[i].same_shape(features[0]))
      throw DimensionError("feature vectors disagree in length at instance " + std::to_string(i));
    for (int l = 0; l < features[0].dim(0); ++l)
      stacked.at2(static_cast<int>(i), l) = features[i].data[static_cast<std::size_t>(l)];
  }
  std::vector<int> local;
  Tensor fused = ops::max_reduce_rows_forward(stacked, local);
  if (argmax != nullptr) *argmax = std::move(local);
  return fused;
}

Tensor head_forward(const Tensor& fused, const MilHead& head) {
  head.validate();
  if (fused.rank() != 1 || fused.dim(0) != head.n_features())
    throw DimensionError("fused vector length " + shape_str(fused.shape()) +
                         " does not match head n_f=" + std::to_string(head.n_features()));
  Tensor h = ops::relu_forward(ops::affine_forward(fused, head.w1.value, head.b1.value));
  h = ops::relu_forward(ops::affine_forward(h, head.w2.value, head.b2.value));
  return ops::softmax_forward(ops::affine_forward(h, head.w3.value, head.b3.value));
}

BagPrediction predict_bag(const std::vector<PatchImage>& patches, const ModelParams& params) {
  if (patches.empty()) throw EmptyBagError("predict_bag on an empty bag");
  std::vector<Tensor> features;
  features.reserve(patches.size());
  for (const auto& p : patches) features.push_back(embed_patch(p, params));
  BagPrediction pred;
  const Tensor fused = fuse(features, &pred.fusion_argmax);
  pred.probabilities = head_forward(fused, params.head);
  return pred;
}

Tensor score_cell(const PatchImage& patch, const ModelParams& params) {
  return predict_bag({patch}, params).probabilities;
}

EmbeddingLayer parse_embedding_layer(const std::string& name) {
  if (name == "post-fusion-conv") return EmbeddingLayer::PostFusionConv;
  if (name == "fc1") return EmbeddingLayer::Fc1;
  throw ConfigError("unknown embedding layer '" + name +
                    "' (expected 'post-fusion-conv' or 'fc1')");
}

Tensor extract_embedding(const PatchImage& patch, const ModelParams& params,
                         EmbeddingLayer layer) {
  Tensor features = embed_patch(patch, params);
  if (layer == EmbeddingLayer::PostFusionConv) return features;
  // fc1 tap: the first FC layer's activation
  return ops::relu_forward(ops::affine_forward(features, params.head.w1.value, params.head.b1.value));
}

TapedParams register_params(Tape& tape, ModelParams& params) {
  TapedParams ids;
  for (auto& block : params.blocks)
    ids.blocks.push_back({tape.param(block.weight), tape.param(block.bias)});
  ids.w1 = tape.param(params.head.w1);
  ids.b1 = tape.param(params.head.b1);
  ids.w2 = tape.param(params.head.w2);
  ids.b2 = tape.param(params.head.b2);
  ids.w3 = tape.param(params.head.w3);
  ids.b3 = tape.param(params.head.b3);
  return ids;
}

int embed_patch_taped(Tape& tape, const TapedParams& ids, int x_id,
                      const BackboneConfig& config) {
  (void)config;
  int x = x_id;
  for (const auto& [w, b] : ids.blocks) {
    x = tape.conv2d(x, w, b, 1, 1);
    x = tape.relu(x);
    x = tape.maxpool2(x);
  }
  return tape.global_spatial_max(x);
}

int head_forward_taped(Tape& tape, const TapedParams& ids, int fused_id) {
  int h = tape.relu(tape.affine(fused_id, ids.w1, ids.b1));
  h = tape.relu(tape.affine(h, ids.w2, ids.b2));
  return tape.softmax(tape.affine(h, ids.w3, ids.b3));
}

}  // namespace millie
