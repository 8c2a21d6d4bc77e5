#pragma once

#include <string>
#include <vector>

#include "millie/image.hpp"
#include "millie/rng.hpp"
#include "millie/tape.hpp"
#include "millie/tensor.hpp"

namespace millie {

// VGG-style stack: per block a 3x3 conv (stride 1, pad 1), ReLU, 2x2
// max-pool; a global spatial max over the last feature map yields the
// n_f-long patch feature vector.
struct BackboneConfig {
  int input_side = 64;
  std::vector<int> channels = {16, 32, 64, 128};

  int feature_dim() const { return channels.empty() ? 0 : channels.back(); }
  void validate() const;
};

struct ConvBlock {
  Parameter weight;  // [C_out, C_in, 3, 3]
  Parameter bias;    // [C_out]
};

// Two FC layers plus a classifier (Eq. 1). Widths default to 256 and 64;
// the shapes only need to chain.
struct MilHead {
  Parameter w1, b1, w2, b2, w3, b3;

  MilHead();
  MilHead(int n_f, int n_classes, int width1, int width2, Rng& rng);
  void validate() const;
  int n_classes() const { return w3.value.dim(1); }
  int n_features() const { return w1.value.dim(0); }
};

struct ModelParams {
  BackboneConfig config;
  std::vector<ConvBlock> blocks;
  MilHead head;
  std::vector<std::string> class_names;  // order fixed at construction

  static ModelParams init(const BackboneConfig& config, std::vector<std::string> class_names,
                          std::uint64_t seed, int head_width1 = 256, int head_width2 = 64);
  std::vector<Parameter*> parameters();  // stable order
  int n_classes() const { return static_cast<int>(class_names.size()); }
  void validate() const;
};

struct BagPrediction {
  Tensor probabilities;            // length C
  std::vector<int> fusion_argmax;  // winning instance per feature, length n_f
};

// 200x200 byte patch -> [3, side, side] float tensor in [0,1] via area
// averaging.
Tensor preprocess_patch(const PatchImage& patch, int input_side);

Tensor embed_patch(const PatchImage& patch, const ModelParams& params);
Tensor fuse(const std::vector<Tensor>& features, std::vector<int>* argmax = nullptr);
Tensor head_forward(const Tensor& fused, const MilHead& head);
BagPrediction predict_bag(const std::vector<PatchImage>& patches, const ModelParams& params);
Tensor score_cell(const PatchImage& patch, const ModelParams& params);

enum class EmbeddingLayer { PostFusionConv, Fc1 };
EmbeddingLayer parse_embedding_layer(const std::string& name);
Tensor extract_embedding(const PatchImage& patch, const ModelParams& params, EmbeddingLayer layer);

// Taped counterparts share the kernels with the raw path, so values agree
// bit for bit. Parameters are registered once per tape and reused across
// instances.
struct TapedParams {
  std::vector<std::pair<int, int>> blocks;  // (weight id, bias id)
  int w1, b1, w2, b2, w3, b3;
};
TapedParams register_params(Tape& tape, ModelParams& params);
int embed_patch_taped(Tape& tape, const TapedParams& ids, int x_id, const BackboneConfig& config);
int head_forward_taped(Tape& tape, const TapedParams& ids, int fused_id);

}  // namespace millie
