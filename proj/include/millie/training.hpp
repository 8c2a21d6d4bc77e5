#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "millie/augment.hpp"
#include "millie/dataio.hpp"
#include "millie/model.hpp"
#include "millie/rng.hpp"

namespace millie {

struct TrainConfig {
  double learning_rate = 0.0003;
  int max_epochs = 100;
  int bag_size_cap = 50;
  int early_stop_patience = 10;
  double validation_fraction = 0.15;
  int tta_replicas = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainedModel {
  ModelParams params;
  std::vector<EpochStats> history;
  TrainConfig config;
  std::string stopping_reason;  // "early_stop" or "max_epochs"
};

// Uniform draw of min(N, cap) patches without replacement, fresh each call.
std::vector<PatchImage> sample_bag(const Sample& sample, int cap, Rng& rng, PatchCache& cache);

// One bag per gradient step, epoch-shuffled order, validation split held out
// up front, early stopping on validation loss with best-weights restore.
// Writes one "epoch\ttrain_loss\tval_loss\tval_acc" line per epoch to log;
// warnings go to the same stream as "#" comment lines.
TrainedModel train(const std::vector<Sample>& dataset, const std::vector<std::string>& classes,
                   const TrainConfig& config, const BackboneConfig& backbone,
                   const AugmentConfig& augment_config, PatchCache& cache,
                   std::ostream* log = nullptr, int head_width1 = 256, int head_width2 = 64);

// Mean probabilities over `replicas` augmented passes of the full patch set.
// With replicas = 1 and augmentation disabled this equals predict_bag.
Tensor evaluate_with_tta(const ModelParams& params, const Sample& sample,
                         const AugmentConfig& augment_config, int replicas, Rng& rng,
                         PatchCache& cache);

}  // namespace millie
