#include "millie/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "millie/ops.hpp"
#include "millie/tape.hpp"

namespace millie {

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Forward the whole bag on one tape; backward only when asked. The raw and
// taped paths share kernels, so validation via predict_bag matches exactly.
double bag_loss(ModelParams& params, const std::vector<PatchImage>& patches, int target,
                bool do_backward) {
  Tape tape;
  TapedParams ids = register_params(tape, params);
  std::vector<int> feats;
  feats.reserve(patches.size());
  for (const auto& p : patches) {
    const int x_id = tape.input(preprocess_patch(p, params.config.input_side));
    feats.push_back(embed_patch_taped(tape, ids, x_id, params.config));
  }
  const int fused = tape.max_rows(tape.stack_rows(feats));
  const int probs = head_forward_taped(tape, ids, fused);
  const int loss_id = tape.cross_entropy(probs, target);
  const double loss = static_cast<double>(tape.value(loss_id).data[0]);
  if (do_backward && std::isfinite(loss)) tape.backward(loss_id);
  return loss;
}

std::vector<PatchImage> load_full_bag(const Sample& sample, PatchCache& cache) {
  std::vector<PatchImage> out;
  out.reserve(sample.patch_paths.size());
  for (const auto& p : sample.patch_paths) out.push_back(load_patch(p, cache));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive and finite");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (bag_size_cap < 1) throw ConfigError("bag_size_cap must be at least 1");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be at least 1");
  if (!(validation_fraction > 0.0) || !(validation_fraction < 0.5))
    throw ConfigError("validation_fraction must be in (0, 0.5), got " +
                      std::to_string(validation_fraction));
  if (tta_replicas < 1) throw ConfigError("tta_replicas must be at least 1");
}

std::vector<PatchImage> sample_bag(const Sample& sample, int cap, Rng& rng, PatchCache& cache) {
  if (cap < 1) throw ConfigError("bag_size_cap must be at least 1");
  const int n = static_cast<int>(sample.patch_paths.size());
  if (n == 0) throw EmptyBagError("sample '" + sample.sample_id + "' has no patches");
  std::vector<PatchImage> bag;
  const std::vector<int> idx = rng.sample_without_replacement(n, std::min(n, cap));
  bag.reserve(idx.size());
  for (int i : idx) bag.push_back(load_patch(sample.patch_paths[static_cast<std::size_t>(i)], cache));
  return bag;
}

TrainedModel train(const std::vector<Sample>& dataset, const std::vector<std::string>& classes,
                   const TrainConfig& config, const BackboneConfig& backbone,
                   const AugmentConfig& augment_config, PatchCache& cache, std::ostream* log,
                   int head_width1, int head_width2) {
  config.validate();
  backbone.validate();
  augment_config.validate();
  if (classes.size() < 2) throw ConfigError("label space needs at least 2 classes");
  if (dataset.empty()) throw DataError("training set is empty");

  std::unordered_map<std::string, int> class_index;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!class_index.emplace(classes[i], static_cast<int>(i)).second)
      throw ConfigError("duplicate class '" + classes[i] + "' in the label space");
  }

  auto say = [&](const std::string& line) {
    if (log != nullptr) *log << line << '\n';
  };

  // usable samples per class, in label-space order
  std::vector<std::vector<int>> by_class(classes.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Sample& s = dataset[i];
    auto it = class_index.find(s.label);
    if (it == class_index.end())
      throw DataError("sample '" + s.sample_id + "' has label '" + s.label +
                      "' outside the label space");
    if (s.patch_paths.empty()) {
      say("#warning: sample '" + s.sample_id + "' has no patches and was skipped");
      continue;
    }
    by_class[static_cast<std::size_t>(it->second)].push_back(static_cast<int>(i));
  }

  std::vector<int> train_idx, val_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<int> members = by_class[c];
    if (members.empty()) continue;
    Rng split_rng = Rng::derive(config.seed, {fnv1a64("val-split"), static_cast<std::uint64_t>(c)});
    split_rng.shuffle(members);
    const int n = static_cast<int>(members.size());
    const int n_val = std::clamp(
        static_cast<int>(std::lround(config.validation_fraction * n)), 0, n - 1);
    for (int i = 0; i < n; ++i) (i < n_val ? val_idx : train_idx).push_back(members[static_cast<std::size_t>(i)]);
  }
  if (train_idx.empty()) throw DataError("no usable training samples after the validation split");
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  const bool val_is_train = val_idx.empty();
  if (val_is_train) {
    say("#warning: validation split is empty; stopping on training-set loss");
    val_idx = train_idx;
  }

  TrainedModel out;
  out.config = config;
  out.stopping_reason = "max_epochs";
  out.params = ModelParams::init(backbone, classes, config.seed, head_width1, head_width2);

  ModelParams best = out.params;
  double best_loss = std::numeric_limits<double>::infinity();
  int patience = 0;
  const auto lr = static_cast<float>(config.learning_rate);

  say("#epoch\ttrain_loss\tval_loss\tval_acc");
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<int> order = train_idx;
    Rng order_rng = Rng::derive(config.seed, {fnv1a64("epoch-order"),
                                              static_cast<std::uint64_t>(epoch)});
    order_rng.shuffle(order);

    double train_sum = 0.0;
    for (int ds_idx : order) {
      const Sample& s = dataset[static_cast<std::size_t>(ds_idx)];
      Rng bag_rng = Rng::derive(config.seed, {fnv1a64("bag"), static_cast<std::uint64_t>(epoch),
                                              static_cast<std::uint64_t>(ds_idx)});
      std::vector<PatchImage> bag = sample_bag(s, config.bag_size_cap, bag_rng, cache);
      for (auto& p : bag) p = augment(p, augment_config, bag_rng);
      const int target = class_index.at(s.label);
      const double loss = bag_loss(out.params, bag, target, true);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            " on sample '" + s.sample_id + "'");
      try {
        sgd_step(out.params.parameters(), lr);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            " on sample '" + s.sample_id + "'");
      }
      train_sum += loss;
    }

    double val_sum = 0.0;
    int val_hits = 0;
    for (int ds_idx : val_idx) {
      const Sample& s = dataset[static_cast<std::size_t>(ds_idx)];
      const BagPrediction pred = predict_bag(load_full_bag(s, cache), out.params);
      const int target = class_index.at(s.label);
      val_sum += static_cast<double>(ops::cross_entropy_forward(pred.probabilities, target));
      const auto& pr = pred.probabilities.data;
      const int arg = static_cast<int>(std::max_element(pr.begin(), pr.end()) - pr.begin());
      val_hits += arg == target;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_sum / static_cast<double>(order.size());
    stats.val_loss = val_sum / static_cast<double>(val_idx.size());
    stats.val_accuracy = static_cast<double>(val_hits) / static_cast<double>(val_idx.size());
    out.history.push_back(stats);
    say(std::to_string(epoch) + '\t' + fmt6(stats.train_loss) + '\t' + fmt6(stats.val_loss) +
        '\t' + fmt6(stats.val_accuracy));

    if (stats.val_loss < best_loss) {
      best_loss = stats.val_loss;
      best = out.params;
      patience = 0;
    } else if (++patience >= config.early_stop_patience) {
      out.stopping_reason = "early_stop";
      say("#early stop at epoch " + std::to_string(epoch) + ", best val_loss " + fmt6(best_loss));
      break;
    }
  }

  out.params = best;
  return out;
}

Tensor evaluate_with_tta(const ModelParams& params, const Sample& sample,
                         const AugmentConfig& augment_config, int replicas, Rng& rng,
                         PatchCache& cache) {
  if (replicas < 1) throw ConfigError("tta_replicas must be at least 1");
  augment_config.validate();
  const std::vector<PatchImage> patches = load_full_bag(sample, cache);
  if (patches.empty()) throw EmptyBagError("sample '" + sample.sample_id + "' has no patches");

  std::vector<double> acc(static_cast<std::size_t>(params.n_classes()), 0.0);
  for (int r = 0; r < replicas; ++r) {
    std::vector<PatchImage> bag;
    bag.reserve(patches.size());
    for (const auto& p : patches) bag.push_back(augment(p, augment_config, rng));
    const BagPrediction pred = predict_bag(bag, params);
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc[i] += static_cast<double>(pred.probabilities.data[i]);
  }
  Tensor mean = Tensor::zeros({params.n_classes()});
  for (std::size_t i = 0; i < acc.size(); ++i)
    mean.data[i] = static_cast<float>(acc[i] / static_cast<double>(replicas));
  return mean;
}

}  // namespace millie
