#pragma once

#include <string>

#include "millie/augment.hpp"
#include "millie/dataio.hpp"
#include "millie/model.hpp"
#include "millie/report.hpp"
#include "millie/segmentation.hpp"
#include "millie/training.hpp"

namespace millie {

struct MetricsConfig {
  double match_radius = 10.0;  // px, for segmentation scoring
  int pca_dims = 2;

  void validate() const;
};

// Everything a command run is allowed to tune, loadable from one JSON file.
// Unknown keys anywhere in the file are rejected so typos cannot silently
// fall back to defaults.
struct RunConfig {
  SegmentationParams seg;
  AugmentConfig aug;
  BackboneConfig backbone{32, {8, 16, 32}};
  int head_width1 = 256;
  int head_width2 = 64;
  TrainConfig train;
  SyntheticConfig synth;
  MetricsConfig metrics;

  void validate() const;
};

RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);

// The fully resolved settings of a run, embedded into every report.
Json effective_config(const RunConfig& config);

}  // namespace millie
