#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "millie/runconfig.hpp"

namespace millie {

// Shared by the CLI binary and the acceptance harness: each command reads its
// inputs, writes its artifacts under out_dir, and returns the report it also
// wrote to <out_dir>/report.json. Progress and warnings go to `log`.

struct SegmentArgs {
  std::string fields_path;  // "#millie-fields v1" listing
  std::string out_dir;
};
// Returns the report; report["total_patches"] == 0 means no cells anywhere.
Json cmd_segment(const SegmentArgs& args, const RunConfig& config, std::ostream& log);

struct TrainArgs {
  std::string manifest_path;
  std::string out_dir;
};
Json cmd_train(const TrainArgs& args, const RunConfig& config, std::ostream& log);

struct CrossvalArgs {
  std::string manifest_path;
  std::string cells_path;  // optional; enables cell-level scoring
  std::string out_dir;
  int k = 3;
  int jobs = 1;  // fold-level workers; results merge in fold order
};
Json cmd_crossval(const CrossvalArgs& args, const RunConfig& config, std::ostream& log);

struct PredictArgs {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string out_dir;
};
Json cmd_predict(const PredictArgs& args, const RunConfig& config, std::ostream& log);

struct ScoreCellsArgs {
  std::string checkpoint_path;
  std::string cells_path;
  std::string out_dir;
};
Json cmd_score_cells(const ScoreCellsArgs& args, const RunConfig& config, std::ostream& log);

struct PcaArgs {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string cells_path;  // optional; colors points by cell label
  std::string layer = "fc1";  // "conv" or "fc1"
  std::string out_dir;
};
Json cmd_pca(const PcaArgs& args, const RunConfig& config, std::ostream& log);

struct SynthArgs {
  std::string out_dir;
};
Json cmd_synth(const SynthArgs& args, const RunConfig& config, std::ostream& log);

}  // namespace millie
