#pragma once

#include <cstdint>
#include <string>

#include "millie/model.hpp"
#include "millie/training.hpp"

namespace millie {

// Everything the binary header carries besides the weights themselves.
struct CheckpointMeta {
  int format_version = 1;
  std::uint64_t seed = 0;
  TrainConfig train;
  BackboneConfig backbone;
  std::vector<std::string> class_names;
  std::string stopping_reason;
};

// Binary layout, little-endian throughout:
//   bytes 0..7   magic "MILLIE01" (last two bytes are the format version)
//   u32          header length, then that many bytes of UTF-8 key\tvalue lines
//   per tensor   u32 name length, name bytes, u32 rank, u32 dims[rank],
//                raw float32 payload
//   u32          CRC-32 of all body bytes (everything after the header)
void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path);
void save_checkpoint(const TrainedModel& model, std::uint64_t seed, const std::string& path);

ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace millie
