#pragma once

#include <filesystem>
#include <string>

#include "gedlab/model.hpp"

namespace gedlab {

// Binary layout:
//   "MHMLA1"                 6-byte magic
//   u32 little-endian        length of the JSON header
//   JSON header              {"config", "manifest": [{name, shape, offset}],
//                             "payload_bytes", "vocab"}
//   payload                  float32 little-endian values, manifest order
// Parameters are stored at 32-bit precision; loading widens them back to
// double, so a model that went through round_to_float32() survives a
// save/load cycle bit-for-bit.
inline constexpr char kCheckpointMagic[] = "MHMLA1";

struct Checkpoint {
  Model model;
  SubwordVocab vocab;
};

std::string serialize_checkpoint(Model& model, const SubwordVocab& vocab);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(Model& model, const SubwordVocab& vocab, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gedlab
