#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advchar/model.hpp"
#include "advchar/vocab.hpp"

namespace advchar {

// Binary layout (all integers little-endian u32):
//   "ADVC" | version | metadata length | metadata (UTF-8 JSON: config, vocab,
//   classes) | tensor count | per tensor: name length, name, ndim, dims...,
//   row-major float32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  Vocab vocab;
  std::vector<std::string> class_names;
};

void save_checkpoint(const Model& model, const Vocab& vocab,
                     const std::vector<std::string>& class_names,
                     const std::filesystem::path& path);

// When expected is set, tensors are checked against that configuration
// instead of the one recorded in the header. Errors: FileNotFoundError,
// MagicMismatchError, VersionMismatchError, TruncatedCheckpointError,
// TensorShapeError (names the tensor), CheckpointError for anything else.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace advchar
