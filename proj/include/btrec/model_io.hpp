#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "btrec/corpus.hpp"
#include "btrec/mlm.hpp"

namespace btrec {

inline constexpr std::uint32_t kModelFileVersion = 1;

struct ModelBundle {
  ModelParams params;
  Vocab vocab;
};

/// Binary layout (all integers little-endian):
///   "BTRECMDL" u32 version
///   config fields, corpus mode, vocabulary tokens
///   u64 parameter count, float32 values in layout order
///   u32 CRC-32 of everything before it
std::string serialize_model(const ModelParams& params, const Vocab& vocab);
ModelBundle deserialize_model(const std::string& bytes);

void save_model(const std::filesystem::path& path, const ModelParams& params, const Vocab& vocab);
/// Throws VersionMismatch, CorruptFile, or DataError("MissingFile").
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace btrec
