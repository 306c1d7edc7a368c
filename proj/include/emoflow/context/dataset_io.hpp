#pragma once

#include <string>

#include <json.hpp>

#include "emoflow/context/synthetic.hpp"

// On-disk dataset: a directory holding manifest.json and one binary record per
// sequence (seq_NNNNN.bin). Layouts are described in FORMATS.md.

namespace emoflow::context {

inline constexpr std::uint32_t kSequenceFormatVersion = 1;
inline constexpr int kManifestVersion = 1;

nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> encode_sequence(const CoeffSequence& seq);
CoeffSequence decode_sequence(const std::vector<std::uint8_t>& bytes);

void save_dataset(const Dataset& ds, const std::string& dir);
/// Throws DataError on missing files, version mismatch or corrupt records.
Dataset load_dataset(const std::string& dir);

}  // namespace emoflow::context
