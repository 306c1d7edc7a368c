#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoflow/numerics/optim.hpp"
#include "emoflow/numerics/params.hpp"

// Binary checkpoint: magic "EFCK", version, kind, config snapshot, metadata,
// step, RNG state, then an index table of named f64 arrays and their data,
// closed by an FNV-1a checksum. Byte layout in FORMATS.md.

namespace emoflow::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // "expflow", "poseflow", "codebook", "vqig"
  nlohmann::json config;  // resolved RunConfig
  nlohmann::json meta = nlohmann::json::object();
  std::int64_t step = 0;
  std::string rng_state;  // empty when no generator is saved
  numerics::ParamSet arrays;

  bool operator==(const Checkpoint& other) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
/// DataError on bad magic, version mismatch, truncation, checksum mismatch,
/// trailing bytes or a malformed table.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Appends `prefix`.m:<name> and `prefix`.v:<name> moment arrays plus
/// `prefix`.meta = [lr, beta1, beta2, epsilon, step].
void put_optimizer(Checkpoint& ck, const numerics::OptimizerState& state, const numerics::ParamSet& params,
                   const std::string& prefix = "opt");
/// nullopt when the checkpoint carries no optimizer under `prefix`; DataError
/// when it does but does not match `params`.
std::optional<numerics::OptimizerState> get_optimizer(const Checkpoint& ck, const numerics::ParamSet& params,
                                                      const std::string& prefix = "opt");

/// Appends every entry of `params` under its own name.
void put_params(Checkpoint& ck, const numerics::ParamSet& params);
/// Overwrites a copy of `layout` with the same-named arrays; DataError on a
/// missing name or a shape mismatch.
numerics::ParamSet get_params(const Checkpoint& ck, const numerics::ParamSet& layout);

}  // namespace emoflow::harness
