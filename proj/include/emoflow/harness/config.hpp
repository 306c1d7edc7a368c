#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emoflow/context/synthetic.hpp"
#include "emoflow/generators/models.hpp"
#include "emoflow/generators/training.hpp"
#include "emoflow/vq/train.hpp"
#include "emoflow/vqig/train.hpp"

namespace emoflow::harness {

using nlohmann::json;

struct DataBlock {
  int sequences = 200;
  int heldout = 40;
  int length = 50;
  int coeff_dim = 64;
  int pose_dim = 6;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

struct FlowBlock {
  int steps = 8;  // K
  int tau = 5;
  double dropout = 0.25;
  double lambda_con = 0.1;
  int hidden = 128;
  std::string linear_init = "rotation";  // or "identity"
};

struct EncoderBlock {
  int window_radius = 2;
  int source_features = 16;
  int audio_hidden = 32;
  int audio_features = 16;
  int history_features = 64;  // at least one frame wide, or held-out clips cannot be tracked
  int emotion_features = 16;
};

struct SmmBlock {
  int classes = 4;  // C
  double dof = 2.0;  // nu
  bool freeze_means = false;
};

struct ProjectionBlock {
  bool enabled = true;
  int k_proj = 10;
  double ridge = 1e-6;
};

struct PoseBlock {
  int steps = 4;
  int hidden = 64;
  double dropout = 0.0;
};

struct VqBlock {
  int resolution = 32;  // H
  int m = 4;
  int n = 4;
  int code_dim = 32;  // d
  int codes = 64;     // N
  double lambda_adv = 0.0;
  double lambda_feat = 0.25;
  std::vector<int> widths = {16, 32};
  std::string perceptual = "identity";  // or "random_conv"
  int patches = 2000;
  int heldout_patches = 256;
};

struct VqigBlock {
  int motion_dim = 16;
  int mapper_hidden = 64;
  int warp_grid = 4;
  double max_displacement = 0.25;
  int fuse_hidden = 64;
  int heads = 4;
  int layers = 2;
  int ff_hidden = 64;
  int pairs = 2000;
  int heldout_pairs = 256;
  double image_weight = 1.0;
  int warmup = 200;
};

struct StageTraining {
  double lr = 1e-3;
  int batch = 64;
  int steps = 1000;
};

struct TrainingBlock {
  double lr = 1e-3;
  int batch = 64;
  int consistency_batch = 16;
  int steps = 10000;
  std::uint64_t seed = 0;
};

struct EvalBlock {
  int seeds = 10;     // rollouts per context for diversity
  int contexts = 10;  // held-out sequences driven per class
  int oracle_steps = 500;
};

/// Everything a run consumes. Every field round-trips through JSON so the
/// echoed config is complete.
struct RunConfig {
  std::string name = "desk";
  std::string preset = "desk";
  DataBlock data;
  FlowBlock flow;
  EncoderBlock encoders;
  SmmBlock smm;
  ProjectionBlock projection;
  PoseBlock pose;
  VqBlock vq;
  VqigBlock vqig;
  TrainingBlock training;
  StageTraining pose_training{1e-3, 64, 3000};
  StageTraining codebook_training{2e-3, 16, 2000};
  StageTraining vqig_training{1e-3, 16, 2000};
  EvalBlock eval;

  /// Cross-block checks plus every module's own validation. ConfigError on failure.
  void validate() const;
};

std::vector<std::string> preset_names();
/// ConfigError for an unknown name.
RunConfig preset(const std::string& name);

json to_json(const RunConfig& c);
/// Strict: every key must already exist in the preset with a compatible type.
RunConfig from_json(const json& j);

/// Overlays `user` on the preset it names (or `preset_override`), rejecting
/// unknown keys and type mismatches, then validates.
RunConfig resolve_config(const json& user, const std::optional<std::string>& preset_override = std::nullopt);
RunConfig load_config(const std::string& path, const std::optional<std::string>& preset_override = std::nullopt);

// Stage seeds derived from training.seed.
enum class Stage : std::uint64_t { ExpFlow = 1, PoseFlow = 2, Codebook = 3, Vqig = 4, Sampling = 5, Oracle = 6 };
std::uint64_t stage_seed(const RunConfig& c, Stage stage);

// Module configs.
context::SceneSpec scene_spec(const RunConfig& c);
gen::ExpFlowConfig expflow_config(const RunConfig& c);
gen::TrainConfig expflow_train_config(const RunConfig& c);
gen::PoseFlowConfig poseflow_config(const RunConfig& c);
gen::TrainConfig poseflow_train_config(const RunConfig& c);
vq::VqConfig vq_config(const RunConfig& c);
vq::CodebookTrainConfig codebook_train_config(const RunConfig& c);
vqig::VqigConfig vqig_config(const RunConfig& c);
vqig::VqigTrainConfig vqig_train_config(const RunConfig& c);

}  // namespace emoflow::harness
