#pragma once

#include <vector>

#include "emoflow/generators/models.hpp"
#include "emoflow/numerics/optim.hpp"

namespace emoflow::gen {

struct TrainConfig {
  int steps = 10000;
  int batch = 64;
  int consistency_batch = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> loss;         // total objective per step
  std::vector<double> nll;          // likelihood term per step
  std::vector<double> consistency;  // consistency term per step (0 when disabled)
};

/// Resumable ExpFlow optimization. All state needed to continue bit-identically
/// (parameters, optimizer moments, RNG, step) is held here.
class ExpFlowTrainer {
 public:
  ExpFlowTrainer(ExpFlowModel model, const TrainConfig& config);
  /// Runs `n` more steps over `table` (built from the training set).
  void run(const FrameTable& table, int n);

  ExpFlowModel model;
  numerics::OptimizerState optimizer;
  numerics::Rng rng;
  TrainConfig config;
  TrainHistory history;
};

class PoseFlowTrainer {
 public:
  PoseFlowTrainer(PoseFlowModel model, const TrainConfig& config);
  void run(const FrameTable& table, int n);

  PoseFlowModel model;
  numerics::OptimizerState optimizer;
  numerics::Rng rng;
  TrainConfig config;
  TrainHistory history;
};

/// Fresh model from `seed`, trained for config.steps steps.
std::pair<ExpFlowModel, TrainHistory> train_expflow(const context::Dataset& ds, const ExpFlowConfig& model_config,
                                                    const TrainConfig& config, std::uint64_t seed);
std::pair<PoseFlowModel, TrainHistory> train_poseflow(const context::Dataset& ds, const PoseFlowConfig& model_config,
                                                      const TrainConfig& config, std::uint64_t seed);

/// Mean NLL over every frame of `ds` (no dropout), evaluated in chunks.
double mean_nll(const ExpFlowModel& model, const context::Dataset& ds);
double mean_pose_nll(const PoseFlowModel& model, const context::Dataset& ds);

}  // namespace emoflow::gen
