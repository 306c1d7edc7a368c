#pragma once

#include <vector>

#include "emoflow/generators/latent_bank.hpp"
#include "emoflow/harness/artifacts.hpp"
#include "emoflow/harness/metrics.hpp"

// Metric groups computed from trained artifacts. Each group has an `add_*`
// that files its values in a MetricsReport, thresholded where an acceptance
// criterion applies.

namespace emoflow::harness {

struct ExpressionEval {
  double nll_initial = 0.0;  // held-out, freshly initialized model of the same config
  double nll_trained = 0.0;
  double nll_improvement = 0.0;  // (initial - trained) / |initial|
  double centroid_accuracy = 0.0;
  std::vector<double> class_traces;
  double oracle_gt_accuracy = 0.0;
  double oracle_generated_accuracy = 0.0;
  double lip_correlation = 0.0;
  double diversity = 0.0;
  double blink_variance = 0.0;
  double lip_variance = 0.0;
  double fixed_seed_max_diff = 0.0;  // same seed twice
  double mean_latent_diversity = 0.0;  // deterministic baseline z = mu_e
  std::vector<gen::RolloutResult> seed_runs;  // first context, one per seed
};

/// `bank` may be null when projection is disabled.
ExpressionEval evaluate_expression(const RunConfig& c, const gen::ExpFlowModel& model, const gen::LatentBank* bank,
                                   const context::Dataset& train, const context::Dataset& heldout,
                                   const Progress& log = {});
void add_expression(MetricsReport& r, const ExpressionEval& e);

struct PoseEval {
  double nll_initial = 0.0;
  double nll_trained = 0.0;
  double audio_correlation = 0.0;  // generated pose speed vs audio energy
  double gt_audio_correlation = 0.0;  // same statistic on the ground-truth clips
  double trace_spread = 0.0;
  double fixed_seed_max_diff = 0.0;
};

PoseEval evaluate_pose(const RunConfig& c, const gen::PoseFlowModel& model, const context::Dataset& heldout);
void add_pose(MetricsReport& r, const PoseEval& e);

struct CodebookEval {
  double initial_error = 0.0;  // freshly initialized autoencoder, held-out patches
  double trained_error = 0.0;
  double ratio = 0.0;
  double usage = 0.0;
};

CodebookEval evaluate_codebook(const RunConfig& c, const vq::PatchAutoencoder& ae, const vq::PatchCorpus& heldout);
void add_codebook(MetricsReport& r, const CodebookEval& e);

struct VqigEval {
  vqig::VqigEvaluation trained;
  double copy_source_accuracy = 0.0;  // source indices reused as the prediction
  double ratio = 0.0;                  // reconstruction / frozen-autoencoder baseline
};

VqigEval evaluate_vqig_run(const vqig::VqigModel& m, const vq::PatchAutoencoder& ae, const vq::PairCorpus& heldout);
void add_vqig(MetricsReport& r, const VqigEval& e);

/// Largest |I_w - I_0| and |E_w(I_w) - E_h(I_0)| entries of a model whose
/// motion mapper emits sigma = 0, over the given pairs.
std::pair<double, double> zero_motion_chain_error(const vqig::VqigModel& m, const vq::PatchAutoencoder& ae,
                                                  const vq::PairCorpus& pairs);

}  // namespace emoflow::harness
