#include "emoflow/harness/evaluation.hpp"

#include <cmath>

#include "emoflow/errors.hpp"

namespace emoflow::harness {

namespace {

std::uint64_t rollout_seed(const RunConfig& c, int context, int k) {
  return numerics::mix_seed(stage_seed(c, Stage::Sampling),
                            static_cast<std::uint64_t>(context) * 1000003u + static_cast<std::uint64_t>(k));
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

ExpressionEval evaluate_expression(const RunConfig& c, const gen::ExpFlowModel& model, const gen::LatentBank* bank,
                                   const context::Dataset& train, const context::Dataset& heldout,
                                   const Progress& log) {
  if (heldout.sequences.empty()) throw DataError("evaluation: held-out set is empty");
  if (c.projection.enabled && !bank) throw ArgumentError("evaluation: projection is enabled but no bank was given");
  ExpressionEval e;
  const context::SceneSpec spec = scene_spec(c);
  const int classes = model.classes();

  e.nll_initial = gen::mean_nll(gen::ExpFlowModel::create(model.config, stage_seed(c, Stage::ExpFlow)), heldout);
  e.nll_trained = gen::mean_nll(model, heldout);
  e.nll_improvement = (e.nll_initial - e.nll_trained) / std::abs(e.nll_initial);
  if (log) log("held-out nll " + std::to_string(e.nll_initial) + " -> " + std::to_string(e.nll_trained));

  const gen::LatentBank train_bank = bank ? *bank : gen::build_latent_bank(model, train, c.projection.k_proj,
                                                                           c.projection.ridge);
  const gen::LatentBank test_bank = gen::build_latent_bank(model, heldout, c.projection.k_proj, c.projection.ridge);
  e.centroid_accuracy = nearest_centroid_accuracy(train_bank, test_bank, classes);
  e.class_traces = class_covariance_traces(train_bank, classes);

  const OracleClassifier oracle =
      OracleClassifier::train(train, classes, c.eval.oracle_steps, stage_seed(c, Stage::Oracle));
  e.oracle_gt_accuracy = oracle.accuracy(heldout);

  const int contexts = std::min<int>(c.eval.contexts, static_cast<int>(heldout.sequences.size()));
  const gen::LatentBank* proj = c.projection.enabled ? bank : nullptr;
  int hits = 0, generated = 0;
  double lip = 0.0, diversity = 0.0, blink_var = 0.0, lip_var = 0.0, baseline = 0.0;
  for (int i = 0; i < contexts; ++i) {
    const auto& seq = heldout.sequences[static_cast<std::size_t>(i)];
    const context::SignalAudioProvider audio(seq.audio);
    gen::RolloutOptions o;
    o.project = c.projection.enabled;

    // Emotion control: every class under this context, judged by the oracle.
    for (int cls = 0; cls < classes; ++cls) {
      o.seed = rollout_seed(c, i, 100 + cls);
      const gen::RolloutResult r = gen::rollout_expression(model, seq.source, audio, cls, o, proj);
      hits += oracle.predict(r.frames) == cls;
      ++generated;
      if (cls == seq.emotion) lip += channel_correlation(r.frames, spec.lip, seq.audio.col(0));
    }

    // One-to-many: seeds under the clip's own emotion.
    std::vector<Matrix> runs;
    for (int k = 0; k < c.eval.seeds; ++k) {
      o.seed = rollout_seed(c, i, k);
      gen::RolloutResult r = gen::rollout_expression(model, seq.source, audio, seq.emotion, o, proj);
      runs.push_back(r.frames);
      if (i == 0) e.seed_runs.push_back(std::move(r));
    }
    diversity += mean_pairwise_l2(runs);
    blink_var += across_run_variance(runs, spec.blink);
    lip_var += across_run_variance(runs, spec.lip);
    if (i == 0) {
      o.seed = rollout_seed(c, i, 0);
      const gen::RolloutResult again = gen::rollout_expression(model, seq.source, audio, seq.emotion, o, proj);
      e.fixed_seed_max_diff = max_abs_diff(again.frames, runs[0]);

      // Deterministic baseline: every seed inverts the class mean.
      const Matrix mu = model.smm().means.row(seq.emotion).replicate(seq.length(), 1);
      std::vector<Matrix> fixed;
      for (int k = 0; k < c.eval.seeds; ++k) {
        gen::RolloutOptions t;
        t.mode = gen::RolloutOptions::Mode::Transfer;
        t.project = false;
        t.seed = rollout_seed(c, i, k);
        fixed.push_back(gen::rollout_expression(model, seq.source, audio, seq.emotion, t, nullptr, &mu).frames);
      }
      baseline = mean_pairwise_l2(fixed);
    }
    if (log) log("evaluated context " + std::to_string(i + 1) + "/" + std::to_string(contexts));
  }
  e.oracle_generated_accuracy = static_cast<double>(hits) / generated;
  e.lip_correlation = lip / contexts;
  e.diversity = diversity / contexts;
  e.blink_variance = blink_var / contexts;
  e.lip_variance = lip_var / contexts;
  e.mean_latent_diversity = baseline;
  return e;
}

void add_expression(MetricsReport& r, const ExpressionEval& e) {
  r.add("expflow.heldout_nll_initial", e.nll_initial, "nats/frame");
  r.add("expflow.heldout_nll_trained", e.nll_trained, "nats/frame");
  r.check("expflow.heldout_nll_improvement", e.nll_improvement, "fraction", Comparator::GreaterEqual, 0.30, "5");
  r.check("expflow.latent_centroid_accuracy", e.centroid_accuracy, "fraction", Comparator::GreaterEqual, 0.90, "5");
  r.check("oracle.gt_accuracy", e.oracle_gt_accuracy, "fraction", Comparator::GreaterEqual, 0.95, "oracle");
  r.check("expflow.generated_oracle_accuracy", e.oracle_generated_accuracy, "fraction", Comparator::GreaterEqual,
          0.80, "5");
  r.check("expflow.lip_correlation", e.lip_correlation, "pearson", Comparator::GreaterEqual, 0.80, "5");
  r.check("expflow.diversity", e.diversity, "coeff L2", Comparator::Greater, 0.0, "6");
  r.add("expflow.blink_variance", e.blink_variance, "coeff^2");
  r.add("expflow.lip_variance", e.lip_variance, "coeff^2");
  r.check("expflow.blink_lip_variance_ratio", e.blink_variance / e.lip_variance, "ratio", Comparator::GreaterEqual,
          10.0, "6");
  r.check("expflow.fixed_seed_max_diff", e.fixed_seed_max_diff, "coeff", Comparator::LessEqual, 0.0, "6");
  r.add("expflow.mean_latent_diversity", e.mean_latent_diversity, "coeff L2");
  for (std::size_t k = 0; k < e.class_traces.size(); ++k)
    r.add("expflow.class_trace." + std::to_string(k), e.class_traces[k], "latent^2");
}

PoseEval evaluate_pose(const RunConfig& c, const gen::PoseFlowModel& model, const context::Dataset& heldout) {
  if (heldout.sequences.empty()) throw DataError("evaluation: held-out set is empty");
  PoseEval e;
  e.nll_initial = gen::mean_pose_nll(gen::PoseFlowModel::create(model.config, stage_seed(c, Stage::PoseFlow)), heldout);
  e.nll_trained = gen::mean_pose_nll(model, heldout);
  const int radius = scene_spec(c).energy_radius;
  const int contexts = std::min<int>(c.eval.contexts, static_cast<int>(heldout.sequences.size()));
  std::vector<Matrix> poses, gt;
  std::vector<Vector> energies;
  double spread = 0.0;
  for (int i = 0; i < contexts; ++i) {
    const auto& seq = heldout.sequences[static_cast<std::size_t>(i)];
    const context::SignalAudioProvider audio(seq.audio);
    const Vector energy = context::audio_energy(seq.audio, radius);
    std::vector<Matrix> runs;
    for (int k = 0; k < c.eval.seeds; ++k) {
      gen::RolloutOptions o;
      o.seed = rollout_seed(c, i, 500 + k);
      runs.push_back(gen::rollout_pose(model, audio, o).frames);
      poses.push_back(runs.back());
      energies.push_back(energy);
    }
    spread += trace_spread(runs);
    gt.push_back(seq.pose);
    if (i == 0) {
      gen::RolloutOptions o;
      o.seed = rollout_seed(c, i, 500);
      e.fixed_seed_max_diff = max_abs_diff(gen::rollout_pose(model, audio, o).frames, runs[0]);
    }
  }
  e.audio_correlation = pose_audio_correlation(poses, energies);
  std::vector<Vector> gt_energy;
  for (int i = 0; i < contexts; ++i)
    gt_energy.push_back(context::audio_energy(heldout.sequences[static_cast<std::size_t>(i)].audio, radius));
  e.gt_audio_correlation = pose_audio_correlation(gt, gt_energy);
  e.trace_spread = spread / contexts;
  return e;
}

void add_pose(MetricsReport& r, const PoseEval& e) {
  r.add("poseflow.heldout_nll_initial", e.nll_initial, "nats/frame");
  r.add("poseflow.heldout_nll_trained", e.nll_trained, "nats/frame");
  r.check("poseflow.audio_energy_correlation", e.audio_correlation, "pearson", Comparator::GreaterEqual, 0.5, "12");
  r.add("poseflow.gt_audio_energy_correlation", e.gt_audio_correlation, "pearson");
  r.check("poseflow.trace_spread", e.trace_spread, "pose^2", Comparator::Greater, 0.0, "12");
  r.check("poseflow.fixed_seed_max_diff", e.fixed_seed_max_diff, "pose", Comparator::LessEqual, 0.0, "12");
}

CodebookEval evaluate_codebook(const RunConfig& c, const vq::PatchAutoencoder& ae, const vq::PatchCorpus& heldout) {
  CodebookEval e;
  e.initial_error =
      vq::reconstruction_error(vq::PatchAutoencoder::create(ae.config, stage_seed(c, Stage::Codebook)), heldout.images);
  e.trained_error = vq::reconstruction_error(ae, heldout.images);
  e.ratio = e.trained_error / e.initial_error;
  e.usage = vq::code_usage(ae, heldout.images);
  return e;
}

void add_codebook(MetricsReport& r, const CodebookEval& e) {
  r.add("codebook.heldout_error_initial", e.initial_error, "mean abs");
  r.add("codebook.heldout_error_trained", e.trained_error, "mean abs");
  r.check("codebook.error_ratio", e.ratio, "ratio", Comparator::LessEqual, 0.5, "10");
  r.check("codebook.code_usage", e.usage, "fraction", Comparator::GreaterEqual, 0.25, "10");
}

VqigEval evaluate_vqig_run(const vqig::VqigModel& m, const vq::PatchAutoencoder& ae, const vq::PairCorpus& heldout) {
  VqigEval e;
  e.trained = vqig::evaluate_vqig(m, ae, heldout);
  const std::vector<int> src = ae.encode_quantized(heldout.sources).indices;
  const std::vector<int> tgt = ae.encode_quantized(heldout.targets).indices;
  long same = 0;
  for (std::size_t k = 0; k < src.size(); ++k) same += src[k] == tgt[k];
  e.copy_source_accuracy = static_cast<double>(same) / static_cast<double>(src.size());
  e.ratio = e.trained.reconstruction / e.trained.baseline_reconstruction;
  return e;
}

void add_vqig(MetricsReport& r, const VqigEval& e) {
  r.check("vqig.code_accuracy", e.trained.code_accuracy, "fraction", Comparator::GreaterEqual, 0.60, "11");
  r.add("vqig.copy_source_accuracy", e.copy_source_accuracy, "fraction");
  r.add("vqig.reconstruction", e.trained.reconstruction, "mean abs");
  r.add("vqig.autoencoder_baseline", e.trained.baseline_reconstruction, "mean abs");
  r.check("vqig.reconstruction_ratio", e.ratio, "ratio", Comparator::LessEqual, 1.5, "11");
}

std::pair<double, double> zero_motion_chain_error(const vqig::VqigModel& m, const vq::PatchAutoencoder& ae,
                                                  const vq::PairCorpus& pairs) {
  ad::Tape t(ad::Tape::Mode::Inference);
  const vqig::VqigForward f = vqig::vqig_forward(t, m, m.params, ae, pairs.sources, pairs.beta, pairs.rho);
  if (!f.sigma.value().isZero(0.0)) throw ArgumentError("zero_motion_chain_error: the mapper does not emit sigma = 0");
  return {max_abs_diff(f.warped.image.value(), pairs.sources), max_abs_diff(f.z_w.value(), ae.encode(pairs.sources))};
}

}  // namespace emoflow::harness
