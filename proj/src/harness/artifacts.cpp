#include "emoflow/harness/artifacts.hpp"

#include <algorithm>
#include <cstdio>

#include "emoflow/errors.hpp"

namespace emoflow::harness {

namespace {

// Corpus streams derived from data.seed.
enum class Corpus : std::uint64_t { Train = 1, Heldout = 2, Patches = 3, HeldoutPatches = 4, Pairs = 5, HeldoutPairs = 6 };

std::uint64_t corpus_seed(const RunConfig& c, Corpus k) {
  return numerics::mix_seed(c.data.seed, static_cast<std::uint64_t>(k));
}

constexpr int kLogChunk = 250;

template <class Step>
void chunked(int steps, const Progress& log, const char* stage, Step step, std::function<std::string()> status) {
  int done = 0;
  while (done < steps) {
    const int n = std::min(kLogChunk, steps - done);
    step(n);
    done += n;
    if (log) log(std::string(stage) + " " + std::to_string(done) + "/" + std::to_string(steps) + " " + status());
  }
}

std::string fmt(const char* name, const std::vector<double>& v) {
  if (v.empty()) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s %.6g", name, v.back());
  return buf;
}

void expect_kind(const Checkpoint& ck, const std::string& kind) {
  if (ck.kind != kind) throw DataError("checkpoint holds '" + ck.kind + "', expected '" + kind + "'");
}

numerics::Rng restore_rng(const Checkpoint& ck) {
  if (ck.rng_state.empty()) throw DataError("checkpoint carries no RNG state; it cannot resume training");
  numerics::Rng rng;
  try {
    rng.restore(ck.rng_state);
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: bad RNG state: ") + e.what());
  }
  return rng;
}

numerics::OptimizerState require_optimizer(const Checkpoint& ck, const numerics::ParamSet& params,
                                           const std::string& prefix) {
  auto s = get_optimizer(ck, params, prefix);
  if (!s) throw DataError("checkpoint carries no optimizer state under '" + prefix + "'");
  return *s;
}

// Flows hold seed-derived buffers (the fixed permutation and signs of each
// invertible linear layer) outside the parameter set, so a model is rebuilt
// from its creation seed before the stored arrays are copied in.
Checkpoint base(const std::string& kind, const RunConfig& c, Stage stage, std::int64_t step) {
  Checkpoint ck;
  ck.kind = kind;
  ck.config = to_json(c);
  ck.meta["model_seed"] = stage_seed(c, stage);
  ck.step = step;
  return ck;
}

std::uint64_t model_seed(const Checkpoint& ck) {
  const auto it = ck.meta.find("model_seed");
  if (it == ck.meta.end() || !it->is_number_unsigned())
    throw DataError("checkpoint: metadata lacks the model seed");
  return it->get<std::uint64_t>();
}

}  // namespace

context::Dataset train_dataset(const RunConfig& c) {
  return context::synth_dataset(scene_spec(c), c.data.sequences, corpus_seed(c, Corpus::Train));
}

context::Dataset heldout_dataset(const RunConfig& c) {
  return context::synth_dataset(scene_spec(c), c.data.heldout, corpus_seed(c, Corpus::Heldout));
}

vq::PatchCorpus train_patches(const RunConfig& c) {
  return vq::synth_patches(c.vq.patches, c.smm.classes, vq_config(c).image, corpus_seed(c, Corpus::Patches));
}

vq::PatchCorpus heldout_patches(const RunConfig& c) {
  return vq::synth_patches(c.vq.heldout_patches, c.smm.classes, vq_config(c).image,
                           corpus_seed(c, Corpus::HeldoutPatches));
}

vq::PairCorpus train_pairs(const RunConfig& c) {
  return vq::synth_pairs(c.vqig.pairs, c.smm.classes, vq_config(c).image, corpus_seed(c, Corpus::Pairs),
                         c.data.coeff_dim, c.data.pose_dim);
}

vq::PairCorpus heldout_pairs(const RunConfig& c) {
  return vq::synth_pairs(c.vqig.heldout_pairs, c.smm.classes, vq_config(c).image,
                         corpus_seed(c, Corpus::HeldoutPairs), c.data.coeff_dim, c.data.pose_dim);
}

void require_all_classes(const context::Dataset& ds, int classes) {
  std::vector<bool> seen(static_cast<std::size_t>(classes), false);
  for (const auto& s : ds.sequences) {
    if (s.emotion < 0 || s.emotion >= classes) throw DataError("dataset: class id out of range");
    seen[static_cast<std::size_t>(s.emotion)] = true;
  }
  for (int e = 0; e < classes; ++e)
    if (!seen[static_cast<std::size_t>(e)]) throw DataError("dataset: class " + std::to_string(e) + " has no sequence");
}

gen::ExpFlowTrainer expflow_trainer(const RunConfig& c) {
  return gen::ExpFlowTrainer(gen::ExpFlowModel::create(expflow_config(c), stage_seed(c, Stage::ExpFlow)),
                             expflow_train_config(c));
}

gen::PoseFlowTrainer poseflow_trainer(const RunConfig& c) {
  return gen::PoseFlowTrainer(gen::PoseFlowModel::create(poseflow_config(c), stage_seed(c, Stage::PoseFlow)),
                              poseflow_train_config(c));
}

vq::CodebookTrainer codebook_trainer(const RunConfig& c) {
  return vq::CodebookTrainer(vq::PatchAutoencoder::create(vq_config(c), stage_seed(c, Stage::Codebook)),
                             codebook_train_config(c));
}

vqig::VqigTrainer vqig_trainer(const RunConfig& c, const vq::PatchAutoencoder& ae) {
  return vqig::VqigTrainer(vqig::VqigModel::create(vqig_config(c), ae, stage_seed(c, Stage::Vqig)), ae,
                           vqig_train_config(c));
}

void run_expflow(gen::ExpFlowTrainer& tr, const context::Dataset& train, int steps, const Progress& log) {
  require_all_classes(train, tr.model.classes());
  if (steps < 0) steps = tr.config.steps;
  const gen::FrameTable table = gen::FrameTable::build(train, tr.model.config.encoders, context::Variant::Expression);
  chunked(steps, log, "expflow", [&](int n) { tr.run(table, n); },
          [&] { return fmt("loss", tr.history.loss) + " " + fmt("nll", tr.history.nll); });
}

void run_poseflow(gen::PoseFlowTrainer& tr, const context::Dataset& train, int steps, const Progress& log) {
  if (train.sequences.empty()) throw DataError("poseflow: training set is empty");
  if (steps < 0) steps = tr.config.steps;
  const gen::FrameTable table = gen::FrameTable::build(train, tr.model.config.encoders, context::Variant::Pose);
  chunked(steps, log, "poseflow", [&](int n) { tr.run(table, n); }, [&] { return fmt("nll", tr.history.nll); });
}

void run_codebook(vq::CodebookTrainer& tr, const vq::PatchCorpus& corpus, int steps, const Progress& log) {
  if (steps < 0) steps = tr.config.steps;
  chunked(steps, log, "codebook", [&](int n) { tr.run(corpus, n); },
          [&] { return fmt("total", tr.history.total) + " " + fmt("rec", tr.history.rec); });
}

void run_vqig(vqig::VqigTrainer& tr, const vq::PairCorpus& pairs, int steps, const Progress& log) {
  if (steps < 0) steps = tr.config.steps;
  chunked(steps, log, "vqig", [&](int n) { tr.run(pairs, n); },
          [&] { return fmt("total", tr.history.total) + " " + fmt("code", tr.history.code); });
}

Checkpoint expflow_checkpoint(const gen::ExpFlowTrainer& tr, const RunConfig& c) {
  Checkpoint ck = base("expflow", c, Stage::ExpFlow, tr.model.trained_steps);
  ck.rng_state = tr.rng.state();
  put_params(ck, tr.model.params);
  put_optimizer(ck, tr.optimizer, tr.model.params);
  return ck;
}

Checkpoint poseflow_checkpoint(const gen::PoseFlowTrainer& tr, const RunConfig& c) {
  Checkpoint ck = base("poseflow", c, Stage::PoseFlow, tr.model.trained_steps);
  ck.rng_state = tr.rng.state();
  put_params(ck, tr.model.params);
  put_optimizer(ck, tr.optimizer, tr.model.params);
  return ck;
}

Checkpoint codebook_checkpoint(const vq::CodebookTrainer& tr, const RunConfig& c) {
  Checkpoint ck = base("codebook", c, Stage::Codebook, tr.step);
  ck.meta["frozen"] = tr.model.frozen;
  ck.rng_state = tr.rng.state();
  put_params(ck, tr.model.params);
  put_params(ck, tr.disc_params);
  put_optimizer(ck, tr.optimizer, tr.model.params);
  put_optimizer(ck, tr.disc_optimizer, tr.disc_params, "disc_opt");
  return ck;
}

Checkpoint codebook_checkpoint(const vq::PatchAutoencoder& ae, const RunConfig& c) {
  Checkpoint ck = base("codebook", c, Stage::Codebook, 0);
  ck.meta["frozen"] = ae.frozen;
  put_params(ck, ae.params);
  return ck;
}

Checkpoint vqig_checkpoint(const vqig::VqigTrainer& tr, const RunConfig& c) {
  Checkpoint ck = base("vqig", c, Stage::Vqig, tr.model.trained_steps);
  ck.rng_state = tr.rng.state();
  put_params(ck, tr.model.params);
  put_params(ck, tr.disc_params);
  put_optimizer(ck, tr.optimizer, tr.model.params);
  put_optimizer(ck, tr.disc_optimizer, tr.disc_params, "disc_opt");
  return ck;
}

RunConfig checkpoint_config(const Checkpoint& ck) {
  try {
    RunConfig c = from_json(ck.config);
    c.validate();
    return c;
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: invalid config snapshot: ") + e.what());
  }
}

// Models are rebuilt from the config snapshot and the recorded seed, so the
// architecture and the fixed buffers match the stored arrays.

gen::ExpFlowModel expflow_model(const Checkpoint& ck) {
  expect_kind(ck, "expflow");
  gen::ExpFlowModel m = gen::ExpFlowModel::create(expflow_config(checkpoint_config(ck)), model_seed(ck));
  m.params = get_params(ck, m.params);
  m.trained_steps = static_cast<long>(ck.step);
  return m;
}

gen::PoseFlowModel poseflow_model(const Checkpoint& ck) {
  expect_kind(ck, "poseflow");
  gen::PoseFlowModel m = gen::PoseFlowModel::create(poseflow_config(checkpoint_config(ck)), model_seed(ck));
  m.params = get_params(ck, m.params);
  m.trained_steps = static_cast<long>(ck.step);
  return m;
}

vq::PatchAutoencoder codebook_model(const Checkpoint& ck) {
  expect_kind(ck, "codebook");
  vq::PatchAutoencoder ae = vq::PatchAutoencoder::create(vq_config(checkpoint_config(ck)), model_seed(ck));
  ae.params = get_params(ck, ae.params);
  ae.frozen = ck.meta.value("frozen", false);
  return ae;
}

vqig::VqigModel vqig_model(const Checkpoint& ck, const vq::PatchAutoencoder& ae) {
  expect_kind(ck, "vqig");
  const RunConfig c = checkpoint_config(ck);
  if (!(vq_config(c) == ae.config)) throw ConfigError("vqig checkpoint was trained against a different codebook shape");
  vqig::VqigModel m = vqig::VqigModel::create(vqig_config(c), ae, model_seed(ck));
  m.params = get_params(ck, m.params);
  m.trained_steps = static_cast<long>(ck.step);
  return m;
}

gen::ExpFlowTrainer expflow_resume(const Checkpoint& ck) {
  const RunConfig c = checkpoint_config(ck);
  gen::ExpFlowTrainer tr(expflow_model(ck), expflow_train_config(c));
  tr.optimizer = require_optimizer(ck, tr.model.params, "opt");
  tr.rng = restore_rng(ck);
  return tr;
}

gen::PoseFlowTrainer poseflow_resume(const Checkpoint& ck) {
  const RunConfig c = checkpoint_config(ck);
  gen::PoseFlowTrainer tr(poseflow_model(ck), poseflow_train_config(c));
  tr.optimizer = require_optimizer(ck, tr.model.params, "opt");
  tr.rng = restore_rng(ck);
  return tr;
}

vq::CodebookTrainer codebook_resume(const Checkpoint& ck) {
  const RunConfig c = checkpoint_config(ck);
  vq::PatchAutoencoder ae = codebook_model(ck);
  if (ae.frozen) throw DataError("codebook checkpoint is frozen; training cannot resume");
  vq::CodebookTrainer tr(std::move(ae), codebook_train_config(c));
  tr.disc_params = get_params(ck, tr.disc_params);
  tr.optimizer = require_optimizer(ck, tr.model.params, "opt");
  tr.disc_optimizer = require_optimizer(ck, tr.disc_params, "disc_opt");
  tr.rng = restore_rng(ck);
  tr.step = static_cast<long>(ck.step);
  return tr;
}

void resume_from(gen::ExpFlowTrainer& tr, const std::string& path) {
  gen::ExpFlowTrainer restored = expflow_resume(load_checkpoint(path));
  tr = std::move(restored);
}

}  // namespace emoflow::harness
