#include "emoflow/harness/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "emoflow/context/dataset_io.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/generators/rollout.hpp"
#include "emoflow/harness/acceptance.hpp"
#include "emoflow/harness/evaluation.hpp"
#include "emoflow/harness/exports.hpp"
#include "emoflow/vq/render.hpp"

namespace emoflow::harness {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config_path;
  std::string preset;
  std::string out = "runs";
  std::string name;
  std::optional<std::uint64_t> seed;
};

/// One subcommand invocation: resolved config, its output directory and a
/// log file that is rewritten on every run.
class Run {
 public:
  Run(const Globals& g, const std::string& command, std::ostream& err) : command_(command), err_(err) {
    const std::optional<std::string> preset = g.preset.empty() ? std::nullopt : std::optional(g.preset);
    config = g.config_path.empty() ? resolve_config(json::object(), preset) : load_config(g.config_path, preset);
    if (g.seed) config.training.seed = *g.seed;
    if (!g.name.empty()) config.name = g.name;
    config.validate();
    dir = g.out + "/" + config.name;
    ensure_dir(dir + "/logs");
    ensure_dir(dir + "/metrics");
    write_json(dir + "/config.json", to_json(config));
    log_.open(dir + "/logs/" + command + ".log", std::ios::trunc);
    if (!log_) throw DataError("cannot write the log in '" + dir + "/logs'");
  }

  void say(const std::string& s) {
    log_ << s << '\n';
    log_.flush();
    err_ << "[" << command_ << "] " << s << '\n';
  }
  Progress progress() {
    return [this](const std::string& s) { say(s); };
  }

  std::string path(const std::string& rel) const { return dir + "/" + rel; }

  void save_metrics(const MetricsReport& r) {
    r.save(path("metrics/" + command_ + ".json"), path("metrics/" + command_ + ".csv"));
  }

  /// Prefer the datasets written by synth-data; regenerate otherwise.
  context::Dataset dataset(const RunConfig& c, bool heldout) {
    const std::string d = path(heldout ? "data/heldout" : "data/train");
    if (!fs::exists(d + "/manifest.json")) return heldout ? heldout_dataset(c) : train_dataset(c);
    context::Dataset ds = context::load_dataset(d);
    if (context::scene_to_json(ds.spec) != context::scene_to_json(scene_spec(c)))
      throw DataError("'" + d + "' was generated from a different data config; rerun synth-data");
    return ds;
  }

  Checkpoint checkpoint(const std::string& rel) const {
    const std::string p = path(rel);
    if (!fs::exists(p)) throw DataError("missing model '" + p + "'; run the matching train-* command first");
    return load_checkpoint(p);
  }

  RunConfig config;
  std::string dir;

 private:
  std::string command_;
  std::ostream& err_;
  std::ofstream log_;
};

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string indexed(const std::string& stem, int i, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return stem + buf + ext;
}

void print_report(std::ostream& out, const MetricsReport& r) {
  for (const Metric& m : r.metrics()) {
    out << m.name << " = " << fixed(m.value);
    if (!m.unit.empty()) out << " " << m.unit;
    if (m.threshold)
      out << "  [" << (*m.pass() ? "PASS" : "FAIL") << " " << comparator_symbol(m.comparator) << " " << fixed(*m.threshold)
          << "]";
    out << '\n';
  }
}

const context::CoeffSequence& pick(const context::Dataset& ds, int index, const char* what) {
  if (index < 0 || index >= static_cast<int>(ds.sequences.size()))
    throw ArgumentError(std::string(what) + " index " + std::to_string(index) + " is outside the held-out set of " +
                        std::to_string(ds.sequences.size()));
  return ds.sequences[static_cast<std::size_t>(index)];
}

std::optional<gen::LatentBank> load_bank(Run& run, const RunConfig& c) {
  if (!c.projection.enabled) return std::nullopt;
  const std::string p = run.path("latent_bank.eflb");
  if (!fs::exists(p)) throw DataError("missing latent bank '" + p + "'; rerun train-expflow");
  return gen::load_latent_bank(p);
}

// --- subcommands -------------------------------------------------------------

void synth_data(Run& run, std::ostream& out) {
  const RunConfig& c = run.config;
  const context::Dataset train = train_dataset(c), held = heldout_dataset(c);
  context::save_dataset(train, run.path("data/train"));
  context::save_dataset(held, run.path("data/heldout"));
  const vq::PatchCorpus preview = vq::synth_patches(4, c.smm.classes, vq_config(c).image, c.data.seed);
  ensure_dir(run.path("data/preview"));
  for (int i = 0; i < 4; ++i)
    write_png(run.path(indexed("data/preview/patch_", i, ".png")), preview.images.row(i).transpose(), preview.shape);
  MetricsReport r;
  r.add("train.sequences", static_cast<double>(train.sequences.size()), "clips");
  r.add("train.frames", train.total_frames(), "frames");
  r.add("heldout.sequences", static_cast<double>(held.sequences.size()), "clips");
  for (int e = 0; e < c.smm.classes; ++e)
    r.add("train.class_" + std::to_string(e),
          static_cast<double>(std::count_if(train.sequences.begin(), train.sequences.end(),
                                            [e](const auto& s) { return s.emotion == e; })),
          "clips");
  run.save_metrics(r);
  run.say("wrote " + run.path("data"));
  print_report(out, r);
}

void train_expflow(Run& run, std::ostream& out, int steps, const std::string& resume) {
  RunConfig c = run.config;
  std::optional<gen::ExpFlowTrainer> tr;
  if (!resume.empty()) {
    const Checkpoint ck = load_checkpoint(resume);
    c = checkpoint_config(ck);
    tr.emplace(expflow_resume(ck));
    run.say("resumed at step " + std::to_string(tr->model.trained_steps));
    if (steps < 0) steps = static_cast<int>(std::max<long>(0, c.training.steps - tr->model.trained_steps));
  } else {
    tr.emplace(expflow_trainer(c));
  }
  const context::Dataset train = run.dataset(c, false), held = run.dataset(c, true);
  run_expflow(*tr, train, steps, run.progress());
  save_checkpoint(expflow_checkpoint(*tr, c), run.path("expflow.ckpt"));
  const gen::LatentBank bank = gen::build_latent_bank(tr->model, train, c.projection.k_proj, c.projection.ridge);
  gen::save_latent_bank(bank, run.path("latent_bank.eflb"));

  MetricsReport r;
  r.add("expflow.steps", tr->model.trained_steps, "steps");
  if (!tr->history.loss.empty()) r.add("expflow.final_loss", tr->history.loss.back(), "nats");
  r.add("expflow.heldout_nll", gen::mean_nll(tr->model, held), "nats/frame");
  r.add("expflow.bank_rows", bank.size(), "rows");
  run.save_metrics(r);
  print_report(out, r);
}

void train_poseflow(Run& run, std::ostream& out, int steps) {
  const RunConfig& c = run.config;
  gen::PoseFlowTrainer tr = poseflow_trainer(c);
  const context::Dataset train = run.dataset(c, false), held = run.dataset(c, true);
  run_poseflow(tr, train, steps, run.progress());
  save_checkpoint(poseflow_checkpoint(tr, c), run.path("poseflow.ckpt"));
  MetricsReport r;
  r.add("poseflow.steps", tr.model.trained_steps, "steps");
  r.add("poseflow.heldout_nll", gen::mean_pose_nll(tr.model, held), "nats/frame");
  run.save_metrics(r);
  print_report(out, r);
}

void train_codebook(Run& run, std::ostream& out, int steps) {
  const RunConfig& c = run.config;
  vq::CodebookTrainer tr = codebook_trainer(c);
  run_codebook(tr, train_patches(c), steps, run.progress());
  save_checkpoint(codebook_checkpoint(tr, c), run.path("codebook.ckpt"));
  MetricsReport r;
  add_codebook(r, evaluate_codebook(c, tr.model, heldout_patches(c)));
  run.save_metrics(r);
  print_report(out, r);
}

vq::PatchAutoencoder frozen_codebook(Run& run) {
  vq::PatchAutoencoder ae = codebook_model(run.checkpoint("codebook.ckpt"));
  ae.frozen = true;
  return ae;
}

void train_vqig(Run& run, std::ostream& out, int steps) {
  const RunConfig& c = run.config;
  const vq::PatchAutoencoder ae = frozen_codebook(run);
  vqig::VqigTrainer tr = vqig_trainer(c, ae);
  run_vqig(tr, train_pairs(c), steps, run.progress());
  save_checkpoint(vqig_checkpoint(tr, c), run.path("vqig.ckpt"));
  MetricsReport r;
  add_vqig(r, evaluate_vqig_run(tr.model, ae, heldout_pairs(c)));
  run.save_metrics(r);
  print_report(out, r);
}

struct SampleArgs {
  int seeds = -1;  // -1: eval.seeds
  int context = 0;
  int emotion = -1;  // -1: the clip's own
  int length = 0;
};

void sample(Run& run, std::ostream& out, const SampleArgs& a) {
  const Checkpoint ck = run.checkpoint("expflow.ckpt");
  const RunConfig c = checkpoint_config(ck);
  const gen::ExpFlowModel model = expflow_model(ck);
  const std::optional<gen::LatentBank> bank = load_bank(run, c);
  const context::Dataset held = run.dataset(c, true);
  const context::CoeffSequence& clip = pick(held, a.context, "context");
  const int emotion = a.emotion < 0 ? clip.emotion : a.emotion;
  if (emotion >= c.smm.classes) throw ArgumentError("emotion must be below " + std::to_string(c.smm.classes));
  const int seeds = a.seeds < 0 ? c.eval.seeds : a.seeds;
  if (seeds < 1) throw ArgumentError("--seeds must be positive");

  const context::SignalAudioProvider audio(clip.audio);
  const std::uint64_t base = stage_seed(run.config, Stage::Sampling);
  ensure_dir(run.path("samples"));
  std::vector<Matrix> runs;
  for (int s = 0; s < seeds; ++s) {
    gen::RolloutOptions o;
    o.seed = numerics::mix_seed(base, static_cast<std::uint64_t>(s));
    o.length = a.length;
    o.project = c.projection.enabled;
    runs.push_back(gen::rollout_expression(model, clip.source, audio, emotion, o, bank ? &*bank : nullptr).frames);
    gen::write_sequence_csv(run.path(indexed("samples/seed_", s, ".csv")), runs.back(), "b");
  }
  MetricsReport r;
  r.add("sample.seeds", seeds, "runs");
  r.add("sample.emotion", emotion, "class");
  r.add("sample.diversity", seeds > 1 ? mean_pairwise_l2(runs) : 0.0, "coeff L2");
  if (seeds > 1) {
    const context::SceneSpec spec = scene_spec(c);
    r.add("sample.blink_variance", across_run_variance(runs, spec.blink), "coeff^2");
    r.add("sample.lip_variance", across_run_variance(runs, spec.lip), "coeff^2");
    r.add("sample.trace_spread", trace_spread(runs), "coeff^2");
  }
  if (fs::exists(run.path("poseflow.ckpt"))) {
    const gen::PoseFlowModel pose = poseflow_model(run.checkpoint("poseflow.ckpt"));
    std::vector<Matrix> poses;
    for (int s = 0; s < seeds; ++s) {
      gen::RolloutOptions o;
      o.seed = numerics::mix_seed(base ^ 0x5bd1e995u, static_cast<std::uint64_t>(s));
      o.length = a.length;
      poses.push_back(gen::rollout_pose(pose, audio, o).frames);
      gen::write_sequence_csv(run.path(indexed("samples/pose_seed_", s, ".csv")), poses.back(), "rho");
    }
    if (seeds > 1) r.add("sample.pose_trace_spread", trace_spread(poses), "pose^2");
  }
  run.save_metrics(r);
  print_report(out, r);
}

void transfer(Run& run, std::ostream& out, int reference, int target) {
  const Checkpoint ck = run.checkpoint("expflow.ckpt");
  const RunConfig c = checkpoint_config(ck);
  const gen::ExpFlowModel model = expflow_model(ck);
  const context::Dataset held = run.dataset(c, true);
  const context::CoeffSequence& ref = pick(held, reference, "reference");
  const context::CoeffSequence& tgt = pick(held, target, "target");
  gen::RolloutOptions o;
  o.project = false;
  o.length = std::min(ref.length(), tgt.length());
  const gen::RolloutResult res = gen::emotion_transfer(model, ref, tgt.source, context::SignalAudioProvider(tgt.audio), o);
  gen::write_sequence_csv(run.path("transfer.csv"), res.frames, "b");
  MetricsReport r;
  r.add("transfer.reference_emotion", ref.emotion, "class");
  r.add("transfer.frames", static_cast<double>(res.frames.rows()), "frames");
  const std::vector<int> lip = scene_spec(c).lip;
  r.add("transfer.lip_correlation_target_audio", channel_correlation(res.frames, lip, tgt.audio.col(0)), "pearson");
  if (reference == target) r.add("transfer.identity_error", (res.frames - ref.beta).cwiseAbs().maxCoeff(), "abs");
  run.save_metrics(r);
  print_report(out, r);
}

void animate_cmd(Run& run, std::ostream& out, int context_index, int emotion_arg, std::uint64_t identity_seed) {
  const Checkpoint eck = run.checkpoint("expflow.ckpt");
  const RunConfig c = checkpoint_config(eck);
  const gen::ExpFlowModel model = expflow_model(eck);
  const std::optional<gen::LatentBank> bank = load_bank(run, c);
  const vq::PatchAutoencoder ae = frozen_codebook(run);
  const vqig::VqigModel vm = vqig_model(run.checkpoint("vqig.ckpt"), ae);
  const context::Dataset held = run.dataset(c, true);
  const context::CoeffSequence& clip = pick(held, context_index, "context");
  const int emotion = emotion_arg < 0 ? clip.emotion : emotion_arg;
  if (emotion >= c.smm.classes) throw ArgumentError("emotion must be below " + std::to_string(c.smm.classes));
  const context::SignalAudioProvider audio(clip.audio);

  gen::RolloutOptions o;
  o.seed = stage_seed(run.config, Stage::Sampling);
  o.project = c.projection.enabled;
  const Matrix beta = gen::rollout_expression(model, clip.source, audio, emotion, o, bank ? &*bank : nullptr).frames;
  Matrix rho = Matrix::Zero(beta.rows(), c.data.pose_dim);
  if (fs::exists(run.path("poseflow.ckpt"))) {
    o.length = static_cast<int>(beta.rows());
    rho = gen::rollout_pose(poseflow_model(run.checkpoint("poseflow.ckpt")), audio, o).frames;
  }

  numerics::Rng rng(identity_seed);
  const vq::FaceIdentity identity = vq::FaceIdentity::random(rng);
  const Vector source = vq::render_face(identity, vq::FaceMotion{}, emotion, c.smm.classes, ae.config.image);
  std::vector<int> codes;
  const Matrix frames = vqig::animate(vm, ae, source, beta, rho, &codes);

  const std::string dir = run.path("animation");
  if (fs::exists(dir)) fs::remove_all(dir);
  nlohmann::json extra;
  extra["emotion"] = emotion;
  extra["context"] = context_index;
  extra["identity_seed"] = identity_seed;
  write_frames(dir, frames, ae.config.image, extra);
  write_png(dir + "/source.png", source, ae.config.image);
  const int cells = ae.config.cells();
  std::vector<std::vector<int>> maps;
  for (std::size_t t = 0; t * static_cast<std::size_t>(cells) < codes.size(); ++t)
    maps.emplace_back(codes.begin() + static_cast<std::ptrdiff_t>(t * cells),
                      codes.begin() + static_cast<std::ptrdiff_t>((t + 1) * cells));
  write_index_maps(dir + "/index_maps.csv", maps, ae.config.grid);
  gen::write_sequence_csv(dir + "/beta.csv", beta, "b");
  gen::write_sequence_csv(dir + "/rho.csv", rho, "rho");

  MetricsReport r;
  r.add("animate.frames", static_cast<double>(frames.rows()), "frames");
  r.add("animate.mean_abs_change", frames.rows() > 1
                                        ? (frames.bottomRows(frames.rows() - 1) - frames.topRows(frames.rows() - 1))
                                              .cwiseAbs()
                                              .mean()
                                        : 0.0,
        "intensity");
  run.save_metrics(r);
  run.say("wrote " + dir);
  print_report(out, r);
}

void eval(Run& run, std::ostream& out) {
  MetricsReport r;
  int found = 0;
  if (fs::exists(run.path("expflow.ckpt"))) {
    const Checkpoint ck = run.checkpoint("expflow.ckpt");
    const RunConfig c = checkpoint_config(ck);
    const gen::ExpFlowModel model = expflow_model(ck);
    const std::optional<gen::LatentBank> bank = load_bank(run, c);
    add_expression(r, evaluate_expression(c, model, bank ? &*bank : nullptr, run.dataset(c, false),
                                          run.dataset(c, true), run.progress()));
    ++found;
  }
  if (fs::exists(run.path("poseflow.ckpt"))) {
    const Checkpoint ck = run.checkpoint("poseflow.ckpt");
    const RunConfig c = checkpoint_config(ck);
    add_pose(r, evaluate_pose(c, poseflow_model(ck), run.dataset(c, true)));
    ++found;
  }
  if (fs::exists(run.path("codebook.ckpt"))) {
    const Checkpoint ck = run.checkpoint("codebook.ckpt");
    const RunConfig c = checkpoint_config(ck);
    const vq::PatchAutoencoder ae = frozen_codebook(run);
    add_codebook(r, evaluate_codebook(c, ae, heldout_patches(c)));
    ++found;
    if (fs::exists(run.path("vqig.ckpt"))) {
      const Checkpoint vk = run.checkpoint("vqig.ckpt");
      add_vqig(r, evaluate_vqig_run(vqig_model(vk, ae), ae, heldout_pairs(checkpoint_config(vk))));
      ++found;
    }
  }
  if (found == 0) throw DataError("no trained model in '" + run.dir + "'; nothing to evaluate");
  run.save_metrics(r);
  print_report(out, r);
  out << (r.all_passed() ? "all thresholded metrics pass" : "some thresholded metrics fail") << '\n';
}

int acceptance(Run& run, std::ostream& out, const std::vector<int>& only) {
  AcceptanceOptions o;
  o.config = run.config;
  o.out_dir = run.path("acceptance");
  o.only = std::set<int>(only.begin(), only.end());
  o.log = run.progress();
  const AcceptanceOutcome res = run_acceptance(o);
  for (const auto& c : res.results) out << format_result(c) << '\n';
  return res.all_passed() ? kExitOk : kExitNumeric;
}

void export_latents(Run& run, std::ostream& out) {
  const Checkpoint ck = run.checkpoint("expflow.ckpt");
  const RunConfig c = checkpoint_config(ck);
  const std::string p = run.path("latent_bank.eflb");
  const gen::LatentBank bank = fs::exists(p) ? gen::load_latent_bank(p)
                                             : gen::build_latent_bank(expflow_model(ck), run.dataset(c, false),
                                                                      c.projection.k_proj, c.projection.ridge);
  ensure_dir(run.path("latents"));
  write_latents_csv(run.path("latents/latents.csv"), bank.latents, bank.labels);
  write_pca_csv(run.path("latents/pca.csv"), numerics::pca_power_iteration(bank.latents, 2, 0), bank.labels);
  MetricsReport r;
  r.add("latents.rows", bank.size(), "rows");
  const std::vector<double> traces = class_covariance_traces(bank, c.smm.classes);
  for (std::size_t k = 0; k < traces.size(); ++k) r.add("latents.trace_class_" + std::to_string(k), traces[k], "latent^2");
  run.save_metrics(r);
  print_report(out, r);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emotion-conditioned flow generators, codebook and image generator on synthetic data", "emoflow"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "base preset: desk or full-scale");
  app.add_option("--out", g.out, "output root; the run goes to <out>/<name>")->capture_default_str();
  app.add_option("--name", g.name, "experiment name (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "training seed (overrides training.seed)");

  int steps = -1;
  std::string resume;
  auto* synth = app.add_subcommand("synth-data", "write the train and held-out coefficient datasets");
  auto* texp = app.add_subcommand("train-expflow", "train the expression flow and its latent bank");
  texp->add_option("--steps", steps, "steps to run (default: the config)");
  texp->add_option("--resume", resume, "trainer checkpoint to continue from")->check(CLI::ExistingFile);
  auto* tpose = app.add_subcommand("train-poseflow", "train the pose flow");
  tpose->add_option("--steps", steps, "steps to run (default: the config)");
  auto* tcb = app.add_subcommand("train-codebook", "train the patch autoencoder and codebook");
  tcb->add_option("--steps", steps, "steps to run (default: the config)");
  auto* tvq = app.add_subcommand("train-vqig", "train the code-predicting image generator");
  tvq->add_option("--steps", steps, "steps to run (default: the config)");

  SampleArgs sa;
  auto* smp = app.add_subcommand("sample", "roll out coefficient sequences under several seeds");
  smp->add_option("--seeds", sa.seeds, "number of seeds (default: eval.seeds)");
  smp->add_option("--context", sa.context, "held-out clip supplying source and audio");
  smp->add_option("--emotion", sa.emotion, "emotion class (default: the clip's)");
  smp->add_option("--length", sa.length, "frames (default: the audio length)");

  int reference = 0, target = 1;
  auto* tr = app.add_subcommand("transfer", "drive a target clip with a reference clip's latents");
  tr->add_option("--reference", reference, "held-out reference clip");
  tr->add_option("--target", target, "held-out target clip");

  int context_index = 0, emotion = -1;
  std::uint64_t identity_seed = 7;
  auto* anim = app.add_subcommand("animate", "render PNG frames from generated coefficients");
  anim->add_option("--context", context_index, "held-out clip supplying source and audio");
  anim->add_option("--emotion", emotion, "emotion class (default: the clip's)");
  anim->add_option("--identity-seed", identity_seed, "seed of the rendered source face");

  bool run_acc = false;
  std::vector<int> only;
  auto* ev = app.add_subcommand("eval", "evaluate the trained artifacts of the run");
  ev->add_flag("--acceptance", run_acc, "train and check every acceptance criterion from the config");
  ev->add_option("--only", only, "with --acceptance: criterion ids to run")->check(CLI::Range(1, kCriteria));

  auto* exl = app.add_subcommand("export-latents", "dump bank latents and their 2-D PCA projection");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "emoflow: " << e.what() << '\n';
    return kExitConfig;
  }
  if (*seed_opt) g.seed = seed;

  CLI::App* cmd = app.get_subcommands().front();
  try {
    Run run(g, cmd->get_name(), err);
    if (cmd == synth) synth_data(run, out);
    else if (cmd == texp) train_expflow(run, out, steps, resume);
    else if (cmd == tpose) train_poseflow(run, out, steps);
    else if (cmd == tcb) train_codebook(run, out, steps);
    else if (cmd == tvq) train_vqig(run, out, steps);
    else if (cmd == smp) sample(run, out, sa);
    else if (cmd == tr) transfer(run, out, reference, target);
    else if (cmd == anim) animate_cmd(run, out, context_index, emotion, identity_seed);
    else if (cmd == ev && run_acc) return acceptance(run, out, only);
    else if (cmd == ev) eval(run, out);
    else if (cmd == exl) export_latents(run, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "emoflow: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "emoflow: invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "emoflow: data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingError& e) {
    err << "emoflow: training error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "emoflow: numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "emoflow: internal error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace emoflow::harness
