#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "emoflow/errors.hpp"
#include "emoflow/harness/acceptance.hpp"
#include "emoflow/harness/artifacts.hpp"
#include "emoflow/harness/checkpoint.hpp"
#include "emoflow/harness/cli.hpp"
#include "emoflow/harness/config.hpp"
#include "emoflow/harness/evaluation.hpp"
#include "emoflow/harness/exports.hpp"
#include "emoflow/harness/metrics.hpp"
#include "emoflow/numerics/linalg.hpp"

using namespace emoflow;
using namespace emoflow::harness;
namespace fs = std::filesystem;

namespace {

/// Smallest config that still exercises every stage in a second or two.
RunConfig tiny() {
  RunConfig c = preset("desk");
  c.name = "tiny";
  c.data.sequences = 12;
  c.data.heldout = 4;
  c.data.length = 16;
  c.data.coeff_dim = 16;
  c.flow.steps = 2;
  c.flow.hidden = 16;
  c.encoders.source_features = 4;
  c.encoders.audio_hidden = 8;
  c.encoders.audio_features = 4;
  c.encoders.history_features = 8;
  c.encoders.emotion_features = 4;
  c.pose.steps = 2;
  c.pose.hidden = 8;
  c.projection.k_proj = 4;
  c.training.steps = 20;
  c.training.batch = 16;
  c.training.consistency_batch = 4;
  c.pose_training = {1e-3, 16, 20};
  c.vq.resolution = 16;
  c.vq.m = c.vq.n = 2;
  c.vq.code_dim = 8;
  c.vq.codes = 16;
  c.vq.widths = {4};
  c.vq.patches = 24;
  c.vq.heldout_patches = 8;
  c.codebook_training = {2e-3, 4, 4};
  c.vqig.motion_dim = 4;
  c.vqig.mapper_hidden = 8;
  c.vqig.warp_grid = 2;
  c.vqig.fuse_hidden = 8;
  c.vqig.heads = 2;
  c.vqig.layers = 1;
  c.vqig.ff_hidden = 8;
  c.vqig.pairs = 12;
  c.vqig.heldout_pairs = 6;
  c.vqig.warmup = 1;
  c.vqig_training = {1e-3, 4, 3};
  c.eval.seeds = 3;
  c.eval.contexts = 2;
  c.eval.oracle_steps = 30;
  c.validate();
  return c;
}

/// Fresh empty directory under the system temp dir.
std::string scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emoflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Independent FNV-1a (64-bit) for rewriting checkpoint trailers.
std::uint64_t fnv1a(const std::vector<std::uint8_t>& b, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void reseal(std::vector<std::uint8_t>& b) {
  const std::uint64_t h = fnv1a(b, b.size() - 8);
  for (int i = 0; i < 8; ++i) b[b.size() - 8 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(h >> (8 * i));
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string tiny_config_file(const std::string& dir) {
  const std::string p = dir + "/tiny.json";
  write_json(p, to_json(tiny()));
  return p;
}

}  // namespace

// --- config ------------------------------------------------------------------

TEST_CASE("Config rejects unknown keys and type mismatches") {
  CHECK_THROWS_AS(resolve_config(json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"flow", {{"KK", 3}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"flow", {{"K", "eight"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"flow", 3}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"preset", "nope"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json::array()), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"vq", {{"m", 4}, {"n", 8}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"name", "a/b"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"flow", {{"dropout", 1.5}}}}), ConfigError);
}

TEST_CASE("Config fills missing keys from the preset and echoes completely") {
  const RunConfig c = resolve_config(json{{"flow", {{"K", 3}}}, {"training", {{"seed", 9}}}});
  const RunConfig d = preset("desk");
  CHECK(c.flow.steps == 3);
  CHECK(c.training.seed == 9);
  CHECK(c.flow.tau == d.flow.tau);
  CHECK(c.vq.codes == d.vq.codes);

  const json echoed = to_json(c);
  CHECK(to_json(from_json(echoed)) == echoed);
  // The echo names every block a run consumes.
  for (const char* block : {"data", "flow", "encoders", "smm", "projection", "pose", "vq", "vqig", "training",
                            "pose_training", "codebook_training", "vqig_training", "eval"})
    CHECK(echoed.contains(block));
  // from_json demands the complete document.
  json partial = echoed;
  partial["flow"].erase("tau");
  CHECK_THROWS_AS(from_json(partial), ConfigError);
}

TEST_CASE("Presets") {
  const auto names = preset_names();
  CHECK(std::find(names.begin(), names.end(), "desk") != names.end());
  CHECK(std::find(names.begin(), names.end(), "full-scale") != names.end());
  const RunConfig p = preset("full-scale");
  CHECK(p.vq.codes == 1024);
  CHECK(p.vq.lambda_adv == 0.8);
  CHECK(p.vq.lambda_feat == 0.25);
  CHECK(p.vq.m == 16);
  CHECK(p.vq.n == 16);
  CHECK(p.vq.code_dim == 256);
  CHECK(p.vq.resolution == 512);
  CHECK_NOTHROW(p.validate());

  const RunConfig d = preset("desk");
  CHECK(d.smm.classes == 4);
  CHECK(d.data.sequences == 200);
  CHECK(d.data.length == 50);
  CHECK(d.flow.dropout == 0.25);
  // A document's own preset key is overridden by the caller's.
  CHECK(resolve_config(json{{"preset", "desk"}}, std::string("full-scale")).vq.codes == 1024);
  CHECK_THROWS_AS(preset("unknown"), ConfigError);
}

TEST_CASE("Config files: parse errors are config errors") {
  const std::string dir = scratch("config_files");
  write_text(dir + "/bad.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir + "/bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir + "/missing.json"), ConfigError);
  write_json(dir + "/ok.json", json{{"name", "x"}, {"eval", {{"seeds", 4}}}});
  const RunConfig c = load_config(dir + "/ok.json");
  CHECK(c.name == "x");
  CHECK(c.eval.seeds == 4);
}

// --- checkpoint --------------------------------------------------------------

TEST_CASE("Checkpoint save, load, save is byte-identical") {
  const RunConfig c = tiny();
  gen::ExpFlowTrainer tr = expflow_trainer(c);
  run_expflow(tr, train_dataset(c), 3);
  const Checkpoint ck = expflow_checkpoint(tr, c);
  const std::string dir = scratch("ckpt_roundtrip");
  save_checkpoint(ck, dir + "/a.ckpt");
  const Checkpoint loaded = load_checkpoint(dir + "/a.ckpt");
  CHECK(loaded == ck);
  save_checkpoint(loaded, dir + "/b.ckpt");
  CHECK(slurp(dir + "/a.ckpt") == slurp(dir + "/b.ckpt"));
  CHECK(encode_checkpoint(decode_checkpoint(encode_checkpoint(ck))) == encode_checkpoint(ck));

  // Layout anchors: magic, version, then the kind string.
  const auto b = encode_checkpoint(ck);
  CHECK(std::string(b.begin(), b.begin() + 4) == "EFCK");
  CHECK(b[4] == kCheckpointVersion);
  CHECK(b[8] == ck.kind.size());
  CHECK(fnv1a(b, b.size() - 8) == [&] {
    std::uint64_t h = 0;
    for (int i = 7; i >= 0; --i) h = (h << 8) | b[b.size() - 8 + static_cast<std::size_t>(i)];
    return h;
  }());
}

TEST_CASE("Checkpoint corruption is a data error") {
  const RunConfig c = tiny();
  const gen::ExpFlowTrainer tr = expflow_trainer(c);
  const std::vector<std::uint8_t> good = encode_checkpoint(expflow_checkpoint(tr, c));
  CHECK_NOTHROW(decode_checkpoint(good));

  auto version = good;
  version[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
  reseal(version);
  try {
    decode_checkpoint(version);
    FAIL("version mismatch accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  auto magic = good;
  magic[0] = 'X';
  reseal(magic);
  CHECK_THROWS_AS(decode_checkpoint(magic), DataError);

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_checkpoint(flipped), DataError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<long>(cut))),
                    DataError);

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), DataError);

  CHECK_THROWS_AS(poseflow_model(decode_checkpoint(good)), DataError);
  CHECK_THROWS_AS(load_checkpoint(scratch("ckpt_missing") + "/none.ckpt"), DataError);
}

TEST_CASE("Truncated checkpoint leaves the trainer untouched") {
  const RunConfig c = tiny();
  gen::ExpFlowTrainer tr = expflow_trainer(c);
  run_expflow(tr, train_dataset(c), 3);
  const auto before = encode_checkpoint(expflow_checkpoint(tr, c));
  const std::string dir = scratch("ckpt_truncated");
  {
    std::ofstream out(dir + "/t.ckpt", std::ios::binary);
    out.write(reinterpret_cast<const char*>(before.data()), static_cast<std::streamsize>(before.size() - 17));
  }
  CHECK_THROWS_AS(resume_from(tr, dir + "/t.ckpt"), DataError);
  CHECK(encode_checkpoint(expflow_checkpoint(tr, c)) == before);
  CHECK(tr.history.loss.size() == 3);
}

TEST_CASE("Resume after load continues bit-identically for 10 steps") {
  const RunConfig c = tiny();
  const context::Dataset ds = train_dataset(c);

  SUBCASE("expflow") {
    gen::ExpFlowTrainer a = expflow_trainer(c);
    run_expflow(a, ds, 5);
    const auto saved = encode_checkpoint(expflow_checkpoint(a, c));
    run_expflow(a, ds, 10);
    gen::ExpFlowTrainer b = expflow_resume(decode_checkpoint(saved));
    run_expflow(b, ds, 10);
    REQUIRE(b.history.loss.size() >= 10);
    CHECK(std::vector<double>(a.history.loss.end() - 10, a.history.loss.end()) ==
          std::vector<double>(b.history.loss.end() - 10, b.history.loss.end()));
    CHECK(a.model.params == b.model.params);
    CHECK(b.model.trained_steps == 15);

    // Same through a file and resume_from.
    const std::string dir = scratch("resume_expflow");
    write_text(dir + "/s.ckpt", std::string(saved.begin(), saved.end()));
    gen::ExpFlowTrainer d = expflow_trainer(c);
    resume_from(d, dir + "/s.ckpt");
    run_expflow(d, ds, 10);
    CHECK(d.model.params == a.model.params);
  }
  SUBCASE("poseflow") {
    gen::PoseFlowTrainer a = poseflow_trainer(c);
    run_poseflow(a, ds, 5);
    const auto saved = encode_checkpoint(poseflow_checkpoint(a, c));
    run_poseflow(a, ds, 10);
    gen::PoseFlowTrainer b = poseflow_resume(decode_checkpoint(saved));
    run_poseflow(b, ds, 10);
    CHECK(std::vector<double>(a.history.nll.end() - 10, a.history.nll.end()) ==
          std::vector<double>(b.history.nll.end() - 10, b.history.nll.end()));
    CHECK(a.model.params == b.model.params);
  }
  SUBCASE("codebook") {
    const vq::PatchCorpus patches = train_patches(c);
    vq::CodebookTrainer a = codebook_trainer(c);
    run_codebook(a, patches, 2);
    const auto saved = encode_checkpoint(codebook_checkpoint(a, c));
    run_codebook(a, patches, 10);
    vq::CodebookTrainer b = codebook_resume(decode_checkpoint(saved));
    run_codebook(b, patches, 10);
    CHECK(std::vector<double>(a.history.total.end() - 10, a.history.total.end()) ==
          std::vector<double>(b.history.total.end() - 10, b.history.total.end()));
    CHECK(a.model.params == b.model.params);
    CHECK(a.disc_params == b.disc_params);
  }
}

TEST_CASE("Loaded models compute the same function as the saved ones") {
  const RunConfig c = tiny();
  const context::Dataset train = train_dataset(c), held = heldout_dataset(c);
  gen::ExpFlowTrainer e = expflow_trainer(c);
  run_expflow(e, train, 3);
  const Checkpoint eck = decode_checkpoint(encode_checkpoint(expflow_checkpoint(e, c)));
  CHECK(gen::mean_nll(expflow_model(eck), held) == gen::mean_nll(e.model, held));

  gen::PoseFlowTrainer p = poseflow_trainer(c);
  run_poseflow(p, train, 3);
  const Checkpoint pck = decode_checkpoint(encode_checkpoint(poseflow_checkpoint(p, c)));
  CHECK(gen::mean_pose_nll(poseflow_model(pck), held) == gen::mean_pose_nll(p.model, held));

  Checkpoint no_seed = eck;
  no_seed.meta.erase("model_seed");
  CHECK_THROWS_AS(expflow_model(no_seed), DataError);
}

TEST_CASE("Model-only checkpoints carry no optimizer and cannot resume") {
  const RunConfig c = tiny();
  const vq::PatchAutoencoder ae = vq::PatchAutoencoder::create(vq_config(c), 3);
  const Checkpoint ck = codebook_checkpoint(ae, c);
  CHECK_FALSE(get_optimizer(ck, ae.params).has_value());
  CHECK_THROWS_AS(codebook_resume(ck), DataError);
  CHECK(codebook_model(ck).params == ae.params);
  CHECK(checkpoint_config(ck).name == "tiny");
}

// --- metrics -----------------------------------------------------------------

TEST_CASE("Oracle classifier reaches 95% on ground-truth clips") {
  RunConfig c = preset("desk");
  c.data.sequences = 80;
  c.data.heldout = 40;
  const OracleClassifier oracle = OracleClassifier::train(train_dataset(c), c.smm.classes, 500, 5);
  CHECK(oracle.accuracy(heldout_dataset(c)) >= 0.95);
  CHECK(oracle.classes() == c.smm.classes);
}

TEST_CASE("Correlation on the noise-free lip channel is 1") {
  context::SceneSpec s = context::SceneSpec::make_default(3, 4, 1.0, 16);
  s.noise = 0.0;
  s.audio_noise = 0.0;
  const context::Dataset ds = context::synth_dataset(s, 4, 8);
  for (const auto& seq : ds.sequences)
    CHECK(channel_correlation(seq.beta, s.lip, seq.audio.col(0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Diversity statistics against hand values") {
  Matrix a = Matrix::Zero(2, 2), b(2, 2), d(2, 2);
  b << 3, 4, 0, 0;  // frame distances to a: 5 and 0
  d << 0, 0, 6, 8;  // to a: 0 and 10; to b: 5 and 10
  const std::vector<Matrix> runs = {a, b, d};
  CHECK(mean_pairwise_l2(runs) == doctest::Approx((2.5 + 5.0 + 7.5) / 3));
  CHECK(mean_pairwise_l2({a, a, a}) == 0.0);
  // Column 0 at frame 0 takes 0, 3, 0: unbiased variance 3; at frame 1: 0, 0, 6 -> 12.
  CHECK(across_run_variance(runs, {0}) == doctest::Approx((3.0 + 12.0) / 2));
  // Trace at frame 0: var(0,3,0) + var(0,4,0) = 3 + 16/3; frame 1: 12 + var(0,0,8) = 12 + 64/3.
  CHECK(trace_spread(runs) == doctest::Approx((3.0 + 16.0 / 3 + 12.0 + 64.0 / 3) / 2));
}

TEST_CASE("Pose-audio correlation pools speeds over clips") {
  Matrix p(4, 1);
  p << 0, 1, 3, 6;  // speeds 1, 2, 3
  Vector e(4);
  e << 9, 2, 4, 6;
  CHECK(pose_audio_correlation({p}, {e}) == doctest::Approx(1.0));
  Vector r(4);
  r << 0, 6, 4, 2;
  CHECK(pose_audio_correlation({p}, {r}) == doctest::Approx(-1.0));
}

TEST_CASE("Nearest-centroid accuracy and class traces") {
  gen::LatentBank train, test;
  train.latents.resize(4, 1);
  train.latents << -1, -3, 1, 3;  // centroids -2 and 2
  train.labels = {0, 0, 1, 1};
  test.latents.resize(3, 1);
  test.latents << -0.5, 0.5, 0.1;
  test.labels = {0, 1, 0};
  CHECK(nearest_centroid_accuracy(train, test, 2) == doctest::Approx(2.0 / 3));
  const auto traces = class_covariance_traces(train, 2);
  CHECK(traces[0] == doctest::Approx(2.0));  // var(-1, -3), unbiased
  CHECK(traces[1] == doctest::Approx(2.0));
}

TEST_CASE("Metrics report thresholds, JSON and CSV") {
  MetricsReport r;
  r.add("plain", 1.5, "u");
  r.check("good", 0.9, "frac", Comparator::GreaterEqual, 0.8, "5");
  CHECK(r.all_passed());
  r.check("bad", 2.0, "abs", Comparator::Less, 1.0, "8");
  CHECK_FALSE(r.all_passed());
  CHECK_FALSE(r.find("plain")->pass().has_value());
  CHECK(*r.find("good")->pass());
  CHECK_FALSE(*r.find("bad")->pass());
  CHECK(r.find("missing") == nullptr);

  const json j = r.to_json();
  CHECK(j.dump().find("\"bad\"") != std::string::npos);
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("name,value,unit,comparator,threshold,pass,criterion\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("Deterministic baseline z = mu has zero diversity") {
  const RunConfig c = tiny();
  gen::ExpFlowTrainer tr = expflow_trainer(c);
  const context::Dataset train = train_dataset(c);
  run_expflow(tr, train, 10);
  const gen::LatentBank bank = gen::build_latent_bank(tr.model, train, c.projection.k_proj, c.projection.ridge);
  const ExpressionEval e = evaluate_expression(c, tr.model, &bank, train, heldout_dataset(c));
  CHECK(e.mean_latent_diversity == 0.0);
  CHECK(e.diversity > 0.0);
  CHECK(e.fixed_seed_max_diff == 0.0);
  CHECK(e.seed_runs.size() == static_cast<std::size_t>(c.eval.seeds));
}

// --- exports -----------------------------------------------------------------

TEST_CASE("PNG roundtrip is exact on 8-bit values") {
  const vq::ImageShape shape{3, 5, 7};
  numerics::Rng rng(4);
  Vector img(shape.size());
  for (Eigen::Index i = 0; i < img.size(); ++i) img[i] = static_cast<double>(rng.index(256)) / 255.0;
  const std::string dir = scratch("png");
  write_png(dir + "/a.png", img, shape);
  vq::ImageShape back{};
  const Vector read = read_png(dir + "/a.png", &back);
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  CHECK((read - img).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(read_png(dir + "/missing.png"), DataError);
  write_text(dir + "/junk.png", "not a png");
  CHECK_THROWS_AS(read_png(dir + "/junk.png"), DataError);
}

TEST_CASE("Frame folders and index maps") {
  const vq::ImageShape shape{3, 4, 4};
  const Matrix frames = Matrix::Constant(3, shape.size(), 0.5);
  const std::string dir = scratch("frames");
  const json m = write_frames(dir + "/f", frames, shape, json{{"emotion", 2}});
  CHECK(m["frames"].size() == 3);
  CHECK(m["emotion"] == 2);
  CHECK(fs::exists(dir + "/f/frame_00002.png"));
  CHECK(json::parse(slurp(dir + "/f/manifest.json")) == m);
  write_index_maps(dir + "/maps.csv", {{1, 2, 3, 4}, {5, 6, 7, 8}}, 2);
  CHECK(slurp(dir + "/maps.csv") == "t,cell0,cell1,cell2,cell3\n0,1,2,3,4\n1,5,6,7,8\n");
}

TEST_CASE("Latent and PCA CSVs agree with the covariance eigendecomposition") {
  numerics::Rng rng(12);
  Matrix z = rng.normal_matrix(60, 4);
  z.col(1) *= 3.0;
  z.col(2) += 0.5 * z.col(1);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  const numerics::PcaResult pca = numerics::pca_power_iteration(z, 2, 0);

  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(z.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  for (int k = 0; k < 2; ++k) {
    const int idx = 3 - k;
    CHECK(pca.variances[k] == doctest::Approx(eig.eigenvalues()[idx]).epsilon(1e-8));
    CHECK(std::abs(pca.components.col(k).dot(eig.eigenvectors().col(idx))) == doctest::Approx(1.0).epsilon(1e-8));
  }

  const std::string dir = scratch("latents_csv");
  write_latents_csv(dir + "/l.csv", z, labels);
  write_pca_csv(dir + "/p.csv", pca, labels);
  std::istringstream lines(slurp(dir + "/p.csv"));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "class,pc1,pc2");
  std::getline(lines, line);
  double c0 = 0, p1 = 0, p2 = 0;
  char comma = 0;
  std::istringstream row(line);
  row >> c0 >> comma >> p1 >> comma >> p2;
  CHECK(c0 == 0);
  CHECK(p1 == doctest::Approx(pca.projected(0, 0)).epsilon(1e-15));
  CHECK(p2 == doctest::Approx(pca.projected(0, 1)).epsilon(1e-15));
  CHECK(json::parse(slurp(dir + "/p.csv.json"))["variances"].size() == 2);
  CHECK(slurp(dir + "/l.csv").rfind("class,z0,z1,z2,z3\n", 0) == 0);
}

// --- evaluation helpers ------------------------------------------------------

TEST_CASE("Zero-motion chain of an untrained image generator") {
  const RunConfig c = tiny();
  vq::PatchAutoencoder ae = vq::PatchAutoencoder::create(vq_config(c), 5);
  ae.frozen = true;
  const vqig::VqigTrainer tr = vqig_trainer(c, ae);
  const auto [img, feat] = zero_motion_chain_error(tr.model, ae, heldout_pairs(c));
  CHECK(img <= 1e-6);
  CHECK(feat <= 1e-6);
}

TEST_CASE("Acceptance runner reports selected criteria and writes its table") {
  AcceptanceOptions o;
  o.config = tiny();
  o.out_dir = scratch("acceptance");
  o.only = {1, 3};
  const AcceptanceOutcome res = run_acceptance(o);
  REQUIRE(res.results.size() == 2);
  CHECK(res.results[0].id == 1);
  CHECK(res.results[1].id == 3);
  CHECK(res.all_passed());
  CHECK(format_result(res.results[0]).rfind("[PASS] 1 ", 0) == 0);
  CHECK(fs::exists(o.out_dir + "/acceptance.txt"));
  CHECK(fs::exists(o.out_dir + "/metrics.csv"));
  CHECK(json::parse(slurp(o.out_dir + "/config.json")) == to_json(o.config));
}

// --- CLI ---------------------------------------------------------------------

TEST_CASE("CLI exit codes") {
  const std::string dir = scratch("cli_codes");
  const std::string cfg = tiny_config_file(dir);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"frobnicate"}).code == kExitConfig);
  CHECK(cli({"--no-such-flag", "synth-data"}).code == kExitConfig);

  write_json(dir + "/unknown.json", json{{"flow", {{"KK", 1}}}});
  const CliResult bad = cli({"--config", dir + "/unknown.json", "--out", dir, "synth-data"});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.err.find("unknown key") != std::string::npos);

  const CliResult missing = cli({"--config", cfg, "--out", dir, "sample"});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.find("missing model") != std::string::npos);
  CHECK(cli({"--config", cfg, "--out", dir, "eval"}).code == kExitData);

  ensure_dir(dir + "/tiny");
  write_text(dir + "/tiny/expflow.ckpt", "EFCK garbage");
  CHECK(cli({"--config", cfg, "--out", dir, "export-latents"}).code == kExitData);
}

TEST_CASE("CLI pipeline is deterministic under --seed and re-runs overwrite") {
  const std::string root = scratch("cli_pipeline");
  const std::string cfg = tiny_config_file(root);
  auto pipeline = [&](const std::string& out, const std::string& seed) {
    for (std::vector<std::string> cmd : {std::vector<std::string>{"synth-data"}, {"train-expflow"},
                                         {"sample", "--seeds", "3"}, {"eval"}}) {
      std::vector<std::string> args = {"--config", cfg, "--out", out, "--seed", seed};
      args.insert(args.end(), cmd.begin(), cmd.end());
      const CliResult r = cli(args);
      INFO(cmd[0] << ": " << r.err);
      REQUIRE(r.code == kExitOk);
    }
  };
  pipeline(root + "/a", "11");
  pipeline(root + "/b", "11");
  pipeline(root + "/c", "12");
  const std::string a = root + "/a/tiny", b = root + "/b/tiny", c = root + "/c/tiny";

  CHECK(slurp(a + "/metrics/eval.json") == slurp(b + "/metrics/eval.json"));
  CHECK(slurp(a + "/metrics/sample.json") == slurp(b + "/metrics/sample.json"));
  CHECK(slurp(a + "/expflow.ckpt") == slurp(b + "/expflow.ckpt"));
  CHECK(slurp(a + "/samples/seed_02.csv") == slurp(b + "/samples/seed_02.csv"));
  CHECK(slurp(a + "/logs/eval.log") == slurp(b + "/logs/eval.log"));
  CHECK(slurp(a + "/expflow.ckpt") != slurp(c + "/expflow.ckpt"));

  const json echoed = json::parse(slurp(a + "/config.json"));
  CHECK(echoed["training"]["seed"] == 11);
  RunConfig expected = tiny();
  expected.training.seed = 11;
  CHECK(echoed == to_json(expected));

  const json eval = json::parse(slurp(a + "/metrics/eval.json"));
  CHECK(eval.dump().find("expflow.lip_correlation") != std::string::npos);

  // Idempotent re-run into the same directory.
  const std::string before = slurp(a + "/metrics/eval.json");
  REQUIRE(cli({"--config", cfg, "--out", root + "/a", "--seed", "11", "eval"}).code == kExitOk);
  CHECK(slurp(a + "/metrics/eval.json") == before);

  // Resume continues from the saved trainer.
  REQUIRE(cli({"--config", cfg, "--out", root + "/a", "--seed", "11", "train-expflow", "--steps", "5", "--resume",
               a + "/expflow.ckpt"})
              .code == kExitOk);
  CHECK(load_checkpoint(a + "/expflow.ckpt").step == 25);

  // Seeds beyond the first run of `sample` and the latent exports.
  REQUIRE(cli({"--config", cfg, "--out", root + "/a", "--seed", "11", "export-latents"}).code == kExitOk);
  CHECK(fs::exists(a + "/latents/latents.csv"));
  CHECK(fs::exists(a + "/latents/pca.csv"));
  CHECK(fs::exists(a + "/samples/seed_00.csv"));
  CHECK_FALSE(fs::exists(a + "/samples/seed_03.csv"));

  const CliResult t = cli({"--config", cfg, "--out", root + "/a", "--seed", "11", "transfer", "--reference", "1",
                           "--target", "1"});
  REQUIRE(t.code == kExitOk);
  const json tm = json::parse(slurp(a + "/metrics/transfer.json"));
  CHECK(tm.dump().find("transfer.identity_error") != std::string::npos);
  CHECK(cli({"--config", cfg, "--out", root + "/a", "transfer", "--reference", "99"}).code == kExitConfig);
}

TEST_CASE("CLI sample emits one CSV per seed plus a diversity report") {
  const std::string root = scratch("cli_sample");
  const std::string cfg = tiny_config_file(root);
  REQUIRE(cli({"--config", cfg, "--out", root, "train-expflow", "--steps", "5"}).code == kExitOk);
  const CliResult r = cli({"--config", cfg, "--out", root, "sample", "--seeds", "10"});
  REQUIRE(r.code == kExitOk);
  for (int s = 0; s < 10; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "/tiny/samples/seed_%02d.csv", s);
    CHECK(fs::exists(root + name));
  }
  const json m = json::parse(slurp(root + "/tiny/metrics/sample.json"));
  CHECK(m.dump().find("sample.diversity") != std::string::npos);
  CHECK(r.out.find("sample.diversity") != std::string::npos);
}

TEST_CASE("CLI image stages: codebook, generator, animation") {
  const std::string root = scratch("cli_images");
  const std::string cfg = tiny_config_file(root);
  const std::vector<std::string> base = {"--config", cfg, "--out", root};
  auto run = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    const CliResult r = cli(args);
    INFO(extra[0] << ": " << r.err);
    return r.code;
  };
  CHECK(run({"train-vqig"}) == kExitData);  // needs the codebook first
  REQUIRE(run({"train-codebook"}) == kExitOk);
  REQUIRE(run({"train-vqig"}) == kExitOk);
  REQUIRE(run({"train-expflow", "--steps", "3"}) == kExitOk);
  REQUIRE(run({"train-poseflow", "--steps", "3"}) == kExitOk);
  REQUIRE(run({"animate", "--context", "1", "--emotion", "2"}) == kExitOk);

  const std::string anim = root + "/tiny/animation";
  const json manifest = json::parse(slurp(anim + "/manifest.json"));
  CHECK(manifest["emotion"] == 2);
  CHECK(manifest["frames"].size() == static_cast<std::size_t>(tiny().data.length));
  vq::ImageShape shape{};
  read_png(anim + "/frame_00000.png", &shape);
  CHECK(shape.width == 16);
  std::istringstream maps(slurp(anim + "/index_maps.csv"));
  std::string header;
  std::getline(maps, header);
  CHECK(header == "t,cell0,cell1,cell2,cell3");
  REQUIRE(run({"eval"}) == kExitOk);
  const json eval = json::parse(slurp(root + "/tiny/metrics/eval.json"));
  for (const char* key : {"codebook.code_usage", "vqig.code_accuracy", "poseflow.audio_energy_correlation"})
    CHECK_MESSAGE(eval.dump().find(key) != std::string::npos, key);
}
