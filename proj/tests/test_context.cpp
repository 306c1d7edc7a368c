#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "emoflow/context/context.hpp"
#include "emoflow/context/dataset_io.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/numerics/binary_io.hpp"
#include "emoflow/numerics/linalg.hpp"

using namespace emoflow;
using namespace emoflow::context;

namespace {

EncoderConfig identity_config(int classes = 4) {
  EncoderConfig c;
  c.classes = classes;
  c.source = c.audio = c.history_kind = c.emotion = EncoderKind::Identity;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("emoflow_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("noise-free lip channel is an exact affine function of the driving signal") {
  SceneSpec spec = SceneSpec::make_default(1);
  spec.noise = 0.0;
  spec.blink_rate = 0.0;
  const Dataset ds = synth_dataset(spec, 5, 2);
  for (const auto& s : ds.sequences)
    for (int j : spec.lip) {
      CHECK(numerics::pearson(s.beta.col(j), s.audio.col(0)) == doctest::Approx(1.0).epsilon(1e-12));
      const Vector resid = s.beta.col(j) - spec.lip_gain * s.audio.col(0);
      CHECK((resid.array() - spec.class_offsets(s.emotion, j)).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("lip channel correlation at default noise") {
  const SceneSpec spec = SceneSpec::make_default(1);
  const Dataset ds = synth_dataset(spec, 20, 3);
  for (const auto& s : ds.sequences)
    for (int j : spec.lip) CHECK(numerics::pearson(s.beta.col(j), s.audio.col(0)) >= 0.95);
}

TEST_CASE("class offsets set the class means of a probe coordinate") {
  SceneSpec spec = SceneSpec::make_default(4, 2);
  const int probe = 20;
  spec.class_offsets(0, probe) = 2.0;
  spec.class_offsets(1, probe) = -2.0;
  const Dataset ds = synth_dataset(spec, 400, 5);
  double sum[2] = {0, 0};
  int count[2] = {0, 0};
  for (const auto& s : ds.sequences) {
    sum[s.emotion] += s.beta.col(probe).sum();
    count[s.emotion] += s.length();
  }
  REQUIRE(count[0] > 0);
  REQUIRE(count[1] > 0);
  CHECK(sum[0] / count[0] - sum[1] / count[1] == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("dataset generation is seed-deterministic") {
  const SceneSpec spec = SceneSpec::make_default(7);
  const Dataset a = synth_dataset(spec, 6, 8), b = synth_dataset(spec, 6, 8), c = synth_dataset(spec, 6, 9);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].beta == b.sequences[i].beta);
    CHECK(a.sequences[i].pose == b.sequences[i].pose);
    CHECK(a.sequences[i].audio == b.sequences[i].audio);
    CHECK(a.sequences[i].emotion == b.sequences[i].emotion);
    any_diff = any_diff || a.sequences[i].beta != c.sequences[i].beta;
  }
  CHECK(any_diff);
}

TEST_CASE("blink coordinates carry sparse pulses") {
  SceneSpec spec = SceneSpec::make_default(1);
  spec.noise = 0.0;
  const Dataset ds = synth_dataset(spec, 30, 10);
  int pulse_frames = 0, frames = 0;
  for (const auto& s : ds.sequences)
    for (int t = 0; t < s.length(); ++t) {
      const double base = spec.class_offsets(s.emotion, 8) + s.source[8];
      pulse_frames += std::abs(s.beta(t, 8) - base) > 1e-9;
      ++frames;
    }
  CHECK(pulse_frames > 0);
  CHECK(pulse_frames < frames / 2);
}

TEST_CASE("scene validation") {
  SceneSpec spec = SceneSpec::make_default(1);
  spec.blink = {3};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SceneSpec::make_default(1);
  spec.class_amplitudes(0, 0) = -1.0;
  CHECK_THROWS_AS(synth_dataset(spec, 1, 1), ConfigError);
  spec = SceneSpec::make_default(1);
  spec.class_offsets.row(1) = spec.class_offsets.row(0);
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("context layout round-trips the raw inputs with identity encoders") {
  const SceneSpec spec = SceneSpec::make_default(1);
  const Dataset ds = synth_dataset(spec, 1, 2);
  const CoeffSequence& s = ds.sequences[0];
  numerics::ParamSet params;
  numerics::Rng rng(3);
  const EncoderConfig cfg = identity_config();
  const ContextEncoders enc = ContextEncoders::create(params, "ctx", cfg, Variant::Expression, rng);
  CHECK(params.empty());

  const int t = 12;
  const ContextVector c = assemble_context(s, t, enc, params);
  CHECK(c.segment(kSourceSegment) == s.source);
  const Vector audio = c.segment(kAudioSegment);
  for (int k = -2; k <= 2; ++k) CHECK(audio[k + 2] == s.audio(t + k, 0));
  const Vector hist = c.segment(kHistorySegment);
  for (int k = 0; k < 5; ++k) CHECK(hist.segment(k * 64, 64) == s.beta.row(t - 5 + k).transpose());
  const Vector emo = c.segment(kEmotionSegment);
  CHECK(emo.sum() == 1.0);
  CHECK(emo[s.emotion] == 1.0);

  // Start of the clip: history padded with beta_0, audio window clamped.
  const ContextVector c0 = assemble_context(s, 0, enc, params);
  for (int k = 0; k < 5; ++k) CHECK(c0.segment(kHistorySegment).segment(k * 64, 64) == s.source);
  CHECK(c0.segment(kAudioSegment)[0] == s.audio(0, 0));
  const ContextVector c2 = assemble_context(s, 2, enc, params);
  CHECK(c2.segment(kHistorySegment).segment(2 * 64, 64) == s.source);
  CHECK(c2.segment(kHistorySegment).segment(3 * 64, 64) == s.beta.row(0).transpose());

  CHECK(assemble_context(s, t, enc, params).values == c.values);
}

TEST_CASE("pose context has no emotion or source segment") {
  const Dataset ds = synth_dataset(SceneSpec::make_default(1), 1, 2);
  numerics::ParamSet params;
  numerics::Rng rng(3);
  const ContextEncoders enc = ContextEncoders::create(params, "pose", identity_config(), Variant::Pose, rng);
  CHECK(enc.layout().find(kEmotionSegment) == nullptr);
  CHECK(enc.layout().find(kSourceSegment) == nullptr);
  const ContextVector c = assemble_context(ds.sequences[0], 3, enc, params);
  CHECK(c.values.size() == 5 + 5 * 6);
  CHECK(c.segment(kHistorySegment).head(2 * 6).isZero(0));
  CHECK(c.segment(kHistorySegment).tail(6) == ds.sequences[0].pose.row(2).transpose());
}

TEST_CASE("history length must be positive") {
  EncoderConfig cfg = identity_config();
  cfg.history = 0;
  numerics::ParamSet params;
  numerics::Rng rng(1);
  CHECK_THROWS_AS(ContextEncoders::create(params, "x", cfg, Variant::Expression, rng), ConfigError);
}

TEST_CASE("data dropout touches only the history segment") {
  const Dataset ds = synth_dataset(SceneSpec::make_default(1), 1, 2);
  numerics::ParamSet params;
  numerics::Rng rng(4);
  const ContextEncoders enc = ContextEncoders::create(params, "ctx", EncoderConfig{}, Variant::Expression, rng);
  const ContextVector c = assemble_context(ds.sequences[0], 9, enc, params);

  numerics::Rng r(5);
  const ContextVector same = apply_data_dropout(c, 0.0, r);
  CHECK(same.values == c.values);
  CHECK_FALSE(same.history_dropped);

  const ContextVector dropped = apply_data_dropout(c, 1.0, r);
  CHECK(dropped.history_dropped);
  CHECK(dropped.segment(kHistorySegment).isZero(0));
  for (const char* name : {kSourceSegment, kAudioSegment, kEmotionSegment})
    CHECK(dropped.segment(name) == c.segment(name));

  int drops = 0;
  for (int i = 0; i < 10000; ++i) drops += apply_data_dropout(c, 0.25, r).history_dropped;
  CHECK(std::abs(drops / 10000.0 - 0.25) <= 0.02);

  // Batched training path: a zero keep flag zeroes exactly the history columns.
  RawContext raw = raw_context(ds.sequences[0], 9, enc.config(), Variant::Expression);
  raw.keep[0] = 0.0;
  const Vector encoded = enc.encode(params, raw).row(0).transpose();
  const Segment& h = enc.layout().at(kHistorySegment);
  CHECK(encoded.segment(h.offset, h.length).isZero(0));
  CHECK(encoded.head(h.offset) == c.values.head(h.offset));
  CHECK(encoded.tail(encoded.size() - h.offset - h.length) == c.values.tail(encoded.size() - h.offset - h.length));
  CHECK_THROWS_AS(apply_data_dropout(c, 1.5, r), ArgumentError);
}

TEST_CASE("audio and emotion encoders") {
  numerics::ParamSet params;
  numerics::Rng rng(6);
  const ContextEncoders enc = ContextEncoders::create(params, "ctx", EncoderConfig{}, Variant::Expression, rng);
  ad::Tape t;
  const std::vector<int> a = {0, 1, 2, 3}, b = {0, 1, 2, 3};
  const Matrix ea = enc.encode_emotion(t, params, a).value();
  CHECK(ea == enc.encode_emotion(t, params, b).value());
  double min_dist = 1e300;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) min_dist = std::min(min_dist, (ea.row(i) - ea.row(j)).norm());
  CHECK(min_dist > 0.0);
  const std::vector<int> bad = {4};
  CHECK_THROWS_AS(enc.encode_emotion(t, params, bad), ArgumentError);

  numerics::ParamSet zeroed = params.zeros_like();
  ad::Tape t2;
  CHECK(enc.encode_audio(t2, zeroed, t2.constant(Matrix::Zero(1, 5))).value().isZero(0));
}

TEST_CASE("audio providers clamp windows and load from CSV") {
  Matrix f(3, 2);
  f << 1, 2, 3, 4, 5, 6;
  const SignalAudioProvider p(f);
  const Vector w = p.window(0, 1);
  CHECK(w.size() == 6);
  CHECK(w[0] == 1);
  CHECK(w[2] == 1);
  CHECK(w[4] == 3);
  const auto dir = temp_dir("audio");
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "a.csv");
    out << "1,2\n3,4\n5,6\n";
  }
  const FileAudioProvider fp((dir / "a.csv").string());
  CHECK(fp.features() == f);
  CHECK(fp.window(2, 2) == p.window(2, 2));
  CHECK_THROWS_AS(FileAudioProvider((dir / "missing.csv").string()), DataError);
}

TEST_CASE("dataset export and import round-trip") {
  const Dataset ds = synth_dataset(SceneSpec::make_default(3), 4, 11);
  const auto dir = temp_dir("dataset");
  save_dataset(ds, dir.string());
  const Dataset back = load_dataset(dir.string());
  CHECK(back.seed == ds.seed);
  CHECK(back.spec.class_offsets == ds.spec.class_offsets);
  REQUIRE(back.sequences.size() == ds.sequences.size());
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    CHECK(back.sequences[i].beta == ds.sequences[i].beta);
    CHECK(back.sequences[i].pose == ds.sequences[i].pose);
    CHECK(back.sequences[i].audio == ds.sequences[i].audio);
    CHECK(back.sequences[i].source == ds.sequences[i].source);
    CHECK(back.sequences[i].emotion == ds.sequences[i].emotion);
  }

  auto bytes = numerics::read_file((dir / "seq_00001.bin").string());
  bytes.resize(bytes.size() / 2);
  numerics::write_file((dir / "seq_00001.bin").string(), bytes);
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  CHECK_THROWS_AS(load_dataset((dir / "nowhere").string()), DataError);
}
