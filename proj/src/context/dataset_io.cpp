#include "emoflow/context/dataset_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/binary_io.hpp"

namespace emoflow::context {

namespace {

constexpr char kSequenceMagic[4] = {'E', 'F', 'S', 'Q'};

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw DataError("expected a nonempty matrix array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (j[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(cols)) throw DataError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::string record_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%05zu.bin", i);
  return buf;
}

}  // namespace

nlohmann::json scene_to_json(const SceneSpec& s) {
  return {{"classes", s.classes},
          {"dim", s.dim},
          {"pose_dim", s.pose_dim},
          {"length", s.length},
          {"fps", s.fps},
          {"lip", s.lip},
          {"blink", s.blink},
          {"class_offsets", matrix_json(s.class_offsets)},
          {"class_amplitudes", matrix_json(s.class_amplitudes)},
          {"class_frequencies", matrix_json(s.class_frequencies)},
          {"noise", s.noise},
          {"identity_scale", s.identity_scale},
          {"lip_gain", s.lip_gain},
          {"blink_rate", s.blink_rate},
          {"blink_amplitude", s.blink_amplitude},
          {"audio_freq_a", s.audio_freq_a},
          {"audio_freq_b", s.audio_freq_b},
          {"audio_noise", s.audio_noise},
          {"energy_radius", s.energy_radius},
          {"pose_gain", s.pose_gain},
          {"pose_floor", s.pose_floor},
          {"pose_reversion", s.pose_reversion}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  try {
    SceneSpec s;
    s.classes = j.at("classes").get<int>();
    s.dim = j.at("dim").get<int>();
    s.pose_dim = j.at("pose_dim").get<int>();
    s.length = j.at("length").get<int>();
    s.fps = j.at("fps").get<double>();
    s.lip = j.at("lip").get<std::vector<int>>();
    s.blink = j.at("blink").get<std::vector<int>>();
    s.class_offsets = matrix_from_json(j.at("class_offsets"));
    s.class_amplitudes = matrix_from_json(j.at("class_amplitudes"));
    s.class_frequencies = matrix_from_json(j.at("class_frequencies"));
    s.noise = j.at("noise").get<double>();
    s.identity_scale = j.at("identity_scale").get<double>();
    s.lip_gain = j.at("lip_gain").get<double>();
    s.blink_rate = j.at("blink_rate").get<double>();
    s.blink_amplitude = j.at("blink_amplitude").get<double>();
    s.audio_freq_a = j.at("audio_freq_a").get<double>();
    s.audio_freq_b = j.at("audio_freq_b").get<double>();
    s.audio_noise = j.at("audio_noise").get<double>();
    s.energy_radius = j.at("energy_radius").get<int>();
    s.pose_gain = j.at("pose_gain").get<double>();
    s.pose_floor = j.at("pose_floor").get<double>();
    s.pose_reversion = j.at("pose_reversion").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scene spec: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_sequence(const CoeffSequence& seq) {
  numerics::ByteWriter w;
  w.bytes(kSequenceMagic, 4);
  w.u32(kSequenceFormatVersion);
  w.u32(static_cast<std::uint32_t>(seq.length()));
  w.u32(static_cast<std::uint32_t>(seq.beta.cols()));
  w.u32(static_cast<std::uint32_t>(seq.pose.cols()));
  w.u32(static_cast<std::uint32_t>(seq.audio.cols()));
  w.i32(seq.emotion);
  w.matrix_data(seq.source.transpose());
  w.matrix_data(seq.beta);
  w.matrix_data(seq.pose);
  w.matrix_data(seq.audio);
  return w.buffer();
}

CoeffSequence decode_sequence(const std::vector<std::uint8_t>& bytes) {
  numerics::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kSequenceMagic)) throw DataError("sequence record: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kSequenceFormatVersion)
    throw DataError("sequence record: unsupported version " + std::to_string(version));
  const auto t = static_cast<Eigen::Index>(r.u32());
  const auto d = static_cast<Eigen::Index>(r.u32());
  const auto p = static_cast<Eigen::Index>(r.u32());
  const auto f = static_cast<Eigen::Index>(r.u32());
  CoeffSequence s;
  s.emotion = r.i32();
  s.source = r.matrix_data(1, d).row(0).transpose();
  s.beta = r.matrix_data(t, d);
  s.pose = r.matrix_data(t, p);
  s.audio = r.matrix_data(t, f);
  if (r.remaining() != 0) throw DataError("sequence record: trailing bytes");
  return s;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json seqs = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    numerics::write_file((fs::path(dir) / record_name(i)).string(), encode_sequence(s));
    seqs.push_back({{"file", record_name(i)}, {"emotion", s.emotion}, {"length", s.length()}});
  }
  nlohmann::json manifest = {{"format", "emoflow-dataset"},
                             {"version", kManifestVersion},
                             {"seed", ds.seed},
                             {"count", ds.sequences.size()},
                             {"frames", ds.total_frames()},
                             {"spec", scene_to_json(ds.spec)},
                             {"sequences", seqs}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataError("cannot write dataset manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("dataset manifest not found: " + manifest_path.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset manifest unreadable: ") + e.what());
  }
  if (m.value("format", "") != "emoflow-dataset") throw DataError("not a dataset manifest: " + dir);
  if (m.value("version", -1) != kManifestVersion) throw DataError("dataset manifest version mismatch");
  Dataset ds;
  ds.spec = scene_from_json(m.at("spec"));
  ds.seed = m.at("seed").get<std::uint64_t>();
  for (const auto& entry : m.at("sequences")) {
    CoeffSequence s = decode_sequence(numerics::read_file((fs::path(dir) / entry.at("file").get<std::string>()).string()));
    if (s.emotion != entry.at("emotion").get<int>() || s.length() != entry.at("length").get<int>())
      throw DataError("dataset record disagrees with manifest: " + entry.at("file").get<std::string>());
    ds.sequences.push_back(std::move(s));
  }
  if (ds.sequences.size() != m.at("count").get<std::size_t>()) throw DataError("dataset count mismatch");
  return ds;
}

}  // namespace emoflow::context
