#include "emoflow/harness/checkpoint.hpp"

#include <algorithm>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/binary_io.hpp"

namespace emoflow::harness {

namespace {

constexpr char kMagic[4] = {'E', 'F', 'C', 'K'};

void long_string(numerics::ByteWriter& w, const std::string& s) {
  w.u64(s.size());
  w.bytes(s.data(), s.size());
}

std::string long_string(numerics::ByteReader& r) {
  const std::uint64_t n = r.u64();
  if (n > r.remaining()) throw DataError("checkpoint: string length exceeds file");
  std::string s(static_cast<std::size_t>(n), '\0');
  r.bytes(s.data(), s.size());
  return s;
}

nlohmann::json parse_json(const std::string& s, const char* what) {
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::parse_error&) {
    throw DataError(std::string("checkpoint: malformed ") + what + " JSON");
  }
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  return kind == o.kind && config == o.config && meta == o.meta && step == o.step && rng_state == o.rng_state &&
         arrays == o.arrays;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  numerics::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.string(ck.kind);
  long_string(w, ck.config.dump());
  long_string(w, ck.meta.dump());
  w.i64(ck.step);
  w.string(ck.rng_state);
  w.u32(static_cast<std::uint32_t>(ck.arrays.size()));
  std::uint64_t offset = 0;
  for (const auto& e : ck.arrays) {
    w.string(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.rows()));
    w.u32(static_cast<std::uint32_t>(e.value.cols()));
    w.u64(offset);
    offset += static_cast<std::uint64_t>(e.value.size()) * 8;
  }
  for (const auto& e : ck.arrays) w.matrix_data(e.value);
  w.u64(numerics::fnv1a(w.buffer().data(), w.buffer().size()));
  return w.buffer();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16) throw DataError("checkpoint: file too short");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw DataError("checkpoint: bad magic");
  // The checksum covers everything, so truncation and bit flips are caught
  // before any length field is trusted.
  const std::size_t body = bytes.size() - 8;
  numerics::ByteReader tail(bytes.data() + body, 8);
  if (tail.u64() != numerics::fnv1a(bytes.data(), body)) throw DataError("checkpoint: checksum mismatch");

  numerics::ByteReader r(bytes.data(), body);
  r.seek(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  ck.kind = r.string();
  ck.config = parse_json(long_string(r), "config");
  ck.meta = parse_json(long_string(r), "metadata");
  ck.step = r.i64();
  ck.rng_state = r.string();
  const std::uint32_t count = r.u32();

  struct Slot {
    std::string name;
    Eigen::Index rows, cols;
    std::uint64_t offset;
  };
  std::vector<Slot> table;
  std::uint64_t expected = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Slot s;
    s.name = r.string();
    s.rows = r.u32();
    s.cols = r.u32();
    s.offset = r.u64();
    if (s.offset != expected) throw DataError("checkpoint: array table is not contiguous at '" + s.name + "'");
    expected += static_cast<std::uint64_t>(s.rows * s.cols) * 8;
    table.push_back(std::move(s));
  }
  if (expected != r.remaining()) throw DataError("checkpoint: data section size does not match the table");
  for (const auto& s : table) {
    if (ck.arrays.find(s.name)) throw DataError("checkpoint: duplicate array '" + s.name + "'");
    ck.arrays.add(s.name, r.matrix_data(s.rows, s.cols));
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) { numerics::write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(numerics::read_file(path)); }

void put_params(Checkpoint& ck, const numerics::ParamSet& params) {
  for (const auto& e : params) ck.arrays.add(e.name, e.value);
}

numerics::ParamSet get_params(const Checkpoint& ck, const numerics::ParamSet& layout) {
  numerics::ParamSet out = layout;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto idx = ck.arrays.find(layout.name(i));
    if (!idx) throw DataError("checkpoint: missing array '" + layout.name(i) + "'");
    const auto& v = ck.arrays.value(*idx);
    if (v.rows() != layout.value(i).rows() || v.cols() != layout.value(i).cols())
      throw DataError("checkpoint: shape mismatch for '" + layout.name(i) + "'");
    out.set(i, v);
  }
  return out;
}

void put_optimizer(Checkpoint& ck, const numerics::OptimizerState& s, const numerics::ParamSet& params,
                   const std::string& prefix) {
  if (s.first_moment.size() != params.size() || s.second_moment.size() != params.size())
    throw ArgumentError("put_optimizer: optimizer does not match the parameter set");
  numerics::Matrix meta(1, 5);
  meta << s.config.learning_rate, s.config.beta1, s.config.beta2, s.config.epsilon, static_cast<double>(s.step);
  ck.arrays.add(prefix + ".meta", meta);
  for (std::size_t i = 0; i < params.size(); ++i) ck.arrays.add(prefix + ".m:" + params.name(i), s.first_moment[i]);
  for (std::size_t i = 0; i < params.size(); ++i) ck.arrays.add(prefix + ".v:" + params.name(i), s.second_moment[i]);
}

std::optional<numerics::OptimizerState> get_optimizer(const Checkpoint& ck, const numerics::ParamSet& params,
                                                      const std::string& prefix) {
  const auto meta_idx = ck.arrays.find(prefix + ".meta");
  if (!meta_idx) return std::nullopt;
  const auto& meta = ck.arrays.value(*meta_idx);
  if (meta.rows() != 1 || meta.cols() != 5) throw DataError("checkpoint: malformed optimizer metadata");
  numerics::OptimizerState s;
  s.config.learning_rate = meta(0, 0);
  s.config.beta1 = meta(0, 1);
  s.config.beta2 = meta(0, 2);
  s.config.epsilon = meta(0, 3);
  s.step = static_cast<std::int64_t>(meta(0, 4));
  for (const char* moment : {".m:", ".v:"}) {
    auto& out = moment[1] == 'm' ? s.first_moment : s.second_moment;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto idx = ck.arrays.find(prefix + moment + params.name(i));
      if (!idx) throw DataError("checkpoint: missing optimizer moment for '" + params.name(i) + "'");
      const auto& v = ck.arrays.value(*idx);
      if (v.rows() != params.value(i).rows() || v.cols() != params.value(i).cols())
        throw DataError("checkpoint: optimizer moment shape mismatch for '" + params.name(i) + "'");
      out.push_back(v);
    }
  }
  return s;
}

}  // namespace emoflow::harness
