#include "emoflow/generators/latent_bank.hpp"

#include <algorithm>
#include <numeric>

#include "emoflow/errors.hpp"
#include "emoflow/numerics/binary_io.hpp"

namespace emoflow::gen {

LatentBank LatentBank::subset(int label) const {
  LatentBank out;
  out.k_proj = k_proj;
  out.ridge = ridge;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) rows.push_back(static_cast<Eigen::Index>(i));
  out.latents.resize(static_cast<Eigen::Index>(rows.size()), latents.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.latents.row(static_cast<Eigen::Index>(i)) = latents.row(rows[i]);
  out.labels.assign(rows.size(), label);
  return out;
}

LatentBank build_latent_bank(const ExpFlowModel& model, const context::Dataset& ds, int k_proj, double ridge) {
  if (k_proj < 1) throw ConfigError("latent bank: K_proj must be at least 1");
  const FrameTable table = FrameTable::build(ds, model.config.encoders, context::Variant::Expression);
  LatentBank bank;
  bank.k_proj = k_proj;
  bank.ridge = ridge;
  bank.latents.resize(table.size(), model.dim());
  constexpr int kChunk = 512;
  for (int start = 0; start < table.size(); start += kChunk) {
    const int n = std::min(kChunk, table.size() - start);
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), start);
    const FrameBatch b = table.select(rows);
    const Matrix ctx = model.encoders.encode(model.params, b.raw);
    bank.latents.middleRows(start, n) = model.flow.forward_batch(model.params, b.target, ctx, b.classes).first;
  }
  bank.labels = table.classes;
  if (!bank.latents.allFinite()) throw NumericError("latent bank: non-finite latent");
  if (bank.size() < k_proj) throw DataError("latent bank: fewer rows than K_proj");
  return bank;
}

Vector manifold_project(const Vector& z, const LatentBank& bank, int k_proj) {
  if (bank.size() == 0) throw ArgumentError("manifold_project: empty bank");
  if (z.size() != bank.latents.cols()) throw ArgumentError("manifold_project: dimension mismatch");
  if (k_proj < 1) throw ArgumentError("manifold_project: K_proj must be at least 1");
  const int k = std::min(k_proj, bank.size());
  const Vector dist = (bank.latents.rowwise() - z.transpose()).rowwise().squaredNorm();
  std::vector<int> order(static_cast<std::size_t>(bank.size()));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
  Matrix nb(k, z.size());
  for (int i = 0; i < k; ++i) nb.row(i) = bank.latents.row(order[static_cast<std::size_t>(i)]);
  if (k == 1) return nb.row(0).transpose();
  const Vector w = numerics::constrained_lsq_weights(z, nb, bank.ridge);
  const Vector out = nb.transpose() * w;
  // Ridge regularization can leave the combination marginally worse than the
  // nearest row; the one-hot weight is always feasible.
  if ((z - out).norm() > std::sqrt(dist[order[0]])) return nb.row(0).transpose();
  return out;
}

Vector manifold_project(const Vector& z, const LatentBank& bank) { return manifold_project(z, bank, bank.k_proj); }

namespace {
constexpr char kBankMagic[4] = {'E', 'F', 'L', 'B'};
}

void save_latent_bank(const LatentBank& bank, const std::string& path) {
  numerics::ByteWriter w;
  w.bytes(kBankMagic, 4);
  w.u32(kLatentBankVersion);
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.latents.cols()));
  w.i32(bank.k_proj);
  w.f64(bank.ridge);
  for (int l : bank.labels) w.i32(l);
  w.matrix_data(bank.latents);
  w.u64(numerics::fnv1a(w.buffer().data(), w.buffer().size()));
  numerics::write_file(path, w.buffer());
}

LatentBank load_latent_bank(const std::string& path) {
  const auto bytes = numerics::read_file(path);
  if (bytes.size() < 8) throw DataError("latent bank: file too short");
  numerics::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kBankMagic)) throw DataError("latent bank: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kLatentBankVersion) throw DataError("latent bank: unsupported version " + std::to_string(version));
  const auto n = static_cast<Eigen::Index>(r.u32());
  const auto d = static_cast<Eigen::Index>(r.u32());
  LatentBank bank;
  bank.k_proj = r.i32();
  bank.ridge = r.f64();
  for (Eigen::Index i = 0; i < n; ++i) bank.labels.push_back(r.i32());
  bank.latents = r.matrix_data(n, d);
  const std::size_t body = r.position();
  if (r.u64() != numerics::fnv1a(bytes.data(), body)) throw DataError("latent bank: checksum mismatch");
  if (r.remaining() != 0) throw DataError("latent bank: trailing bytes");
  return bank;
}

}  // namespace emoflow::gen
