#pragma once

#include <string>

#include "emoflow/generators/models.hpp"
#include "emoflow/numerics/linalg.hpp"

namespace emoflow::gen {

/// Latents of every training frame, stored for manifold projection.
struct LatentBank {
  Matrix latents;           // N x D
  std::vector<int> labels;  // class per row
  int k_proj = 10;
  double ridge = numerics::kDefaultRidge;

  int size() const { return static_cast<int>(latents.rows()); }
  /// Rows of one class, preserving order.
  LatentBank subset(int label) const;
};

/// Forward-passes every frame of `ds` under its own (undropped) context.
LatentBank build_latent_bank(const ExpFlowModel& model, const context::Dataset& ds, int k_proj = 10,
                             double ridge = numerics::kDefaultRidge);

/// Constrained least-squares combination of the k nearest bank rows
/// (Euclidean distance, ties to the lower row index). Never worse than the
/// nearest row.
Vector manifold_project(const Vector& z, const LatentBank& bank, int k_proj);
Vector manifold_project(const Vector& z, const LatentBank& bank);

inline constexpr std::uint32_t kLatentBankVersion = 1;
void save_latent_bank(const LatentBank& bank, const std::string& path);
LatentBank load_latent_bank(const std::string& path);

}  // namespace emoflow::gen
