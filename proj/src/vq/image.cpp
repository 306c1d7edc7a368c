#include "emoflow/vq/image.hpp"

#include "emoflow/errors.hpp"
#include "emoflow/numerics/ops.hpp"

namespace emoflow::vq {

namespace {

// Column-major source offsets for the token layout of a B-row grid matrix.
std::vector<long> token_index(Eigen::Index batch, int channels, int cells) {
  const Eigen::Index rows = batch * cells;
  std::vector<long> idx(static_cast<std::size_t>(rows * channels));
  for (int ch = 0; ch < channels; ++ch)
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int p = 0; p < cells; ++p)
        idx[static_cast<std::size_t>(ch * rows + b * cells + p)] = static_cast<long>(b + (ch * cells + p) * batch);
  return idx;
}

std::vector<long> grid_index(Eigen::Index batch, int channels, int cells) {
  const Eigen::Index rows = batch * cells;
  std::vector<long> idx(static_cast<std::size_t>(batch * channels * cells));
  for (int ch = 0; ch < channels; ++ch)
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int p = 0; p < cells; ++p)
        idx[static_cast<std::size_t>(b + (ch * cells + p) * batch)] = static_cast<long>(ch * rows + b * cells + p);
  return idx;
}

}  // namespace

ad::Var grid_to_tokens(ad::Var grid, int channels, int cells) {
  if (grid.cols() != static_cast<Eigen::Index>(channels) * cells) throw ArgumentError("grid_to_tokens: size mismatch");
  const Eigen::Index b = grid.rows();
  return ad::gather(grid, token_index(b, channels, cells), b * cells, channels);
}

ad::Var tokens_to_grid(ad::Var tokens, int channels, int cells) {
  if (tokens.cols() != channels || tokens.rows() % cells != 0) throw ArgumentError("tokens_to_grid: size mismatch");
  const Eigen::Index b = tokens.rows() / cells;
  return ad::gather(tokens, grid_index(b, channels, cells), b, static_cast<Eigen::Index>(channels) * cells);
}

Matrix grid_to_tokens(const Matrix& grid, int channels, int cells) {
  ad::Tape t(ad::Tape::Mode::Inference);
  return grid_to_tokens(t.constant(grid), channels, cells).value();
}

Matrix tokens_to_grid(const Matrix& tokens, int channels, int cells) {
  ad::Tape t(ad::Tape::Mode::Inference);
  return tokens_to_grid(t.constant(tokens), channels, cells).value();
}

ad::Var tile_rows(ad::Var table, int batch) {
  std::vector<int> rows(static_cast<std::size_t>(batch) * static_cast<std::size_t>(table.rows()));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i % static_cast<std::size_t>(table.rows()));
  return ad::gather_rows(table, rows);
}

double mean_abs_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("mean_abs_error: shape mismatch");
  return (a - b).cwiseAbs().mean();
}

}  // namespace emoflow::vq
