#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "emoflow/numerics/linalg.hpp"
#include "emoflow/vq/image.hpp"

namespace emoflow::harness {

using numerics::Matrix;
using numerics::Vector;

/// Creates the directory (and parents); DataError if that fails.
void ensure_dir(const std::string& dir);

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const nlohmann::json& j);

/// 8-bit RGB PNG of one channel-major image row with values in [0, 1]
/// (clamped, rounded to nearest).
void write_png(const std::string& path, const Vector& image, const vq::ImageShape& shape);
/// Decoded 8-bit RGB pixels rescaled to [0, 1] in the same row layout.
Vector read_png(const std::string& path, vq::ImageShape* shape = nullptr);

/// frame_NNNNN.png per row plus manifest.json listing them with the shape
/// and `extra` merged in. Returns the manifest.
nlohmann::json write_frames(const std::string& dir, const Matrix& frames, const vq::ImageShape& shape,
                            const nlohmann::json& extra = nlohmann::json::object());

/// One row per frame: t followed by the grid's cell indices in row-major order.
void write_index_maps(const std::string& path, const std::vector<std::vector<int>>& maps, int grid);

/// class,z0..z{D-1} per latent.
void write_latents_csv(const std::string& path, const Matrix& latents, const std::vector<int>& labels);
/// class,pc1,pc2 per latent, then a sidecar JSON with the components.
void write_pca_csv(const std::string& path, const numerics::PcaResult& pca, const std::vector<int>& labels);

}  // namespace emoflow::harness
