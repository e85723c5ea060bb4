#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace classrecon {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;
};

/// Reads binary (P5) or ASCII (P2) PGM with maxval <= 255.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Canonical [-1, 1] tensor of shape [H, W] or [1, H, W] to 8-bit, mapping
/// -1 -> 0 and 1 -> 255 linearly. Values outside the range are clamped.
GrayImage to_gray(const torch::Tensor& canonical);

/// 8-bit raster to a [1, H, W] float32 tensor in [-1, 1].
torch::Tensor from_gray(const GrayImage& image);

/// Raw little-endian float32 dump of a tensor (shape is not stored).
void write_f32(const std::filesystem::path& path, const torch::Tensor& values);
torch::Tensor read_f32(const std::filesystem::path& path, at::IntArrayRef shape);

}  // namespace classrecon
