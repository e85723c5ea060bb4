#include "classrecon/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "classrecon/errors.hpp"

namespace classrecon {
namespace {

// Skips whitespace and '#' comments between PGM header tokens.
int64_t read_header_int(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int64_t value = -1;
  in >> value;
  if (!in) throw ConfigError("malformed PGM header");
  return value;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") {
    throw ConfigError(path.string() + ": not a PGM file");
  }
  GrayImage image;
  image.width = read_header_int(in);
  image.height = read_header_int(in);
  const int64_t maxval = read_header_int(in);
  if (image.width <= 0 || image.height <= 0 || maxval <= 0 || maxval > 255) {
    throw ConfigError(path.string() + ": unsupported PGM geometry or depth");
  }
  image.pixels.resize(static_cast<size_t>(image.width * image.height));
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
    if (!in) throw ConfigError(path.string() + ": truncated PGM data");
  } else {
    for (auto& p : image.pixels) p = static_cast<uint8_t>(read_header_int(in));
  }
  if (maxval != 255) {
    for (auto& p : image.pixels) {
      p = static_cast<uint8_t>(std::lround(p * 255.0 / maxval));
    }
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

GrayImage to_gray(const torch::Tensor& canonical) {
  auto t = canonical.detach().to(torch::kDouble).contiguous();
  if (t.dim() == 3) t = t.squeeze(0);
  if (t.dim() != 2) throw ConfigError("to_gray expects an [H, W] or [1, H, W] tensor");
  GrayImage image;
  image.height = t.size(0);
  image.width = t.size(1);
  image.pixels.resize(static_cast<size_t>(t.numel()));
  const double* src = t.data_ptr<double>();
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    const double unit = std::clamp((src[i] + 1.0) / 2.0, 0.0, 1.0);
    image.pixels[i] = static_cast<uint8_t>(std::lround(unit * 255.0));
  }
  return image;
}

torch::Tensor from_gray(const GrayImage& image) {
  auto t = torch::empty({1, image.height, image.width}, torch::kFloat32);
  float* dst = t.data_ptr<float>();
  for (size_t i = 0; i < image.pixels.size(); ++i) {
    dst[i] = static_cast<float>(image.pixels[i]) / 255.0f * 2.0f - 1.0f;
  }
  return t;
}

void write_f32(const std::filesystem::path& path, const torch::Tensor& values) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  auto t = values.detach().to(torch::kFloat32).contiguous();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

torch::Tensor read_f32(const std::filesystem::path& path, at::IntArrayRef shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  auto t = torch::empty(shape, torch::kFloat32);
  const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(float));
  in.read(reinterpret_cast<char*>(t.data_ptr<float>()), bytes);
  if (in.gcount() != bytes) {
    throw ConfigError(path.string() + ": expected " + std::to_string(bytes) + " bytes");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError(path.string() + ": trailing data after " + std::to_string(bytes) + " bytes");
  }
  return t;
}

}  // namespace classrecon
