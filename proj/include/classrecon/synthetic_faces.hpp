#pragma once

#include <cstdint>

#include "classrecon/data.hpp"

namespace classrecon {

/// Parametric stand-in for a small face-identification corpus: every class
/// is one procedurally drawn identity (head shape, hair, eyes, brows, nose,
/// mouth, accessories) and every image a jittered view of it (pose, scale,
/// lighting, expression, sensor noise). Pixels are quantized to 8 bits so the
/// PGM and packed layouts hold identical data.
struct SyntheticFaceOptions {
  int64_t classes = kCanonicalClasses;
  int64_t per_class = kImagesPerClass;
  int64_t side = kCanonicalSide;
  uint64_t seed = 2023;
  double pixel_noise = 0.02;
};

FaceDataset make_synthetic_faces(const SyntheticFaceOptions& options = {});

}  // namespace classrecon
