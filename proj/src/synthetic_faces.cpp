#include "classrecon/synthetic_faces.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace classrecon {
namespace {

struct Identity {
  double face_w, face_h, skin;
  double hair_dark, hairline;
  int hair_style;
  double eye_dx, eye_y, eye_r, iris_dark;
  double brow_gap, brow_slant, brow_thick;
  double nose_len, nose_w;
  double mouth_y, mouth_w, mouth_curve, lip_dark;
  bool glasses, beard;
};

struct View {
  double dx, dy, scale, rot;
  double light_u, light_v;
  double background, eye_open, smile;
};

class Draw {
 public:
  explicit Draw(uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  double gauss(double sd) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  int pick(int n) { return static_cast<int>(uniform(0.0, static_cast<double>(n))) % n; }

 private:
  std::mt19937_64 rng_;
};

Identity draw_identity(Draw& d) {
  Identity id{};
  id.face_w = d.uniform(0.50, 0.68);
  id.face_h = d.uniform(0.68, 0.86);
  id.skin = d.uniform(0.50, 0.85);
  id.hair_dark = d.uniform(0.03, 0.40);
  id.hairline = d.uniform(-0.62, -0.28);
  id.hair_style = d.pick(4);
  id.eye_dx = d.uniform(0.20, 0.36);
  id.eye_y = d.uniform(-0.22, -0.04);
  id.eye_r = d.uniform(0.055, 0.11);
  id.iris_dark = d.uniform(0.05, 0.45);
  id.brow_gap = d.uniform(0.08, 0.17);
  id.brow_slant = d.uniform(-0.35, 0.35);
  id.brow_thick = d.uniform(0.018, 0.05);
  id.nose_len = d.uniform(0.12, 0.30);
  id.nose_w = d.uniform(0.05, 0.13);
  id.mouth_y = d.uniform(0.30, 0.50);
  id.mouth_w = d.uniform(0.13, 0.30);
  id.mouth_curve = d.uniform(-0.08, 0.12);
  id.lip_dark = d.uniform(0.15, 0.45);
  id.glasses = d.chance(0.25);
  id.beard = d.chance(0.2);
  return id;
}

View draw_view(Draw& d) {
  View v{};
  v.dx = d.uniform(-0.06, 0.06);
  v.dy = d.uniform(-0.06, 0.06);
  v.scale = d.uniform(0.94, 1.06);
  v.rot = d.uniform(-0.10, 0.10);
  v.light_u = d.uniform(-0.18, 0.18);
  v.light_v = d.uniform(-0.10, 0.10);
  v.background = d.uniform(0.08, 0.28);
  v.eye_open = d.uniform(0.65, 1.0);
  v.smile = d.uniform(-0.05, 0.05);
  return v;
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// 1 inside (signed distance < 0), 0 outside, with an antialiased rim.
double fill(double signed_dist, double aa) { return 1.0 - smoothstep(-aa, aa, signed_dist); }

double segment_distance(double pu, double pv, double au, double av, double bu, double bv) {
  const double du = bu - au, dv = bv - av;
  const double t = std::clamp(((pu - au) * du + (pv - av) * dv) / (du * du + dv * dv), 0.0, 1.0);
  return std::hypot(pu - (au + t * du), pv - (av + t * dv));
}

double mix(double a, double b, double w) { return a + (b - a) * w; }

double shade(const Identity& id, const View& view, double u, double v, double aa) {
  double out = view.background;

  // Hair mass behind and around the head.
  const double head = std::hypot(u / (id.face_w * 1.12), (v + 0.04) / (id.face_h * 1.08));
  double hair = fill(head - 1.0, aa) * fill(v - (id.hairline + 0.15), aa * 3);
  if (id.hair_style == 1) {  // long, falling past the cheeks
    hair = std::max(hair, fill(std::abs(u) - id.face_w * 1.18, aa) *
                              fill(id.face_w * 0.78 - std::abs(u), aa) * fill(v - 0.55, aa));
  } else if (id.hair_style == 2) {  // receding
    hair *= fill(v - (id.hairline - 0.08), aa);
  } else if (id.hair_style == 3) {  // fringe with a side part
    hair = std::max(hair, fill(head - 1.0, aa) * fill(v - (id.hairline + 0.22 - 0.15 * u), aa));
  }
  out = mix(out, id.hair_dark, hair);

  const double e = std::hypot(u / id.face_w, v / id.face_h);
  const double face = fill(e - 1.0, aa) * (1.0 - hair * fill(v - id.hairline, aa));
  const double skin = id.skin * (1.0 - 0.18 * e * e);
  out = mix(out, skin, face);

  if (id.beard) {
    const double beard = fill(e - 1.0, aa) * smoothstep(id.mouth_y - 0.18, id.mouth_y - 0.05, v);
    out = mix(out, id.hair_dark + 0.1, beard * 0.8);
  }

  for (double side : {-1.0, 1.0}) {
    const double cu = side * id.eye_dx;
    const double cv = id.eye_y;
    const double rx = id.eye_r * 1.5;
    const double ry = id.eye_r * view.eye_open;
    const double eye = std::hypot((u - cu) / rx, (v - cv) / ry);
    out = mix(out, 0.88, fill(eye - 1.0, aa / rx));
    const double iris = std::hypot(u - cu, v - cv) / (id.eye_r * 0.62);
    out = mix(out, id.iris_dark, fill(iris - 1.0, aa / id.eye_r) * fill(eye - 1.0, aa / rx));

    const double bv = cv - id.brow_gap;
    const double half = id.eye_r * 1.7;
    const double slope = side * id.brow_slant * half;
    const double brow = segment_distance(u, v, cu - half, bv + slope, cu + half, bv - slope);
    out = mix(out, id.hair_dark + 0.05, fill(brow - id.brow_thick, aa));

    if (id.glasses) {
      const double ring = std::abs(std::hypot(u - cu, v - cv) - id.eye_r * 2.1);
      out = mix(out, 0.08, fill(ring - 0.014, aa));
    }
  }
  if (id.glasses) {
    const double bridge = segment_distance(u, v, -id.eye_dx + id.eye_r * 2.1, id.eye_y,
                                           id.eye_dx - id.eye_r * 2.1, id.eye_y);
    out = mix(out, 0.08, fill(bridge - 0.012, aa));
  }

  const double nose_top = id.eye_y + 0.06;
  const double nose_bottom = nose_top + id.nose_len;
  const double ridge = segment_distance(u, v, 0.02, nose_top, 0.03, nose_bottom);
  out = mix(out, skin * 0.78, fill(ridge - 0.018, aa) * 0.7);
  for (double side : {-1.0, 1.0}) {
    const double nostril = std::hypot((u - side * id.nose_w * 0.5) / 0.03, (v - nose_bottom) / 0.018);
    out = mix(out, skin * 0.45, fill(nostril - 1.0, aa * 10));
  }

  const double curve = id.mouth_curve + view.smile;
  if (std::abs(u) < id.mouth_w + 0.03) {
    const double x = std::clamp(u / id.mouth_w, -1.0, 1.0);
    const double centre = id.mouth_y - curve * (1.0 - x * x);
    const double lip = std::abs(v - centre) - 0.022 * (1.0 - 0.6 * x * x);
    out = mix(out, id.lip_dark, fill(lip, aa) * fill(std::abs(u) - id.mouth_w, aa));
  }

  return out * (1.0 + view.light_u * u + view.light_v * v);
}

}  // namespace

FaceDataset make_synthetic_faces(const SyntheticFaceOptions& options) {
  Draw identity_draw(options.seed);
  std::vector<Identity> identities;
  for (int64_t k = 0; k < options.classes; ++k) identities.push_back(draw_identity(identity_draw));

  const int64_t side = options.side;
  const int64_t n = options.classes * options.per_class;
  FaceDataset ds;
  ds.num_classes = options.classes;
  ds.images = torch::empty({n, 1, side, side}, torch::kFloat32);
  float* dst = ds.images.data_ptr<float>();
  const double aa = 1.5 / static_cast<double>(side);

  for (int64_t k = 0; k < options.classes; ++k) {
    for (int64_t i = 0; i < options.per_class; ++i) {
      Draw d(options.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(k * options.per_class + i + 1)));
      const View view = draw_view(d);
      const double c = std::cos(view.rot), s = std::sin(view.rot);
      for (int64_t y = 0; y < side; ++y) {
        for (int64_t x = 0; x < side; ++x) {
          const double px = (2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(side) - 1.0 - view.dx) / view.scale;
          const double py = (2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(side) - 1.0 - view.dy) / view.scale;
          const double u = c * px + s * py;
          const double v = -s * px + c * py;
          double value = shade(identities[static_cast<size_t>(k)], view, u, v, aa) + d.gauss(options.pixel_noise);
          value = std::round(std::clamp(value, 0.0, 1.0) * 255.0) / 255.0;
          *dst++ = normalize_pixel(static_cast<float>(value));
        }
      }
      ds.labels.push_back(k);
    }
  }
  return ds;
}

}  // namespace classrecon
