#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ssdg/data.hpp"

namespace ssdg {

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::channel_shift: return "channel_shift";
    case ShiftKind::additive_style: return "additive_style";
  }
  return "rotation";
}

ShiftKind parse_shift_kind(const std::string& text) {
  if (text == "rotation") return ShiftKind::rotation;
  if (text == "channel_shift") return ShiftKind::channel_shift;
  if (text == "additive_style") return ShiftKind::additive_style;
  throw ConfigError("shift_kind: expected rotation, channel_shift or additive_style, got '" + text + "'");
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("synth." + field + ": " + why); };
  if (num_domains < 3) fail("num_domains", "must be >= 3");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
  if (samples_per_class_per_domain < 1) fail("samples_per_class_per_domain", "must be >= 1");
  if (!(shift_magnitude >= 0.0) || !std::isfinite(shift_magnitude)) fail("shift_magnitude", "must be finite and >= 0");
  if (!(class_separation > 0.0) || !std::isfinite(class_separation)) fail("class_separation", "must be finite and > 0");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std", "must be finite and >= 0");
  if (mode == Mode::vector && dim < 2) fail("dim", "must be >= 2");
  if (mode == Mode::image && image_side < 4) fail("image_side", "must be >= 4");
  if (mode == Mode::image && image_channels < 1) fail("image_channels", "must be >= 1");
}

namespace {

Vector random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

// Rotation by `angle` in every coordinate plane (0,1), (2,3), ...
Vector rotate_planes(const Vector& x, double angle) {
  Vector out = x;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (Eigen::Index i = 0; i + 1 < x.size(); i += 2) {
    out(i) = c * x(i) - s * x(i + 1);
    out(i + 1) = s * x(i) + c * x(i + 1);
  }
  return out;
}

RawDataset vector_dataset(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::vector<Vector> means;
  for (int c = 0; c < spec.num_classes; ++c) means.push_back(spec.class_separation * random_unit(spec.dim, rng));
  const Vector drift = random_unit(spec.dim, rng);
  std::vector<Vector> styles;
  for (int d = 0; d < spec.num_domains; ++d) styles.push_back(random_unit(spec.dim, rng));

  RawDataset raw;
  raw.layout = {InputLayout::Kind::vector, spec.dim, {}};
  std::normal_distribution<double> normal(0.0, spec.noise_std);
  for (int d = 0; d < spec.num_domains; ++d) {
    const std::string name = "d" + std::to_string(d);
    raw.domain_names.push_back(name);
    auto& items = raw.domains[name];
    for (int i = 0; i < spec.samples_per_class_per_domain; ++i) {
      for (int c = 0; c < spec.num_classes; ++c) {
        Vector x = means[static_cast<std::size_t>(c)];
        for (int j = 0; j < spec.dim; ++j) x(j) += spec.noise_std > 0.0 ? normal(rng) : 0.0;
        switch (spec.shift_kind) {
          case ShiftKind::rotation: x = rotate_planes(x, d * spec.shift_magnitude); break;
          case ShiftKind::channel_shift: x += (d * spec.shift_magnitude) * drift; break;
          case ShiftKind::additive_style: x += spec.shift_magnitude * styles[static_cast<std::size_t>(d)]; break;
        }
        items.push_back({std::move(x), c});
      }
    }
  }
  return raw;
}

struct Blob {
  double cy, cx;
};

RawDataset image_dataset(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const int side = spec.image_side;
  const int channels = spec.image_channels;
  std::uniform_real_distribution<double> position(0.2 * side, 0.8 * side);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<Blob>> glyphs(static_cast<std::size_t>(spec.num_classes));
  std::vector<Vector> colors;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int b = 0; b < 3; ++b) glyphs[static_cast<std::size_t>(c)].push_back({position(rng), position(rng)});
    Vector color(channels);
    for (int k = 0; k < channels; ++k) color(k) = 0.5 + 0.5 * unit(rng);
    colors.push_back(color);
  }
  // Per-domain, per-channel gains and texture parameters.
  std::vector<Vector> gains;
  struct Texture {
    double fy, fx, phase;
  };
  std::vector<std::vector<Texture>> textures;
  for (int d = 0; d < spec.num_domains; ++d) {
    Vector g(channels);
    std::vector<Texture> t;
    for (int k = 0; k < channels; ++k) {
      g(k) = 2.0 * unit(rng) - 1.0;
      t.push_back({(0.5 + unit(rng)) * std::numbers::pi / 2.0, (0.5 + unit(rng)) * std::numbers::pi / 2.0,
                   2.0 * std::numbers::pi * unit(rng)});
    }
    gains.push_back(g);
    textures.push_back(t);
  }

  RawDataset raw;
  raw.layout.kind = InputLayout::Kind::image;
  raw.layout.image = {channels, side, side};
  const double sigma = side / 8.0;
  const double amplitude = 0.5 * spec.class_separation;
  std::normal_distribution<double> jitter(0.0, side / 20.0);
  std::normal_distribution<double> pixel_noise(0.0, 0.1 * spec.noise_std);
  const double center = (side - 1) / 2.0;

  for (int d = 0; d < spec.num_domains; ++d) {
    const std::string name = "d" + std::to_string(d);
    raw.domain_names.push_back(name);
    auto& items = raw.domains[name];
    const double angle = spec.shift_kind == ShiftKind::rotation ? d * spec.shift_magnitude : 0.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int i = 0; i < spec.samples_per_class_per_domain; ++i) {
      for (int c = 0; c < spec.num_classes; ++c) {
        std::vector<Blob> blobs = glyphs[static_cast<std::size_t>(c)];
        for (Blob& b : blobs) {
          b.cy += jitter(rng);
          b.cx += jitter(rng);
        }
        Vector x(raw.layout.size());
        for (int y = 0; y < side; ++y) {
          for (int xx = 0; xx < side; ++xx) {
            // Render the glyph in rotated coordinates so the whole image turns.
            const double ry = center + ca * (y - center) + sa * (xx - center);
            const double rx = center - sa * (y - center) + ca * (xx - center);
            double v = 0.0;
            for (const Blob& b : blobs) {
              const double dy = ry - b.cy, dx = rx - b.cx;
              v += std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            }
            v = amplitude * std::min(v, 1.0);
            for (int k = 0; k < channels; ++k) {
              double p = v * colors[static_cast<std::size_t>(c)](k);
              const std::size_t dk = static_cast<std::size_t>(d);
              if (spec.shift_kind == ShiftKind::channel_shift) {
                p *= 1.0 + d * spec.shift_magnitude * gains[dk](k);
              } else if (spec.shift_kind == ShiftKind::additive_style) {
                const Texture& t = textures[dk][static_cast<std::size_t>(k)];
                p += 0.5 * spec.shift_magnitude * (1.0 + std::sin(t.fy * y + t.fx * xx + t.phase));
              }
              if (spec.noise_std > 0.0) p += pixel_noise(rng);
              x((Eigen::Index{k} * side + y) * side + xx) = std::clamp(p, 0.0, 1.0);
            }
          }
        }
        items.push_back({std::move(x), c});
      }
    }
  }
  return raw;
}

}  // namespace

RawDataset generate_synthetic_raw(const SyntheticSpec& spec) {
  spec.validate();
  RawDataset raw = spec.mode == SyntheticSpec::Mode::vector ? vector_dataset(spec) : image_dataset(spec);
  for (int c = 0; c < spec.num_classes; ++c) raw.class_names.push_back("c" + std::to_string(c));
  return raw;
}

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
  const RawDataset raw = generate_synthetic_raw(spec);
  return make_bundle(raw, default_roles(raw));
}

}  // namespace ssdg
