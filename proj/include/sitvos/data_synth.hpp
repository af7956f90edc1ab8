#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sitvos/rng.hpp"
#include "sitvos/tensor.hpp"

namespace sitvos {

enum class SpriteKind { Disk, Rectangle, Triangle, Ring };

inline SpriteKind parse_sprite_kind(const std::string& s) {
  if (s == "disk") return SpriteKind::Disk;
  if (s == "rect") return SpriteKind::Rectangle;
  if (s == "triangle") return SpriteKind::Triangle;
  if (s == "ring") return SpriteKind::Ring;
  throw FormatError("unknown sprite kind '" + s + "'");
}

struct Sprite {
  SpriteKind kind = SpriteKind::Disk;
  double r = 0, g = 0, b = 0;  // base color in [0,1]
  double size = 10;            // support radius in pixels
  double cx = 0, cy = 0;       // base center in frame coordinates
  std::uint64_t texture_seed = 0;
};

// Local -> frame map: p = R(rot)·diag(scale)·Shear(shear)·l + (cx+dx, cy+dy).
struct AffineTransform {
  double rotation = 0;  // radians
  double scale = 1;
  double shear = 0;
  double dx = 0, dy = 0;

  void matrix(double m[4]) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    // R · S · Shear, with Shear = [[1, shear], [0, 1]]
    m[0] = scale * c;
    m[1] = scale * (c * shear - s);
    m[2] = scale * s;
    m[3] = scale * (s * shear + c);
  }

  double determinant() const {
    double m[4];
    matrix(m);
    return m[0] * m[3] - m[1] * m[2];
  }

  // Frame point relative to (cx+dx, cy+dy) back to local coordinates.
  void to_local(double cx, double cy, double px, double py, double& lx, double& ly) const {
    double m[4];
    matrix(m);
    const double det = m[0] * m[3] - m[1] * m[2];
    if (std::abs(det) < 1e-12) throw ContractError("affine transform is not invertible");
    const double ux = px - (cx + dx), uy = py - (cy + dy);
    lx = (m[3] * ux - m[1] * uy) / det;
    ly = (-m[2] * ux + m[0] * uy) / det;
  }
};

struct TransformRanges {
  double rot_lo = -0.5236, rot_hi = 0.5236;  // +/- 30 degrees
  double scale_lo = 0.5, scale_hi = 2.0;
  double shear_lo = -0.2, shear_hi = 0.2;
  double dx_lo = -12.8, dx_hi = 12.8;  // +/- 20% of a 64 px frame
  double dy_lo = -12.8, dy_hi = 12.8;

  static TransformRanges identity() {
    TransformRanges r;
    r.rot_lo = r.rot_hi = 0;
    r.scale_lo = r.scale_hi = 1;
    r.shear_lo = r.shear_hi = 0;
    r.dx_lo = r.dx_hi = 0;
    r.dy_lo = r.dy_hi = 0;
    return r;
  }
};

// Draw order is pinned (rotation, scale, shear, dx, dy) so sampled transforms
// are bit-reproducible from the seed.
inline AffineTransform sample_transform(Rng& rng, const TransformRanges& ranges) {
  const auto draw = [&rng](double lo, double hi) {
    if (lo > hi) throw ContractError("sample_transform: degenerate range");
    return lo == hi ? lo : rng.uniform(lo, hi);
  };
  AffineTransform t;
  t.rotation = draw(ranges.rot_lo, ranges.rot_hi);
  t.scale = draw(ranges.scale_lo, ranges.scale_hi);
  t.shear = draw(ranges.shear_lo, ranges.shear_hi);
  t.dx = draw(ranges.dx_lo, ranges.dx_hi);
  t.dy = draw(ranges.dy_lo, ranges.dy_hi);
  if (t.scale <= 0) throw ContractError("sample_transform: scale must be positive");
  return t;
}

template <typename T>
struct Clip {
  std::vector<Tensor<T>> frames;               // [3,h,w], values in [0,1]
  std::vector<std::map<int, Tensor<T>>> masks;  // per frame: object id -> [1,h,w]
  std::uint64_t seed = 0;
};

namespace detail {

// Cheap value-noise hash onto [0,1].
inline double hash01(std::uint64_t seed, std::int64_t x, std::int64_t y) {
  std::uint64_t h = seed;
  h ^= static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h ^= static_cast<std::uint64_t>(y) * 0x94d049bb133111ebull;
  h = (h ^ (h >> 27)) * 0x2545f4914f6cdd1dull;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline bool sprite_hit(const Sprite& sp, double lx, double ly) {
  const double r = sp.size;
  switch (sp.kind) {
    case SpriteKind::Disk:
      return lx * lx + ly * ly <= r * r;
    case SpriteKind::Rectangle:
      return std::abs(lx) <= r && std::abs(ly) <= 0.7 * r;
    case SpriteKind::Triangle: {
      // Vertices (0,-r), (-r, 0.8r), (r, 0.8r): inside iff below both edges
      // and above the base.
      if (ly > 0.8 * r || ly < -r) return false;
      const double half = r * (ly + r) / (1.8 * r);
      return std::abs(lx) <= half;
    }
    case SpriteKind::Ring: {
      const double d2 = lx * lx + ly * ly;
      return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
    }
  }
  return false;
}

}  // namespace detail

// Frame i = transformed procedural background with each sprite composited in
// listed order; a later sprite occludes earlier ones, and masks record only
// the visible pixels. Objects with no visible pixel are dropped from that
// frame's mask map.
template <typename T>
Clip<T> render_clip(std::uint64_t bg_seed, const std::vector<Sprite>& sprites,
                    const std::vector<AffineTransform>& bg_transforms,
                    const std::vector<std::vector<AffineTransform>>& sprite_transforms,
                    std::size_t h, std::size_t w) {
  if (h % 16 != 0 || w % 16 != 0)
    throw DimensionError("render_clip: frame dims must be divisible by 16");
  if (bg_transforms.size() != sprite_transforms.size())
    throw ContractError("render_clip: background and sprite transform counts differ");
  for (const auto& per_frame : sprite_transforms)
    if (per_frame.size() != sprites.size())
      throw ContractError("render_clip: one transform per sprite per frame required");

  Clip<T> clip;
  clip.seed = bg_seed;
  const double cx0 = static_cast<double>(w) / 2.0, cy0 = static_cast<double>(h) / 2.0;
  for (std::size_t f = 0; f < bg_transforms.size(); ++f) {
    Tensor<T> frame({3, h, w});
    std::map<int, Tensor<T>> masks;
    std::vector<int> owner(h * w, 0);  // later sprite wins the overlap

    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        // Background: smooth gradient plus coarse value noise, sampled through
        // the frame's background transform.
        double bx, by;
        bg_transforms[f].to_local(cx0, cy0, px, py, bx, by);
        const double grad = 0.5 + 0.25 * (bx / w) + 0.25 * (by / h);
        const double noise = detail::hash01(bg_seed, static_cast<std::int64_t>(std::floor(bx / 8.0)),
                                            static_cast<std::int64_t>(std::floor(by / 8.0)));
        double rgb[3] = {0.55 * grad + 0.15 * noise, 0.5 * grad + 0.2 * noise,
                         0.45 * grad + 0.15 * noise};

        for (std::size_t s = 0; s < sprites.size(); ++s) {
          const Sprite& sp = sprites[s];
          double lx, ly;
          sprite_transforms[f][s].to_local(sp.cx, sp.cy, px, py, lx, ly);
          if (!detail::sprite_hit(sp, lx, ly)) continue;
          const double tex =
              0.85 + 0.3 * detail::hash01(sp.texture_seed, static_cast<std::int64_t>(std::floor(lx / 3.0)),
                                          static_cast<std::int64_t>(std::floor(ly / 3.0)));
          rgb[0] = sp.r * tex;
          rgb[1] = sp.g * tex;
          rgb[2] = sp.b * tex;
          owner[y * w + x] = static_cast<int>(s) + 1;
        }
        for (int c = 0; c < 3; ++c)
          frame(static_cast<std::size_t>(c), y, x) =
              static_cast<T>(std::min(std::max(rgb[c], 0.0), 1.0));
      }
    }
    for (std::size_t s = 0; s < sprites.size(); ++s) {
      const int id = static_cast<int>(s) + 1;
      Tensor<T> m({1, h, w});
      bool any = false;
      for (std::size_t i = 0; i < h * w; ++i)
        if (owner[i] == id) {
          m[i] = T(1);
          any = true;
        }
      if (any) masks.emplace(id, std::move(m));
    }
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(masks));
  }
  return clip;
}

struct SequenceConfig {
  std::size_t length = 3;
  std::size_t num_objects = 1;
  std::size_t h = 64, w = 64;
  // Per-frame random-walk step scales: distant frames drift further apart.
  double walk_rot = 0.05;
  double walk_scale = 0.02;
  double walk_shear = 0.01;
  double walk_translate = 2.0;
  double bg_walk_translate = 0.8;
};

// Smooth per-component random walks give temporally coherent motion.
template <typename T>
Clip<T> make_sequence(Rng& rng, const SequenceConfig& cfg) {
  if (cfg.length < 1) throw ContractError("make_sequence: length must be >= 1");
  if (cfg.num_objects < 1) throw ContractError("make_sequence: need at least one object");

  const double kColors[4][3] = {
      {0.9, 0.2, 0.15}, {0.15, 0.45, 0.9}, {0.95, 0.8, 0.1}, {0.2, 0.8, 0.35}};
  std::vector<Sprite> sprites;
  for (std::size_t i = 0; i < cfg.num_objects; ++i) {
    Sprite sp;
    sp.kind = static_cast<SpriteKind>(rng.below(4));
    const double* c = kColors[i % 4];
    sp.r = c[0];
    sp.g = c[1];
    sp.b = c[2];
    sp.size = rng.uniform(0.12, 0.2) * static_cast<double>(std::min(cfg.h, cfg.w));
    sp.cx = rng.uniform(0.25, 0.75) * static_cast<double>(cfg.w);
    sp.cy = rng.uniform(0.25, 0.75) * static_cast<double>(cfg.h);
    sp.texture_seed = rng.next_u64();
    sprites.push_back(sp);
  }

  std::vector<AffineTransform> bg(cfg.length);
  std::vector<std::vector<AffineTransform>> per_sprite(cfg.length,
                                                       std::vector<AffineTransform>(sprites.size()));
  AffineTransform bg_state;
  std::vector<AffineTransform> states(sprites.size());
  for (std::size_t f = 0; f < cfg.length; ++f) {
    if (f > 0) {
      bg_state.dx += rng.uniform(-cfg.bg_walk_translate, cfg.bg_walk_translate);
      bg_state.dy += rng.uniform(-cfg.bg_walk_translate, cfg.bg_walk_translate);
      for (auto& st : states) {
        st.rotation += rng.uniform(-cfg.walk_rot, cfg.walk_rot);
        st.scale = std::min(std::max(st.scale + rng.uniform(-cfg.walk_scale, cfg.walk_scale), 0.5), 2.0);
        st.shear = std::min(std::max(st.shear + rng.uniform(-cfg.walk_shear, cfg.walk_shear), -0.3), 0.3);
        st.dx += rng.uniform(-cfg.walk_translate, cfg.walk_translate);
        st.dy += rng.uniform(-cfg.walk_translate, cfg.walk_translate);
      }
    }
    bg[f] = bg_state;
    per_sprite[f] = states;
  }
  Clip<T> clip = render_clip<T>(rng.next_u64(), sprites, bg, per_sprite, cfg.h, cfg.w);
  return clip;
}

// Temporally ordered triple (i, i+d, i+2d) with d drawn uniformly from
// [0, interval_max] (shrunk when the sequence is too short).
inline std::array<std::size_t, 3> sample_triple(Rng& rng, std::size_t length, int interval_max) {
  if (length < 1) throw ContractError("sample_triple: empty sequence");
  if (interval_max < 0) throw ContractError("sample_triple: negative interval");
  const std::size_t d_cap = std::min<std::size_t>(static_cast<std::size_t>(interval_max),
                                                  (length - 1) / 2);
  const std::size_t d = d_cap == 0 ? 0 : rng.below(d_cap + 1);
  const std::size_t i_max = length - 1 - 2 * d;
  const std::size_t i = i_max == 0 ? 0 : rng.below(i_max + 1);
  return {i, i + d, i + 2 * d};
}

}  // namespace sitvos
