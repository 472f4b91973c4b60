#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tinybit/data.hpp"
#include "tinybit/prng.hpp"
#include "tinybit/tensor.hpp"

namespace tinybit {

/// Synthetic labeled-image tasks, written to disk as the standard
/// directory-per-class PPM layout. "shapes-4class" (cross/disk/square/
/// triangle) is the upstream stand-in; "ring-vs-disk-2class" is the
/// downstream binary task. Shape color, size, and position are uninformative
/// by construction; only geometry separates the classes.
struct SynthConfig {
  std::string task = "ring-vs-disk-2class";
  int train_count = 800;
  int val_count = 200;
  int image_size = 32;
  double class_balance = 0.5;  // fraction of class index 1 (binary tasks)
  std::uint64_t seed = 7;

  void validate() const {
    if (task != "ring-vs-disk-2class" && task != "shapes-4class")
      throw ConfigError("synth: unknown task '" + task + "'");
    if (train_count < 1 || val_count < 0)
      throw ConfigError("synth: need train_count >= 1, val_count >= 0");
    if (image_size < 16) throw ConfigError("synth: image_size must be >= 16");
    if (class_balance <= 0.0 || class_balance >= 1.0)
      throw ConfigError("synth: class_balance must be inside (0,1)");
  }
};

namespace detail {

// Soft-edged coverage from a signed distance (negative = inside).
inline float coverage(float signed_dist, float edge = 0.8f) {
  return std::clamp(0.5f - signed_dist / edge, 0.0f, 1.0f);
}

struct Palette {
  float bg[3];
  float fg[3];
  float noise;
};

inline Palette draw_palette(Prng& rng) {
  Palette p{};
  const float base = rng.uniform(0.05f, 0.28f);
  for (float& c : p.bg) c = std::clamp(base + rng.uniform(-0.04f, 0.04f), 0.0f, 1.0f);
  for (float& c : p.fg) c = rng.uniform(0.4f, 0.95f);
  p.noise = rng.uniform(0.15f, 0.3f);
  return p;
}

/// Render alpha(x,y) over the canvas and composite fg over bg, then noise.
template <typename AlphaFn>
Tensor render(int size, const Palette& pal, Prng& rng, AlphaFn&& alpha) {
  Tensor img({3, size, size});
  const std::int64_t plane = static_cast<std::int64_t>(size) * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const float a = alpha(static_cast<float>(x) + 0.5f,
                            static_cast<float>(y) + 0.5f);
      for (int c = 0; c < 3; ++c)
        img[c * plane + y * size + x] = pal.bg[c] * (1.0f - a) + pal.fg[c] * a;
    }
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = std::clamp(img[i] + rng.uniform(-pal.noise, pal.noise), 0.0f, 1.0f);
  return img;
}

struct Placement {
  float cx, cy, r;
};

inline Placement draw_placement(int size, Prng& rng) {
  const float s = static_cast<float>(size);
  Placement p{};
  p.cx = s * 0.5f + rng.uniform(-0.12f, 0.12f) * s;
  p.cy = s * 0.5f + rng.uniform(-0.12f, 0.12f) * s;
  p.r = rng.uniform(0.2f, 0.33f) * s;
  return p;
}

inline Tensor render_disk(int size, Prng& rng) {
  const Placement p = draw_placement(size, rng);
  const Palette pal = draw_palette(rng);
  return render(size, pal, rng, [&](float x, float y) {
    const float d = std::hypot(x - p.cx, y - p.cy) - p.r;
    return coverage(d);
  });
}

inline Tensor render_ring(int size, Prng& rng) {
  const Placement p = draw_placement(size, rng);
  const float r_in = p.r * rng.uniform(0.35f, 0.6f);
  const Palette pal = draw_palette(rng);
  return render(size, pal, rng, [&](float x, float y) {
    const float d = std::hypot(x - p.cx, y - p.cy);
    return coverage(d - p.r) * (1.0f - coverage(d - r_in));
  });
}

inline Tensor render_square(int size, Prng& rng) {
  const Placement p = draw_placement(size, rng);
  const float half = p.r * 0.85f;
  const Palette pal = draw_palette(rng);
  return render(size, pal, rng, [&](float x, float y) {
    const float d =
        std::max(std::abs(x - p.cx), std::abs(y - p.cy)) - half;
    return coverage(d);
  });
}

inline Tensor render_triangle(int size, Prng& rng) {
  const Placement p = draw_placement(size, rng);
  const Palette pal = draw_palette(rng);
  // Upward triangle as the max of three half-plane distances.
  const float h = p.r;
  const float ax = p.cx, ay = p.cy - h;
  const float bx = p.cx - h, by = p.cy + h * 0.7f;
  const float cx = p.cx + h, cy = p.cy + h * 0.7f;
  auto edge = [](float px, float py, float x0, float y0, float x1, float y1) {
    // signed distance to the line through (x0,y0)-(x1,y1); positive outside
    const float nx = y1 - y0, ny = x0 - x1;
    const float len = std::hypot(nx, ny);
    return ((px - x0) * nx + (py - y0) * ny) / len;
  };
  return render(size, pal, rng, [&](float x, float y) {
    const float d = std::max({edge(x, y, ax, ay, bx, by),
                              edge(x, y, bx, by, cx, cy),
                              edge(x, y, cx, cy, ax, ay)});
    return coverage(d);
  });
}

inline Tensor render_cross(int size, Prng& rng) {
  const Placement p = draw_placement(size, rng);
  const float arm = p.r;
  const float bar = p.r * rng.uniform(0.28f, 0.4f);
  const Palette pal = draw_palette(rng);
  auto bar_dist = [](float dx, float dy, float half_l, float half_w) {
    return std::max(std::abs(dx) - half_l, std::abs(dy) - half_w);
  };
  return render(size, pal, rng, [&](float x, float y) {
    const float dh = bar_dist(x - p.cx, y - p.cy, arm, bar);
    const float dv = bar_dist(y - p.cy, x - p.cx, arm, bar);
    return std::max(coverage(dh), coverage(dv));
  });
}

inline Tensor render_class(const std::string& task, int label, int size,
                           Prng& rng) {
  if (task == "ring-vs-disk-2class")
    return label == 0 ? render_disk(size, rng) : render_ring(size, rng);
  // shapes-4class, sorted class order: cross, disk, square, triangle
  switch (label) {
    case 0: return render_cross(size, rng);
    case 1: return render_disk(size, rng);
    case 2: return render_square(size, rng);
    default: return render_triangle(size, rng);
  }
}

}  // namespace detail

inline std::vector<std::string> synth_class_names(const std::string& task) {
  if (task == "ring-vs-disk-2class") return {"disk", "ring"};
  return {"cross", "disk", "square", "triangle"};
}

/// Writes <out_root>/train/<class>/img_NNNNN.ppm and likewise under val/.
/// Identical configs produce byte-identical trees.
inline void generate_synth_dataset(const std::string& out_root,
                                   const SynthConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  const std::vector<std::string> classes = synth_class_names(cfg.task);

  const char* split_names[2] = {"train", "val"};
  const int counts[2] = {cfg.train_count, cfg.val_count};
  for (int split = 0; split < 2; ++split) {
    if (counts[split] == 0) continue;
    Prng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(split)));
    for (const std::string& cls : classes) {
      std::error_code ec;
      fs::create_directories(fs::path(out_root) / split_names[split] / cls, ec);
      if (ec)
        throw IoError("synth: cannot create directories under " + out_root);
    }
    for (int i = 0; i < counts[split]; ++i) {
      int label;
      if (classes.size() == 2) {
        // Leading block is class 0; the tail is class 1 per class_balance.
        const int n0 = counts[split] -
                       static_cast<int>(std::lround(counts[split] * cfg.class_balance));
        label = i < n0 ? 0 : 1;
      } else {
        label = i % static_cast<int>(classes.size());
      }
      Tensor img = detail::render_class(cfg.task, label, cfg.image_size, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
      const fs::path path = fs::path(out_root) / split_names[split] /
                            classes[static_cast<std::size_t>(label)] / name;
      save_ppm(path.string(), img);
    }
  }
}

}  // namespace tinybit
