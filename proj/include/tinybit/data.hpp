#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tinybit/prng.hpp"
#include "tinybit/tensor.hpp"

namespace tinybit {

// ---------------------------------------------------------------------------
// PPM (binary P6) image I/O
// ---------------------------------------------------------------------------

namespace detail {

/// Skips PPM whitespace and '#' comments, tracking the byte offset for error
/// messages.
inline int ppm_token(std::istream& in, std::size_t& offset, std::string& tok,
                     const std::string& path) {
  tok.clear();
  int ch = in.get();
  while (ch != EOF) {
    ++offset;
    if (ch == '#') {
      while (ch != EOF && ch != '\n') {
        ch = in.get();
        ++offset;
      }
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF)
    throw ParseError("ppm: unexpected end of header in " + path + " at byte " +
                     std::to_string(offset));
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
    ++offset;
  }
  return ch;  // the whitespace (or EOF) terminating the token
}

}  // namespace detail

/// Decode a binary PPM ("P6", maxval 255) into a [3,H,W] tensor scaled to
/// [0,1]. Malformed files raise ParseError naming the byte offset.
inline Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ppm: cannot open " + path);
  std::size_t offset = 0;
  std::string tok;

  detail::ppm_token(in, offset, tok, path);
  if (tok != "P6")
    throw ParseError("ppm: bad magic '" + tok + "' in " + path +
                     " at byte 0 (want P6)");
  auto read_int = [&](const char* what) {
    detail::ppm_token(in, offset, tok, path);
    try {
      std::size_t pos = 0;
      const long v = std::stol(tok, &pos);
      if (pos != tok.size() || v < 1) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw ParseError("ppm: bad " + std::string(what) + " '" + tok + "' in " +
                       path + " at byte " + std::to_string(offset));
    }
  };
  const long w = read_int("width");
  const long h = read_int("height");
  const long maxval = read_int("maxval");
  if (maxval != 255)
    throw ParseError("ppm: unsupported maxval " + std::to_string(maxval) +
                     " in " + path + " (want 255)");

  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw ParseError("ppm: truncated pixel data in " + path + " at byte " +
                     std::to_string(offset + static_cast<std::size_t>(in.gcount())));

  Tensor t({3, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      t[c * plane + i] = bytes[static_cast<std::size_t>(i * 3 + c)] / 255.0f;
  return t;
}

/// Encode a [3,H,W] tensor in [0,1] as binary PPM; values are rounded to the
/// nearest byte.
inline void save_ppm(const std::string& path, const Tensor& pixels) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3)
    throw ShapeError("ppm: expected [3,H,W] pixels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("ppm: cannot write " + path);
  const std::int64_t h = pixels.dim(1), w = pixels.dim(2);
  out << "P6\n" << w << " " << h << "\n255\n";
  const std::int64_t plane = h * w;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(plane) * 3);
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(pixels[c * plane + i], 0.0f, 1.0f);
      bytes[static_cast<std::size_t>(i * 3 + c)] =
          static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("ppm: short write to " + path);
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct LabeledImage {
  Tensor pixels;  // [3,H,W] in [0,1]
  int label = 0;
  std::string source_path;
};

enum class Split { kTrain, kValidation, kTest };

struct Dataset {
  std::vector<LabeledImage> items;
  std::vector<std::string> class_names;
  Split split = Split::kTrain;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Load a directory-per-class tree: <root>/<class_name>/*.ppm. Class names
/// are the sorted subdirectory names; items are sorted by path so the layout
/// alone fixes the dataset order.
inline Dataset load_dataset_dir(const std::string& root,
                                Split split = Split::kTrain) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw DatasetError("dataset: root " + root + " is not a directory");

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw DatasetError("dataset: " + root + " contains no class directories");

  Dataset ds;
  ds.split = split;
  ds.class_names = class_dirs;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<std::string> files;
    for (const auto& entry :
         fs::directory_iterator(fs::path(root) / class_dirs[label]))
      if (entry.is_regular_file() && entry.path().extension() == ".ppm")
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw DatasetError("dataset: class directory " + class_dirs[label] +
                         " under " + root + " has no .ppm images");
    for (const std::string& f : files) {
      LabeledImage item;
      try {
        item.pixels = load_ppm(f);
      } catch (const Error& e) {
        throw DatasetError("dataset: failed to read " + f + ": " + e.what());
      }
      item.label = static_cast<int>(label);
      item.source_path = f;
      ds.items.push_back(std::move(item));
    }
  }
  std::sort(ds.items.begin(), ds.items.end(),
            [](const LabeledImage& a, const LabeledImage& b) {
              return a.source_path < b.source_path;
            });
  return ds;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Bilinear resize of [3,H,W] to target x target. Samples at
/// (i+0.5)*scale - 0.5 (the align-corners=false convention), clamped to the
/// source extent. A same-size square input is returned bitwise unchanged.
inline Tensor resize_bilinear(const Tensor& pixels, int target) {
  if (pixels.rank() != 3) throw ShapeError("resize: expected [C,H,W]");
  if (target < 1) throw RangeError("resize: target must be >= 1");
  const std::int64_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  if (h == target && w == target) return pixels;

  Tensor out({c, target, target});
  const double sy = static_cast<double>(h) / target;
  const double sx = static_cast<double>(w) / target;
  for (std::int64_t oy = 0; oy < target; ++oy) {
    const double fy = std::max(0.0, (oy + 0.5) * sy - 0.5);
    const std::int64_t y0 = std::min<std::int64_t>(static_cast<std::int64_t>(fy), h - 1);
    const std::int64_t y1 = std::min<std::int64_t>(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::int64_t ox = 0; ox < target; ++ox) {
      const double fx = std::max(0.0, (ox + 0.5) * sx - 0.5);
      const std::int64_t x0 = std::min<std::int64_t>(static_cast<std::int64_t>(fx), w - 1);
      const std::int64_t x1 = std::min<std::int64_t>(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const float* p = pixels.data() + ci * h * w;
        const double top = p[y0 * w + x0] * (1.0 - wx) + p[y0 * w + x1] * wx;
        const double bot = p[y1 * w + x0] * (1.0 - wx) + p[y1 * w + x1] * wx;
        out[(ci * target + oy) * target + ox] =
            static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

inline Tensor crop(const Tensor& pixels, std::int64_t top, std::int64_t left,
                   int size) {
  const std::int64_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  if (top < 0 || left < 0 || top + size > h || left + size > w)
    throw ShapeError("crop: window exceeds image bounds");
  Tensor out({c, size, size});
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t y = 0; y < size; ++y)
      std::copy_n(pixels.data() + (ci * h + top + y) * w + left, size,
                  out.data() + (ci * size + y) * size);
  return out;
}

inline Tensor center_crop(const Tensor& pixels, int size) {
  return crop(pixels, (pixels.dim(1) - size) / 2, (pixels.dim(2) - size) / 2,
              size);
}

/// Uniform crop offsets in [0, S-size]; both offsets are always drawn, even
/// for a full-size crop, so the stream position does not depend on the data.
inline Tensor random_crop(const Tensor& pixels, int size, Prng& rng) {
  const std::int64_t h = pixels.dim(1), w = pixels.dim(2);
  if (size > h || size > w)
    throw ShapeError("random_crop: crop " + std::to_string(size) +
                     " larger than input " + Tensor::shape_string(pixels.shape()));
  const auto top = static_cast<std::int64_t>(
      rng.below(static_cast<std::uint32_t>(h - size + 1)));
  const auto left = static_cast<std::int64_t>(
      rng.below(static_cast<std::uint32_t>(w - size + 1)));
  return crop(pixels, top, left, size);
}

inline Tensor hflip(const Tensor& pixels) {
  const std::int64_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  Tensor out(pixels.shape());
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t y = 0; y < h; ++y) {
      const float* src = pixels.data() + (ci * h + y) * w;
      float* dst = out.data() + (ci * h + y) * w;
      for (std::int64_t x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
  return out;
}

/// Mirrors the W axis with the given probability; always consumes one draw.
inline Tensor random_hflip(const Tensor& pixels, float prob, Prng& rng) {
  const bool flip = rng.next_float() < prob;
  return flip ? hflip(pixels) : pixels;
}

/// Training-time preprocessing: square resize, random crop, random mirror.
/// With enabled=false the pipeline is the deterministic evaluation path
/// (resize + center crop, no PRNG draws).
struct AugmentSpec {
  int resize_to = 0;
  int crop_to = 0;
  float hflip_prob = 0.5f;
  bool enabled = true;

  void validate() const {
    if (resize_to < 1 || crop_to < 1)
      throw ConfigError("augment: resize_to and crop_to must be >= 1");
    if (crop_to > resize_to)
      throw ConfigError("augment: crop_to must not exceed resize_to");
  }
};

inline Tensor augment_image(const Tensor& pixels, const AugmentSpec& spec,
                            Prng& rng) {
  spec.validate();
  Tensor t = resize_bilinear(pixels, spec.resize_to);
  if (!spec.enabled) return center_crop(t, spec.crop_to);
  t = random_crop(t, spec.crop_to, rng);
  return random_hflip(t, spec.hflip_prob, rng);
}

// ---------------------------------------------------------------------------
// MixUp
// ---------------------------------------------------------------------------

inline Tensor one_hot(const std::vector<int>& labels, int num_classes) {
  Tensor t = Tensor::zeros({static_cast<std::int64_t>(labels.size()), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw RangeError("one_hot: label out of range");
    t[static_cast<std::int64_t>(i) * num_classes + labels[i]] = 1.0f;
  }
  return t;
}

struct MixupResult {
  Tensor x;
  Tensor y;  // soft labels [B,K]
  double lambda = 1.0;
};

/// The deterministic core: mix a batch with a fixed coefficient and pairing
/// permutation. x' = L*x + (1-L)*x[perm], labels likewise.
inline MixupResult mixup_apply(const Tensor& x, const Tensor& y_onehot,
                               double lambda, const std::vector<int>& perm) {
  if (x.dim(0) != y_onehot.dim(0) ||
      x.dim(0) != static_cast<std::int64_t>(perm.size()))
    throw ShapeError("mixup: batch sizes disagree");
  MixupResult out;
  out.lambda = lambda;
  out.x = Tensor(x.shape());
  out.y = Tensor(y_onehot.shape());
  const std::int64_t b = x.dim(0);
  const std::int64_t xs = x.numel() / b;
  const std::int64_t ys = y_onehot.numel() / b;
  const float l = static_cast<float>(lambda);
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int64_t j = perm[static_cast<std::size_t>(i)];
    for (std::int64_t p = 0; p < xs; ++p)
      out.x[i * xs + p] = l * x[i * xs + p] + (1.0f - l) * x[j * xs + p];
    for (std::int64_t p = 0; p < ys; ++p)
      out.y[i * ys + p] = l * y_onehot[i * ys + p] + (1.0f - l) * y_onehot[j * ys + p];
  }
  return out;
}

/// MixUp with one Beta(alpha,alpha) coefficient per batch and a PRNG-derived
/// pairing permutation. A batch of one is returned unchanged.
inline MixupResult mixup_batch(const Tensor& x, const Tensor& y_onehot,
                               double alpha, Prng& rng) {
  if (alpha <= 0.0) throw RangeError("mixup: alpha must be > 0");
  const std::int64_t b = x.dim(0);
  if (b < 2) return {x, y_onehot, 1.0};
  const double lambda = rng.beta(alpha, alpha);
  std::vector<int> perm(static_cast<std::size_t>(b));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  rng.shuffle(perm);
  return mixup_apply(x, y_onehot, lambda, perm);
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
  Tensor x;                // [B,3,c,c]
  std::vector<int> labels;  // [B]
};

/// One epoch of shuffled, augmented batches. The epoch order is a
/// Fisher-Yates shuffle drawn at construction; augmentation draws happen in
/// item order, so (dataset, seed, spec) fixes every emitted tensor. The
/// final partial batch is emitted.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, int batch_size, Prng& rng,
                const AugmentSpec& spec, bool shuffle = true)
      : dataset_(dataset), rng_(rng), spec_(spec), batch_size_(batch_size) {
    if (dataset.items.empty()) throw DatasetError("batch_iter: dataset is empty");
    if (batch_size < 1) throw ConfigError("batch_iter: batch_size must be >= 1");
    spec.validate();
    order_.resize(dataset.items.size());
    for (std::size_t i = 0; i < order_.size(); ++i)
      order_[i] = static_cast<int>(i);
    if (shuffle) rng_.shuffle(order_);
  }

  std::optional<Batch> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t take =
        std::min<std::size_t>(batch_size_, order_.size() - cursor_);
    Batch batch;
    batch.labels.reserve(take);
    Tensor first = augment_image(dataset_.items[order_[cursor_]].pixels, spec_,
                                 rng_);
    const std::int64_t c = first.dim(0), s = first.dim(1);
    batch.x = Tensor({static_cast<std::int64_t>(take), c, s, s});
    std::copy_n(first.data(), first.numel(), batch.x.data());
    batch.labels.push_back(dataset_.items[order_[cursor_]].label);
    for (std::size_t i = 1; i < take; ++i) {
      const LabeledImage& item = dataset_.items[order_[cursor_ + i]];
      Tensor img = augment_image(item.pixels, spec_, rng_);
      if (img.numel() != first.numel())
        throw ShapeError("batch_iter: inconsistent augmented image sizes");
      std::copy_n(img.data(), img.numel(),
                  batch.x.data() + static_cast<std::int64_t>(i) * img.numel());
      batch.labels.push_back(item.label);
    }
    cursor_ += take;
    return batch;
  }

  std::size_t batches_per_epoch() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
  }

 private:
  const Dataset& dataset_;
  Prng& rng_;
  AugmentSpec spec_;
  std::size_t batch_size_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

}  // namespace tinybit
