#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tinybit/data.hpp"
#include "tinybit/synth.hpp"

using namespace tinybit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tinybit_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// PPM
// ---------------------------------------------------------------------------

TEST_CASE("1x1 white ppm decodes to all-ones") {
  TempDir tmp;
  const fs::path p = tmp.path / "white.ppm";
  write_bytes(p, std::string("P6\n1 1\n255\n") + "\xff\xff\xff");
  const Tensor t = load_ppm(p.string());
  REQUIRE(t.shape() == std::vector<std::int64_t>{3, 1, 1});
  for (int c = 0; c < 3; ++c) REQUIRE(t[c] == 1.0f);
}

TEST_CASE("2x1 ppm separates channels") {
  TempDir tmp;
  const fs::path p = tmp.path / "two.ppm";
  std::string pix;
  pix += '\x00'; pix += '\x00'; pix += '\x00';   // (0,0,0)
  pix += '\xff'; pix += '\x00'; pix += '\x00';   // (255,0,0)
  write_bytes(p, "P6\n2 1\n255\n" + pix);
  const Tensor t = load_ppm(p.string());
  REQUIRE(t.shape() == std::vector<std::int64_t>{3, 1, 2});
  REQUIRE(t[0] == 0.0f);  // R
  REQUIRE(t[1] == 1.0f);
  REQUIRE(t[2] == 0.0f);  // G
  REQUIRE(t[3] == 0.0f);
  REQUIRE(t[4] == 0.0f);  // B
  REQUIRE(t[5] == 0.0f);
}

TEST_CASE("ppm rejects the P5 magic") {
  TempDir tmp;
  const fs::path p = tmp.path / "gray.ppm";
  write_bytes(p, "P5\n1 1\n255\n\x80");
  REQUIRE_THROWS_AS(load_ppm(p.string()), ParseError);
}

TEST_CASE("ppm rejects truncation and odd maxval") {
  TempDir tmp;
  const fs::path trunc = tmp.path / "t.ppm";
  write_bytes(trunc, "P6\n2 2\n255\n\x01\x02");
  REQUIRE_THROWS_AS(load_ppm(trunc.string()), ParseError);

  const fs::path maxval = tmp.path / "m.ppm";
  write_bytes(maxval, std::string("P6\n1 1\n65535\n") + "\0\0\0\0\0\0");
  REQUIRE_THROWS_AS(load_ppm(maxval.string()), ParseError);
}

TEST_CASE("ppm supports header comments") {
  TempDir tmp;
  const fs::path p = tmp.path / "c.ppm";
  write_bytes(p, std::string("P6\n# a comment\n1 1\n255\n") + "\x10\x20\x30");
  const Tensor t = load_ppm(p.string());
  REQUIRE(t[0] == Catch::Approx(0x10 / 255.0));
}

TEST_CASE("ppm round-trips through save and load") {
  TempDir tmp;
  Prng rng(7);
  const Tensor img = Tensor::uniform({3, 5, 4}, 0.0f, 1.0f, rng);
  const fs::path p = tmp.path / "rt.ppm";
  save_ppm(p.string(), img);
  const Tensor back = load_ppm(p.string());
  REQUIRE(back.same_shape(img));
  for (std::int64_t i = 0; i < img.numel(); ++i)
    REQUIRE(std::abs(back[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);
}

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

TEST_CASE("directory-per-class loading assigns sorted labels") {
  TempDir tmp;
  Prng rng(8);
  fs::create_directories(tmp.path / "malignant");
  fs::create_directories(tmp.path / "benign");
  for (int i = 0; i < 3; ++i)
    save_ppm((tmp.path / "benign" / ("b" + std::to_string(i) + ".ppm")).string(),
             Tensor::uniform({3, 4, 4}, 0, 1, rng));
  for (int i = 0; i < 2; ++i)
    save_ppm((tmp.path / "malignant" / ("m" + std::to_string(i) + ".ppm")).string(),
             Tensor::uniform({3, 4, 4}, 0, 1, rng));

  const Dataset ds = load_dataset_dir(tmp.path.string());
  REQUIRE(ds.class_names == std::vector<std::string>{"benign", "malignant"});
  REQUIRE(ds.items.size() == 5);
  int benign = 0, malignant = 0;
  for (const auto& item : ds.items) (item.label == 0 ? benign : malignant)++;
  REQUIRE(benign == 3);
  REQUIRE(malignant == 2);
  // items sorted by source path
  for (std::size_t i = 1; i < ds.items.size(); ++i)
    REQUIRE(ds.items[i - 1].source_path < ds.items[i].source_path);
}

TEST_CASE("empty roots and empty class dirs are dataset errors") {
  TempDir tmp;
  REQUIRE_THROWS_AS(load_dataset_dir(tmp.path.string()), DatasetError);
  fs::create_directories(tmp.path / "lonely");
  REQUIRE_THROWS_AS(load_dataset_dir(tmp.path.string()), DatasetError);
}

TEST_CASE("duplicate filenames across classes are fine") {
  TempDir tmp;
  Prng rng(9);
  fs::create_directories(tmp.path / "a");
  fs::create_directories(tmp.path / "b");
  save_ppm((tmp.path / "a" / "x.ppm").string(), Tensor::uniform({3, 2, 2}, 0, 1, rng));
  save_ppm((tmp.path / "b" / "x.ppm").string(), Tensor::uniform({3, 2, 2}, 0, 1, rng));
  REQUIRE(load_dataset_dir(tmp.path.string()).items.size() == 2);
}

// ---------------------------------------------------------------------------
// Resize / crop / flip
// ---------------------------------------------------------------------------

TEST_CASE("same-size square resize is the bitwise identity") {
  Prng rng(10);
  const Tensor img = Tensor::uniform({3, 8, 8}, 0, 1, rng);
  const Tensor out = resize_bilinear(img, 8);
  for (std::int64_t i = 0; i < img.numel(); ++i) REQUIRE(out[i] == img[i]);
}

TEST_CASE("constant images stay constant under resize") {
  const Tensor img = Tensor::full({3, 5, 5}, 0.375f);
  for (int target : {2, 3, 7, 16}) {
    const Tensor out = resize_bilinear(img, target);
    for (std::int64_t i = 0; i < out.numel(); ++i)
      REQUIRE(out[i] == Catch::Approx(0.375f).margin(1e-6));
  }
}

TEST_CASE("2x2 to 4x4 interpolates columns 0, .25, .75, 1") {
  Tensor img({3, 2, 2});
  for (int c = 0; c < 3; ++c) {
    img.at({c, 0, 0}) = 0.0f;
    img.at({c, 0, 1}) = 1.0f;
    img.at({c, 1, 0}) = 0.0f;
    img.at({c, 1, 1}) = 1.0f;
  }
  const Tensor out = resize_bilinear(img, 4);
  const float expect[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        REQUIRE(out.at({c, y, x}) == Catch::Approx(expect[x]).margin(1e-6));
}

TEST_CASE("full-size random crop is the identity but still draws") {
  Prng rng(11);
  const Tensor img = Tensor::uniform({3, 6, 6}, 0, 1, rng);
  Prng crop_rng(12);
  const std::uint64_t before = crop_rng.state();
  const Tensor out = random_crop(img, 6, crop_rng);
  REQUIRE(crop_rng.state() != before);  // stream stability: draws consumed
  for (std::int64_t i = 0; i < img.numel(); ++i) REQUIRE(out[i] == img[i]);
}

TEST_CASE("oversized crops are shape errors") {
  Prng rng(1);
  REQUIRE_THROWS_AS(random_crop(Tensor::zeros({3, 4, 4}), 5, rng), ShapeError);
}

TEST_CASE("double hflip is the identity") {
  Prng rng(13);
  const Tensor img = Tensor::uniform({3, 5, 7}, 0, 1, rng);
  const Tensor twice = hflip(hflip(img));
  for (std::int64_t i = 0; i < img.numel(); ++i) REQUIRE(twice[i] == img[i]);
}

TEST_CASE("fixed seeds give identical crops run to run") {
  Prng rng(14);
  const Tensor img = Tensor::uniform({3, 10, 10}, 0, 1, rng);
  Prng a(99), b(99);
  const Tensor ca = random_crop(img, 6, a);
  const Tensor cb = random_crop(img, 6, b);
  for (std::int64_t i = 0; i < ca.numel(); ++i) REQUIRE(ca[i] == cb[i]);
}

TEST_CASE("augmentation preserves the pixel range") {
  Prng rng(15);
  AugmentSpec spec;
  spec.resize_to = 40;
  spec.crop_to = 32;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor img = Tensor::uniform({3, 32, 32}, 0, 1, rng);
    const Tensor out = augment_image(img, spec, rng);
    REQUIRE(out.shape() == std::vector<std::int64_t>{3, 32, 32});
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      REQUIRE(out[i] >= 0.0f);
      REQUIRE(out[i] <= 1.0f);
    }
  }
}

TEST_CASE("evaluation path is deterministic resize + center crop") {
  Prng rng(16);
  const Tensor img = Tensor::uniform({3, 37, 37}, 0, 1, rng);
  AugmentSpec spec;
  spec.resize_to = 32;
  spec.crop_to = 28;
  spec.enabled = false;
  Prng unused1(1), unused2(2);
  const Tensor a = augment_image(img, spec, unused1);
  const Tensor b = augment_image(img, spec, unused2);
  REQUIRE(unused1.state() == Prng(1).state());  // no draws on the eval path
  for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

// ---------------------------------------------------------------------------
// MixUp
// ---------------------------------------------------------------------------

TEST_CASE("mixup endpoints recover the original and permuted batches") {
  Prng rng(17);
  const Tensor x = Tensor::uniform({4, 3, 2, 2}, 0, 1, rng);
  const Tensor y = one_hot({0, 1, 0, 1}, 2);
  const std::vector<int> perm{3, 2, 1, 0};

  const MixupResult at1 = mixup_apply(x, y, 1.0, perm);
  for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(at1.x[i] == x[i]);
  for (std::int64_t i = 0; i < y.numel(); ++i) REQUIRE(at1.y[i] == y[i]);

  const MixupResult at0 = mixup_apply(x, y, 0.0, perm);
  const std::int64_t stride = x.numel() / 4;
  for (int i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < stride; ++j)
      REQUIRE(at0.x[i * stride + j] == x[perm[i] * stride + j]);
}

TEST_CASE("mixup at one half averages pairs") {
  const Tensor x({2, 1, 1, 1}, {0.0f, 1.0f});
  const Tensor y = one_hot({0, 1}, 2);
  const MixupResult mid = mixup_apply(x, y, 0.5, {1, 0});
  REQUIRE(mid.x[0] == 0.5f);
  REQUIRE(mid.x[1] == 0.5f);
  REQUIRE(mid.y[0] == 0.5f);
  REQUIRE(mid.y[1] == 0.5f);
}

TEST_CASE("mixup label rows stay convex") {
  Prng rng(18);
  const Tensor x = Tensor::uniform({8, 3, 4, 4}, 0, 1, rng);
  const Tensor y = one_hot({0, 1, 2, 0, 1, 2, 0, 1}, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const MixupResult m = mixup_batch(x, y, 0.1, rng);
    REQUIRE(m.lambda >= 0.0);
    REQUIRE(m.lambda <= 1.0);
    for (std::int64_t i = 0; i < 8; ++i) {
      double row = 0.0;
      for (std::int64_t k = 0; k < 3; ++k) row += m.y[i * 3 + k];
      REQUIRE(std::abs(row - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("mixup leaves singleton batches unchanged") {
  Prng rng(19);
  const Tensor x = Tensor::uniform({1, 3, 2, 2}, 0, 1, rng);
  const Tensor y = one_hot({0}, 2);
  const MixupResult m = mixup_batch(x, y, 0.1, rng);
  REQUIRE(m.lambda == 1.0);
  for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(m.x[i] == x[i]);
}

// ---------------------------------------------------------------------------
// Batch iteration
// ---------------------------------------------------------------------------

namespace {

Dataset tiny_dataset(int n, std::uint64_t seed, int size = 8) {
  Dataset ds;
  ds.class_names = {"a", "b"};
  Prng rng(seed);
  for (int i = 0; i < n; ++i) {
    LabeledImage item;
    item.pixels = Tensor::uniform({3, size, size}, 0, 1, rng);
    item.label = i % 2;
    item.source_path = "mem://" + std::to_string(i);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace

TEST_CASE("one epoch covers the label multiset exactly") {
  const Dataset ds = tiny_dataset(11, 20);
  Prng rng(21);
  AugmentSpec spec;
  spec.resize_to = 8;
  spec.crop_to = 8;
  BatchIterator it(ds, 4, rng, spec);
  std::vector<int> seen;
  std::size_t batches = 0;
  while (auto batch = it.next()) {
    ++batches;
    REQUIRE(batch->x.dim(0) == static_cast<std::int64_t>(batch->labels.size()));
    for (int label : batch->labels) seen.push_back(label);
  }
  REQUIRE(batches == 3);  // 4+4+3
  REQUIRE(seen.size() == 11);
  REQUIRE(std::count(seen.begin(), seen.end(), 0) == 6);
  REQUIRE(std::count(seen.begin(), seen.end(), 1) == 5);
}

TEST_CASE("batch order is seed-deterministic") {
  const Dataset ds = tiny_dataset(16, 22);
  AugmentSpec spec;
  spec.resize_to = 10;
  spec.crop_to = 8;
  for (int run = 0; run < 2; ++run) {
    static std::vector<float> first;
    Prng rng(23);
    BatchIterator it(ds, 5, rng, spec);
    std::vector<float> flat;
    while (auto batch = it.next())
      flat.insert(flat.end(), batch->x.data(), batch->x.data() + batch->x.numel());
    if (run == 0) {
      first = flat;
    } else {
      REQUIRE(flat == first);
    }
  }
}

TEST_CASE("oversized batch emits a single full batch") {
  const Dataset ds = tiny_dataset(6, 24);
  Prng rng(25);
  AugmentSpec spec;
  spec.resize_to = 8;
  spec.crop_to = 8;
  BatchIterator it(ds, 100, rng, spec);
  auto batch = it.next();
  REQUIRE(batch.has_value());
  REQUIRE(batch->labels.size() == 6);
  REQUIRE_FALSE(it.next().has_value());
}

TEST_CASE("empty datasets cannot be iterated") {
  Dataset ds;
  ds.class_names = {"a"};
  Prng rng(26);
  AugmentSpec spec;
  spec.resize_to = 8;
  spec.crop_to = 8;
  REQUIRE_THROWS_AS(BatchIterator(ds, 4, rng, spec), DatasetError);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

TEST_CASE("synthetic generation is byte-identical across runs") {
  TempDir a, b;
  SynthConfig cfg;
  cfg.task = "ring-vs-disk-2class";
  cfg.train_count = 12;
  cfg.val_count = 4;
  cfg.seed = 7;
  generate_synth_dataset(a.path.string(), cfg);
  generate_synth_dataset(b.path.string(), cfg);

  std::vector<fs::path> rel;
  for (const auto& entry : fs::recursive_directory_iterator(a.path))
    if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), a.path));
  std::sort(rel.begin(), rel.end());
  REQUIRE(rel.size() == 16);
  for (const auto& r : rel) {
    std::ifstream fa(a.path / r, std::ios::binary);
    std::ifstream fb(b.path / r, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    REQUIRE(ba == bb);
  }
}

TEST_CASE("synthetic trees load as balanced datasets") {
  TempDir tmp;
  SynthConfig cfg;
  cfg.task = "shapes-4class";
  cfg.train_count = 16;
  cfg.val_count = 8;
  cfg.seed = 3;
  generate_synth_dataset(tmp.path.string(), cfg);
  const Dataset train = load_dataset_dir((tmp.path / "train").string());
  REQUIRE(train.class_names ==
          std::vector<std::string>{"cross", "disk", "square", "triangle"});
  REQUIRE(train.items.size() == 16);
  const Dataset val = load_dataset_dir((tmp.path / "val").string());
  REQUIRE(val.items.size() == 8);
  for (const auto& item : train.items) {
    REQUIRE(item.pixels.shape() == std::vector<std::int64_t>{3, 32, 32});
    for (std::int64_t i = 0; i < item.pixels.numel(); ++i) {
      REQUIRE(item.pixels[i] >= 0.0f);
      REQUIRE(item.pixels[i] <= 1.0f);
    }
  }
}
