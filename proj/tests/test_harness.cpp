#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tinybit/harness.hpp"
#include "tinybit/synth.hpp"

using namespace tinybit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tinybit_harness_" + std::to_string(::getpid()) + "_" +
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

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

ResNetConfig tiny_model() {
  ResNetConfig cfg = resnet14(2);
  cfg.base_width = 8;
  return cfg;
}

TrainConfig tiny_pretrain_config(const fs::path& data_root,
                                 const fs::path& out_root, int epochs = 3) {
  TrainConfig cfg;
  cfg.mode = TrainMode::kPretrain;
  cfg.model = tiny_model();
  cfg.schedule.total_epochs = epochs;
  cfg.schedule.milestones = {};
  cfg.schedule.batch_size = 8;
  cfg.batch_size = 8;
  cfg.seed = 7;
  cfg.train_dir = (data_root / "train").string();
  cfg.val_dir = (data_root / "val").string();
  cfg.checkpoint_out = (out_root / "model.ckpt").string();
  cfg.metrics_csv = (out_root / "metrics.csv").string();
  cfg.log_wall_time = false;
  return cfg;
}

void make_data(const fs::path& root, int train, int val, std::uint64_t seed,
               const std::string& task = "ring-vs-disk-2class") {
  SynthConfig cfg;
  cfg.task = task;
  cfg.train_count = train;
  cfg.val_count = val;
  cfg.seed = seed;
  generate_synth_dataset(root.string(), cfg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint save -> load -> save is byte-identical") {
  TempDir tmp;
  Model m = build_model(tiny_model(), 5);
  Prng rng(6);
  const Checkpoint ckpt = make_checkpoint(m, 2, 50, rng);

  const fs::path p1 = tmp.path / "a.ckpt";
  const fs::path p2 = tmp.path / "b.ckpt";
  checkpoint_save(p1.string(), ckpt);
  const Checkpoint loaded = checkpoint_load(p1.string());
  checkpoint_save(p2.string(), loaded);
  REQUIRE(slurp(p1) == slurp(p2));

  // registries bitwise equal
  REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    REQUIRE(loaded.tensors[i].name == ckpt.tensors[i].name);
    for (std::int64_t j = 0; j < ckpt.tensors[i].tensor.numel(); ++j)
      REQUIRE(loaded.tensors[i].tensor[j] == ckpt.tensors[i].tensor[j]);
  }
  // config fields survive
  REQUIRE(loaded.config.at("epoch").get<int>() == 2);
  REQUIRE(loaded.config.at("prng").at("seed").get<std::uint64_t>() == 6);
}

TEST_CASE("a flipped payload byte is caught by the CRC") {
  TempDir tmp;
  Model m = build_model(tiny_model(), 5);
  Prng rng(6);
  const fs::path p = tmp.path / "c.ckpt";
  checkpoint_save(p.string(), make_checkpoint(m, 0, 0, rng));

  std::string bytes = slurp(p);
  // flip one bit deep inside the payload region
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  REQUIRE_THROWS_AS(checkpoint_load(p.string()), IntegrityError);
}

TEST_CASE("version bumps and bad magic are distinct, clean failures") {
  TempDir tmp;
  Model m = build_model(tiny_model(), 5);
  Prng rng(6);
  const fs::path p = tmp.path / "v.ckpt";
  checkpoint_save(p.string(), make_checkpoint(m, 0, 0, rng));

  std::string bytes = slurp(p);
  std::string bumped = bytes;
  bumped[4] = 2;  // little-endian u32 version right after the magic
  const fs::path pv = tmp.path / "v2.ckpt";
  std::ofstream(pv, std::ios::binary).write(bumped.data(), (std::streamsize)bumped.size());
  REQUIRE_THROWS_AS(checkpoint_load(pv.string()), VersionError);

  std::string magic = bytes;
  magic[0] = 'X';
  const fs::path pm = tmp.path / "m.ckpt";
  std::ofstream(pm, std::ios::binary).write(magic.data(), (std::streamsize)magic.size());
  REQUIRE_THROWS_AS(checkpoint_load(pm.string()), ParseError);

  std::string truncated = bytes.substr(0, bytes.size() - 7);
  const fs::path pt = tmp.path / "t.ckpt";
  std::ofstream(pt, std::ios::binary).write(truncated.data(), (std::streamsize)truncated.size());
  REQUIRE_THROWS_AS(checkpoint_load(pt.string()), Error);
}

TEST_CASE("model round-trips through a checkpoint") {
  Model m = build_model(tiny_model(), 15);
  Prng rng(16);
  m.head.weight = Tensor::normal({2, m.head.weight.dim(1)}, 0, 0.2f, rng);
  const Checkpoint ckpt = make_checkpoint(m, 0, 0, rng);
  Model back = model_from_checkpoint(ckpt);
  const auto pa = m.parameters();
  const auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::int64_t j = 0; j < pa[i].tensor->numel(); ++j)
      REQUIRE((*pb[i].tensor)[j] == (*pa[i].tensor)[j]);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

TEST_CASE("a zero-head model predicts class 0 everywhere") {
  TempDir data;
  make_data(data.path, 10, 10, 31);
  const Dataset val = load_dataset_dir((data.path / "val").string());
  // synth val split: 5 disk then 5 ring by construction
  Model m = build_model(tiny_model(), 32);
  const EvalResult r = evaluate(m, val, 4, 32);
  REQUIRE(r.accuracy_pct == 50.0);  // all predicted 0 with a 50/50 split
  REQUIRE(r.confusion.tp == 0);
  REQUIRE(r.confusion.fp == 0);
  REQUIRE(r.confusion.fn == 5);
  REQUIRE(r.confusion.tn == 5);
  REQUIRE(r.loss == Catch::Approx(std::log(2.0)).margin(1e-4));
}

TEST_CASE("accuracy equals an independent per-sample recount") {
  TempDir data;
  make_data(data.path, 12, 12, 33);
  const Dataset val = load_dataset_dir((data.path / "val").string());
  Model m = build_model(tiny_model(), 34);
  Prng rng(35);
  m.head.weight = Tensor::normal({2, m.head.weight.dim(1)}, 0, 0.3f, rng);

  const EvalResult r = evaluate(m, val, 5, 32);
  int correct = 0;
  for (const auto& item : val.items) {
    Tensor x({1, 3, 32, 32});
    std::copy_n(item.pixels.data(), item.pixels.numel(), x.data());
    const Tensor logits = m.forward(x);
    const int pred = logits[1] > logits[0] ? 1 : 0;
    correct += pred == item.label;
  }
  REQUIRE(r.accuracy_pct ==
          Catch::Approx(100.0 * correct / val.items.size()).margin(1e-9));
}

TEST_CASE("evaluation is bitwise repeatable") {
  TempDir data;
  make_data(data.path, 8, 8, 36);
  const Dataset val = load_dataset_dir((data.path / "val").string());
  Model m = build_model(tiny_model(), 37);
  const EvalResult a = evaluate(m, val, 3, 32);
  const EvalResult b = evaluate(m, val, 3, 32);
  REQUIRE(a.loss == b.loss);
  REQUIRE(a.accuracy_pct == b.accuracy_pct);
}

TEST_CASE("evaluate rejects class-count mismatches") {
  TempDir data;
  make_data(data.path, 8, 8, 38, "shapes-4class");
  const Dataset val = load_dataset_dir((data.path / "val").string());
  Model m = build_model(tiny_model(), 39);  // 2-class head
  REQUIRE_THROWS_AS(evaluate(m, val, 4, 32), ConfigError);
}

// ---------------------------------------------------------------------------
// Training runs
// ---------------------------------------------------------------------------

TEST_CASE("initial validation loss with a zero head is ln K") {
  TempDir data, out;
  make_data(data.path, 16, 8, 41);
  Trainer trainer(tiny_pretrain_config(data.path, out.path));
  REQUIRE(trainer.evaluate_validation().loss ==
          Catch::Approx(std::log(2.0)).margin(1e-4));
}

TEST_CASE("a short pretrain run descends on a toy task") {
  TempDir data, out;
  make_data(data.path, 24, 8, 42);
  TrainConfig cfg = tiny_pretrain_config(data.path, out.path, 5);
  Trainer trainer(cfg);
  std::vector<EpochMetrics> rows;
  while (!trainer.done()) rows.push_back(trainer.run_epoch());
  REQUIRE(rows.size() == 5);
  REQUIRE(rows.back().train_loss < rows.front().train_loss);
  trainer.write_outputs();
  REQUIRE(fs::exists(out.path / "model.ckpt"));
  REQUIRE(fs::exists(out.path / "metrics.csv"));
}

TEST_CASE("identical config and seed give bitwise-identical outputs") {
  TempDir data, out1, out2;
  make_data(data.path, 16, 8, 43);
  for (const TempDir* out : {&out1, &out2}) {
    TrainConfig cfg = tiny_pretrain_config(data.path, out->path, 2);
    pretrain(cfg);
  }
  REQUIRE(slurp(out1.path / "metrics.csv") == slurp(out2.path / "metrics.csv"));
  REQUIRE(slurp(out1.path / "model.ckpt") == slurp(out2.path / "model.ckpt"));
}

TEST_CASE("csv layout matches the metrics contract") {
  TempDir data, out;
  make_data(data.path, 12, 6, 44);
  pretrain(tiny_pretrain_config(data.path, out.path, 2));
  std::ifstream csv(out.path / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  REQUIRE(line == "epoch,train_loss,train_acc,val_loss,val_acc,lr,wall_seconds");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    REQUIRE(std::count(line.begin(), line.end(), ',') == 6);
    REQUIRE(line.substr(line.size() - 8) == "0.000000");  // wall zeroed
  }
  REQUIRE(rows == 2);
}

TEST_CASE("finetune with a zero-step override preserves the body bitwise") {
  TempDir data, out;
  make_data(data.path, 16, 8, 45);
  const TrainConfig pre_cfg = tiny_pretrain_config(data.path, out.path, 2);
  pretrain(pre_cfg);

  TrainConfig ft;
  ft.mode = TrainMode::kFinetune;
  ft.train_dir = pre_cfg.train_dir;
  ft.val_dir = pre_cfg.val_dir;
  ft.batch_size = 8;
  ft.seed = 9;
  ft.checkpoint_in = pre_cfg.checkpoint_out;
  ft.hyperrule_auto = false;
  HyperRuleDecision d = decide({16, 32, 2});
  d.schedule_steps = 0;
  ft.decision = d;

  Trainer trainer(ft);
  REQUIRE(trainer.done());

  const Checkpoint before = checkpoint_load(pre_cfg.checkpoint_out);
  const auto params = trainer.model().parameters();
  std::size_t checked = 0;
  for (std::size_t i = 0; i < before.tensors.size(); ++i) {
    if (before.tensors[i].name.rfind("head.", 0) == 0) continue;
    REQUIRE(before.tensors[i].name == params[i].name);
    for (std::int64_t j = 0; j < before.tensors[i].tensor.numel(); ++j)
      REQUIRE((*params[i].tensor)[j] == before.tensors[i].tensor[j]);
    ++checked;
  }
  REQUIRE(checked > 0);
  for (std::int64_t j = 0; j < trainer.model().head.weight.numel(); ++j)
    REQUIRE(trainer.model().head.weight[j] == 0.0f);
}

TEST_CASE("finetune on a small dataset disables mixup via the hyperrule") {
  TempDir data, out;
  make_data(data.path, 16, 8, 46);
  pretrain(tiny_pretrain_config(data.path, out.path, 1));

  TrainConfig ft;
  ft.mode = TrainMode::kFinetune;
  ft.train_dir = (data.path / "train").string();
  ft.val_dir = (data.path / "val").string();
  ft.batch_size = 8;
  ft.seed = 10;
  ft.checkpoint_in = (out.path / "model.ckpt").string();
  Trainer trainer(ft);
  REQUIRE_FALSE(trainer.decision().mixup_enabled);
  REQUIRE(trainer.decision().schedule_steps == 500);
}

TEST_CASE("finetune requires checkpoint_in") {
  TrainConfig ft;
  ft.mode = TrainMode::kFinetune;
  ft.train_dir = "x";
  ft.val_dir = "y";
  REQUIRE_THROWS_AS(Trainer(ft), ConfigError);
}

TEST_CASE("head-class mismatch between checkpoint and task is healed by surgery") {
  TempDir shapes, disks, out;
  make_data(shapes.path, 16, 8, 47, "shapes-4class");
  make_data(disks.path, 16, 8, 48);

  TrainConfig pre = tiny_pretrain_config(shapes.path, out.path, 1);
  pre.model.num_classes = 4;
  pretrain(pre);

  TrainConfig ft;
  ft.mode = TrainMode::kFinetune;
  ft.train_dir = (disks.path / "train").string();
  ft.val_dir = (disks.path / "val").string();
  ft.batch_size = 8;
  ft.seed = 11;
  ft.checkpoint_in = pre.checkpoint_out;
  ft.hyperrule_auto = false;
  HyperRuleDecision d = decide({16, 32, 2});
  d.schedule_steps = 2;
  ft.decision = d;
  Trainer trainer(ft);
  REQUIRE(trainer.model().config.num_classes == 2);
  while (!trainer.done()) trainer.run_epoch();
  REQUIRE(trainer.step() == 2);
}

TEST_CASE("config json round-trips through the closure property") {
  TrainConfig cfg;
  cfg.mode = TrainMode::kFinetune;
  cfg.model = tiny_model();
  cfg.train_dir = "data/train";
  cfg.val_dir = "data/val";
  cfg.batch_size = 16;
  cfg.seed = 123;
  cfg.checkpoint_in = "in.ckpt";
  cfg.checkpoint_out = "out.ckpt";
  cfg.metrics_csv = "m.csv";
  cfg.eval_every = 2;
  cfg.log_wall_time = false;
  cfg.hyperrule_auto = false;
  cfg.decision = decide({660, 32, 2});

  const nlohmann::json j = cfg;
  const TrainConfig back = j.get<TrainConfig>();
  const nlohmann::json j2 = back;
  REQUIRE(j == j2);
}
