#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pix2surf/trainer.hpp"

using namespace pix2surf;
namespace fs = std::filesystem;

namespace {

fs::path tiny_dataset(const std::string& tag, int shapes = 2, int views = 3, int res = 16) {
  fs::path dir = fs::temp_directory_path() / ("p2s_trainer_" + tag);
  if (!fs::exists(dir / "manifest.json")) {
    DatasetConfig dc;
    dc.n_shapes = shapes;
    dc.views_per_shape = views;
    dc.height = dc.width = res;
    dc.seed = 3;
    build_dataset(dc, dir);
  }
  return dir;
}

NetConfig tiny_net(int res = 16, bool multiview = false) {
  NetConfig nc;
  nc.input_height = nc.input_width = res;
  nc.channel_scale = 0.0625;
  nc.multiview = multiview;
  return nc;
}

TrainConfig tiny_train(int e1, int e2) {
  TrainConfig tc;
  tc.epochs1 = e1;
  tc.epochs2 = e2;
  tc.lr1 = tc.lr2 = 1e-3;
  tc.views_per_iter = 3;
  tc.mv_warmup_epochs = 1;
  tc.seed = 5;
  return tc;
}

LossWeights tiny_weights() {
  LossWeights w;
  w.K = 32;
  w.eps_corr = 0.05;
  return w;
}

std::string params_bytes(const SurfaceModel& m) {
  std::string out;
  for (const auto& [name, t] : m.params) {
    out += name;
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  }
  return out;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("sample_foreground: contract cases") {
  std::vector<uint8_t> full(64 * 64, 1);
  auto s = sample_foreground(full, 4096, 1);
  CHECK(s.size() == 4096);
  for (int p : s) {
    CHECK(p >= 0);
    CHECK(p < 64 * 64);
  }

  std::vector<uint8_t> ten(100, 0);
  for (int i = 0; i < 10; ++i) ten[size_t(i * 7)] = 1;
  auto s2 = sample_foreground(ten, 100, 2);
  CHECK(s2.size() == 100);
  for (int p : s2) CHECK(ten[size_t(p)] == 1);

  std::vector<uint8_t> empty(100, 0);
  bool flag = false;
  auto s3 = sample_foreground(empty, 10, 3, &flag);
  CHECK(s3.empty());
  CHECK(flag);

  auto s4 = sample_foreground(full, 512, 9);
  auto s5 = sample_foreground(full, 512, 9);
  CHECK(s4 == s5);  // seeded determinism
  CHECK_THROWS_AS(sample_foreground(full, 0, 1), ConfigError);
}

TEST_CASE("phase 1 trains only the encoder/decoder") {
  Dataset ds = load_dataset(tiny_dataset("iso"));
  TrainState st = init_train_state(tiny_net(), tiny_train(2, 0), tiny_weights());

  std::map<std::string, Tensor> before;
  for (const auto& [name, t] : st.model.params)
    if (!name.starts_with("enc.") && !name.starts_with("dec.")) before[name] = t;

  pretrain_nocs_uv(st, ds);
  CHECK(st.p1_epochs_done == 2);
  for (const auto& [name, t] : before) CHECK(st.model.params.at(name).data == t.data);

  // and the encoder/decoder did move
  TrainState fresh = init_train_state(tiny_net(), tiny_train(2, 0), tiny_weights());
  CHECK(st.model.params.at("enc.s1.conva.w").data != fresh.model.params.at("enc.s1.conva.w").data);
}

TEST_CASE("no_nocs_pretrain skips phase 1 entirely") {
  Dataset ds = load_dataset(tiny_dataset("skip"));
  TrainConfig tc = tiny_train(3, 0);
  tc.no_nocs_pretrain = true;
  TrainState st = init_train_state(tiny_net(), tc, tiny_weights());
  std::string before = params_bytes(st.model);
  pretrain_nocs_uv(st, ds);
  CHECK(st.p1_epochs_done == 3);  // bookkeeping only
  CHECK(params_bytes(st.model) == before);
}

TEST_CASE("seeded training is bit-deterministic") {
  Dataset ds = load_dataset(tiny_dataset("det"));
  auto run = [&] {
    TrainState st = init_train_state(tiny_net(), tiny_train(1, 2), tiny_weights());
    pretrain_nocs_uv(st, ds);
    train_end_to_end(st, ds, false);
    return params_bytes(st.model);
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip is bit-identical; resume continues exactly") {
  Dataset ds = load_dataset(tiny_dataset("resume"));
  fs::path ck1 = fs::temp_directory_path() / "p2s_ck_full";
  fs::path ck2 = fs::temp_directory_path() / "p2s_ck_half";
  fs::path ck3 = fs::temp_directory_path() / "p2s_ck_resumed";

  // uninterrupted run
  TrainState full = init_train_state(tiny_net(), tiny_train(1, 4), tiny_weights());
  pretrain_nocs_uv(full, ds);
  train_end_to_end(full, ds, false);
  save_checkpoint(full, ck1.string());

  // interrupted at p2 epoch 2, saved, reloaded, continued
  TrainConfig half_cfg = tiny_train(1, 2);
  TrainState half = init_train_state(tiny_net(), half_cfg, tiny_weights());
  pretrain_nocs_uv(half, ds);
  train_end_to_end(half, ds, false);
  save_checkpoint(half, ck2.string());

  TrainState resumed = load_checkpoint(ck2.string());
  resumed.tcfg.epochs2 = 4;
  train_end_to_end(resumed, ds, false);
  save_checkpoint(resumed, ck3.string());

  CHECK(params_bytes(resumed.model) == params_bytes(full.model));
  CHECK(resumed.adam_t == full.adam_t);

  // save -> load -> save gives identical bytes
  TrainState reloaded = load_checkpoint(ck1.string());
  fs::path ck4 = fs::temp_directory_path() / "p2s_ck_resaved";
  save_checkpoint(reloaded, ck4.string());
  CHECK(file_bytes(ck1) == file_bytes(ck4));
}

TEST_CASE("truncated checkpoint refuses to load") {
  Dataset ds = load_dataset(tiny_dataset("trunc"));
  TrainState st = init_train_state(tiny_net(), tiny_train(1, 0), tiny_weights());
  fs::path ck = fs::temp_directory_path() / "p2s_ck_trunc";
  save_checkpoint(st, ck.string());
  std::string bytes = file_bytes(ck);
  std::ofstream f(ck, std::ios::binary);
  f.write(bytes.data(), std::streamsize(bytes.size() / 2));
  f.close();
  CHECK_THROWS_AS(load_checkpoint(ck.string()), IoError);
}

TEST_CASE("config mismatch on resume names the differing key") {
  TrainState st = init_train_state(tiny_net(), tiny_train(0, 0), tiny_weights());
  NetConfig other = tiny_net();
  other.sp_depth = 7;
  try {
    require_checkpoint_config(st, other);
    FAIL("expected IncompatError");
  } catch (const IncompatError& e) {
    CHECK(std::string(e.what()).find("sp_depth") != std::string::npos);
  }
}

TEST_CASE("multi-view training runs, logs lc, honors no_consistency") {
  Dataset ds = load_dataset(tiny_dataset("mv"));
  TrainConfig tc = tiny_train(1, 2);
  tc.views_per_iter = 3;

  TrainState st = init_train_state(tiny_net(16, true), tc, tiny_weights());
  pretrain_nocs_uv(st, ds);
  train_end_to_end(st, ds, true);
  bool saw_lc = false;
  for (const auto& r : st.history)
    if (r.term == "p2_lc") saw_lc = true;
  CHECK(saw_lc);

  TrainConfig tc2 = tc;
  tc2.no_consistency_loss = true;
  TrainState st2 = init_train_state(tiny_net(16, true), tc2, tiny_weights());
  pretrain_nocs_uv(st2, ds);
  train_end_to_end(st2, ds, true);
  for (const auto& r : st2.history)
    if (r.term == "p2_lc") CHECK(r.value == 0.0);

  // L_M degenerates to L_I: totals equal the weighted parts without lc
  for (const auto& r : st2.history) {
    if (r.term != "p2_total") continue;
    double ln = 0, lm = 0, ls = 0;
    for (const auto& q : st2.history) {
      if (q.epoch != r.epoch) continue;
      if (q.term == "p2_ln") ln = q.value;
      if (q.term == "p2_lm") lm = q.value;
      if (q.term == "p2_ls") ls = q.value;
    }
    LossWeights w = tiny_weights();
    CHECK(r.value == doctest::Approx(w.w1 * (w.wn * ln + w.wm * lm) + w.w2 * ls).epsilon(1e-9));
  }
}

TEST_CASE("multi-view rejects too-few dataset views and single-view models") {
  Dataset ds = load_dataset(tiny_dataset("guard"));
  TrainConfig tc = tiny_train(0, 1);
  tc.views_per_iter = 10;  // dataset has 3 per shape
  TrainState st = init_train_state(tiny_net(16, true), tc, tiny_weights());
  CHECK_THROWS_AS(train_end_to_end(st, ds, true), ConfigError);

  TrainConfig tc2 = tiny_train(0, 1);
  TrainState st2 = init_train_state(tiny_net(16, false), tc2, tiny_weights());
  CHECK_THROWS_AS(train_end_to_end(st2, ds, true), IncompatError);
}

TEST_CASE("non-finite parameters abort the step with diagnostics") {
  Dataset ds = load_dataset(tiny_dataset("nan"));
  TrainState st = init_train_state(tiny_net(), tiny_train(1, 1), tiny_weights());
  st.model.params.at("enc.s1.conva.w").data[0] = std::nan("");
  CHECK_THROWS_AS(pretrain_nocs_uv(st, ds), NumericError);
}

TEST_CASE("loss history lands in the csv export") {
  Dataset ds = load_dataset(tiny_dataset("csv"));
  TrainState st = init_train_state(tiny_net(), tiny_train(1, 1), tiny_weights());
  pretrain_nocs_uv(st, ds);
  train_end_to_end(st, ds, false);
  fs::path csv = fs::temp_directory_path() / "p2s_losses.csv";
  write_loss_csv(st, csv.string());
  std::string text = file_bytes(csv);
  CHECK(text.find("epoch,term,value") == 0);
  CHECK(text.find("p1_ln") != std::string::npos);
  CHECK(text.find("p2_ls") != std::string::npos);
}
