#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "pix2surf/cli.hpp"

using namespace pix2surf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("p2s_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config schema: types, unknown keys, positivity") {
  RunConfig cfg = RunConfig::defaults();
  CHECK(cfg.geti("data.shapes") == 8);
  CHECK(cfg.getd("loss.w2") == 0.9);
  CHECK(cfg.getb("net.multiview") == false);
  CHECK(cfg.gets("eval.pred_kind") == "mesh");

  CHECK_THROWS_AS(cfg.set_from_string("data.nonsense", "1", "flag"), ConfigError);
  CHECK_THROWS_AS(cfg.set_from_string("data.res", "0", "flag"), ConfigError);
  CHECK_THROWS_AS(cfg.set_from_string("data.res", "abc", "flag"), ConfigError);
  CHECK_THROWS_AS(cfg.set_from_string("net.multiview", "maybe", "flag"), ConfigError);

  cfg.set_from_string("net.multiview", "true", "flag:--x");
  CHECK(cfg.getb("net.multiview"));
  CHECK(cfg.provenance("net.multiview") == "flag:--x");
  CHECK(cfg.provenance("data.shapes") == "default");
}

TEST_CASE("config file parsing with sections and provenance") {
  fs::path dir = fresh_dir("cfgfile");
  fs::path file = dir / "run.cfg";
  {
    std::ofstream f(file);
    f << "# comment\n[data]\nshapes = 3\nres = 32\n\n[loss]\nw2 = 0.5\n";
  }
  RunConfig cfg = RunConfig::defaults();
  cfg.load_file(file.string());
  CHECK(cfg.geti("data.shapes") == 3);
  CHECK(cfg.geti("data.res") == 32);
  CHECK(cfg.getd("loss.w2") == 0.5);
  CHECK(cfg.provenance("data.shapes").find("file:") == 0);

  // resolved serialization reloads to the same values
  fs::path resolved = dir / "resolved.cfg";
  {
    std::ofstream f(resolved);
    f << cfg.serialize_resolved();
  }
  RunConfig cfg2 = RunConfig::defaults();
  cfg2.load_file(resolved.string());
  CHECK(cfg2.geti("data.shapes") == 3);
  CHECK(cfg2.getd("loss.w2") == 0.5);
  CHECK(cfg2.to_json() == cfg.to_json());
}

TEST_CASE("arg parsing: shorthands, canonical keys, errors") {
  RunConfig cfg = cli::parse_args("synth", {"--shapes", "4", "--res", "16", "--noise-bg",
                                            "--data.max_coverage", "0.8"});
  CHECK(cfg.geti("data.shapes") == 4);
  CHECK(cfg.geti("data.res") == 16);
  CHECK(cfg.getb("data.noise_background"));
  CHECK(cfg.getd("data.max_coverage") == 0.8);

  CHECK_THROWS_AS(cli::parse_args("synth", {"--shapes"}), ConfigError);
  CHECK_THROWS_AS(cli::parse_args("synth", {"bare"}), ConfigError);
  CHECK_THROWS_AS(cli::parse_args("synth", {"--no.such.key", "1"}), ConfigError);

  RunConfig ev = cli::parse_args("eval", {"--pred-maps", "somewhere", "--hidden"});
  CHECK(ev.gets("eval.pred") == "somewhere");
  CHECK(ev.gets("eval.pred_kind") == "maps");
  CHECK(ev.getb("eval.hidden"));
}

TEST_CASE("synth twice with one seed gives identical manifests") {
  fs::path dir = fresh_dir("synthdet");
  RunConfig cfg = cli::parse_args(
      "synth", {"--shapes", "2", "--views", "3", "--res", "16", "--seed", "9", "--out",
                (dir / "d1").string()});
  CHECK(cli::cmd_synth(cfg) == 0);
  RunConfig cfg2 = cli::parse_args(
      "synth", {"--shapes", "2", "--views", "3", "--res", "16", "--seed", "9", "--out",
                (dir / "d2").string()});
  CHECK(cli::cmd_synth(cfg2) == 0);
  std::ifstream m1(dir / "d1" / "manifest.json"), m2(dir / "d2" / "manifest.json");
  std::string s1((std::istreambuf_iterator<char>(m1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(m2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(s1.find("crc32") != std::string::npos);
}

TEST_CASE("missing checkpoint names the path and maps to usage error") {
  try {
    cli::load_model_any("/definitely/not/here.ckpt");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/definitely/not/here.ckpt") != std::string::npos);
  }
}

TEST_CASE("full cli pipeline on a tiny dataset") {
  fs::path dir = fresh_dir("pipeline");
  std::string data = (dir / "data").string();
  std::string run = (dir / "run").string();

  CHECK(cli::cmd_synth(cli::parse_args("synth", {"--shapes", "2", "--views", "3", "--res", "16",
                                                 "--out", data})) == 0);

  RunConfig tr = cli::parse_args(
      "train", {"--data", data, "--run", run, "--epochs1", "1", "--epochs2", "1",
                "--net.channel_scale", "0.0625", "--loss.K", "32", "--train.views", "3"});
  CHECK(cli::cmd_train(tr) == 0);
  CHECK(fs::exists(fs::path(run) / "ckpt_final"));
  CHECK(fs::exists(fs::path(run) / "model_final"));
  CHECK(fs::exists(fs::path(run) / "losses.csv"));
  CHECK(fs::exists(fs::path(run) / "config.resolved"));
  CHECK(fs::exists(fs::path(run) / "run_meta.json"));

  std::string pred = (dir / "pred").string();
  RunConfig inf = cli::parse_args(
      "infer", {"--ckpt", run + "/model_final", "--data", data, "--out", pred, "--mode", "single",
                "--infer.final_res", "64", "--infer.uv_res", "32"});
  CHECK(cli::cmd_infer(inf) == 0);
  CHECK(fs::exists(fs::path(pred) / "shape_000" / "mesh_0.obj"));
  CHECK(fs::exists(fs::path(pred) / "shape_000" / "texture_0.png"));
  CHECK(fs::exists(fs::path(pred) / "shape_000" / "chart_0.png"));

  std::string evout = (dir / "eval").string();
  RunConfig ev = cli::parse_args("eval", {"--data", data, "--pred", pred, "--out", evout});
  CHECK(cli::cmd_eval(ev) == 0);
  CHECK(fs::exists(fs::path(evout) / "report.json"));
  CHECK(fs::exists(fs::path(evout) / "report.csv"));

  // ground truth as prediction: reconstruction error at the quantization floor
  std::string evgt = (dir / "evalgt").string();
  RunConfig ev2 = cli::parse_args("eval", {"--data", data, "--pred-maps", data, "--out", evgt});
  CHECK(cli::cmd_eval(ev2) == 0);
  std::ifstream rf(fs::path(evgt) / "report.json");
  nlohmann::json report;
  rf >> report;
  CHECK(report["aggregates"]["overall"]["e_rec"].get<double>() < 1e-8);
  CHECK(report["aggregates"]["overall"]["missing"].get<int>() == 0);
}

TEST_CASE("train flags: ablations recorded, view pairs logged") {
  fs::path dir = fresh_dir("ablate");
  std::string data = (dir / "data").string();
  CHECK(cli::cmd_synth(cli::parse_args("synth", {"--shapes", "1", "--views", "5", "--res", "16",
                                                 "--out", data})) == 0);
  std::string run = (dir / "run_mv").string();
  RunConfig tr = cli::parse_args(
      "train", {"--data", data, "--run", run, "--epochs1", "0", "--epochs2", "1", "--multiview",
                "--views", "5", "--net.channel_scale", "0.0625", "--loss.K", "16",
                "--train.mv_warmup", "0", "--loss.eps_corr", "0.05"});
  CHECK(cli::cmd_train(tr) == 0);
  std::ifstream mf(fs::path(run) / "run_meta.json");
  nlohmann::json meta;
  mf >> meta;
  CHECK(meta["view_pairs_per_batch"] == 10);
  CHECK(meta["multiview"] == true);

  std::string run2 = (dir / "run_nonocs").string();
  RunConfig tr2 = cli::parse_args(
      "train", {"--data", data, "--run", run2, "--epochs1", "2", "--epochs2", "0", "--ablate",
                "no_nocs", "--net.channel_scale", "0.0625", "--loss.K", "16"});
  CHECK(cli::cmd_train(tr2) == 0);
  std::ifstream mf2(fs::path(run2) / "run_meta.json");
  nlohmann::json meta2;
  mf2 >> meta2;
  CHECK(meta2["phase1_skipped"] == true);

  CHECK_THROWS_AS(cli::parse_ablations("bogus"), ConfigError);
}

TEST_CASE("PIX2SURF_RUNS overrides the run root") {
  fs::path dir = fresh_dir("runroot");
  std::string data = (dir / "data").string();
  CHECK(cli::cmd_synth(cli::parse_args("synth", {"--shapes", "1", "--views", "2", "--res", "16",
                                                 "--out", data})) == 0);
  setenv("PIX2SURF_RUNS", (dir / "roots").c_str(), 1);
  RunConfig tr = cli::parse_args(
      "train", {"--data", data, "--run", "runs/exp1", "--epochs1", "0", "--epochs2", "1",
                "--net.channel_scale", "0.0625", "--loss.K", "8", "--train.views", "2"});
  CHECK(cli::cmd_train(tr) == 0);
  CHECK(fs::exists(dir / "roots" / "exp1" / "ckpt_final"));
  unsetenv("PIX2SURF_RUNS");
}

TEST_CASE("exit code mapping through cli::run") {
  fs::path dir = fresh_dir("exitcodes");
  std::string out = (dir / "d").string();
  const char* ok_args[] = {"pix2surf", "synth", "--shapes", "1", "--views", "1", "--res", "16",
                           "--out", out.c_str()};
  CHECK(cli::run(10, const_cast<char**>(ok_args)) == 0);

  const char* bad_res[] = {"pix2surf", "synth", "--res", "0"};
  CHECK(cli::run(4, const_cast<char**>(bad_res)) == 2);

  const char* bad_cmd[] = {"pix2surf", "frobnicate"};
  CHECK(cli::run(2, const_cast<char**>(bad_cmd)) == 2);

  const char* missing_ckpt[] = {"pix2surf", "infer", "--ckpt", "/nope", "--images", "/nope.png"};
  CHECK(cli::run(6, const_cast<char**>(missing_ckpt)) == 2);
}
