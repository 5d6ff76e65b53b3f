#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "quiltsurv/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"--log-level", "off"});
  std::ostringstream out, err;
  const int code = quiltsurv::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string first_line(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  const auto r = cli({"simulate", "--no-such-flag"});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
}

TEST_CASE("missing inputs exit 2") {
  const auto dir = scratch("cli_missing");
  CHECK(cli({"evaluate", "--predictions", (dir / "absent.csv").string(), "--out", (dir / "m.json").string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("end-to-end smoke run") {
  const auto dir = scratch("cli_smoke");
  auto p = [&](const char* f) { return (dir / f).string(); };
  REQUIRE(cli({"simulate", "--out", p("eps.jsonl"), "--manifest", p("truth.json"), "--n", "5000", "--seed", "3"}).code == 0);
  REQUIRE(cli({"train", "--episodes", p("eps.jsonl"), "--model", p("truth.json"), "--out", p("ck"), "--log",
               p("log.csv"), "--epochs", "3", "--seed", "3"})
              .code == 0);
  CHECK(first_line(dir / "log.csv") == "epoch,mean_loss,lr,stagnation,improved,skipped_steps");
  REQUIRE(cli({"predict", "--checkpoint", p("ck"), "--episodes", p("eps.jsonl"), "--out", p("pred.csv")}).code == 0);
  REQUIRE(cli({"evaluate", "--predictions", p("pred.csv"), "--out", p("metrics.json"), "--resamples", "100"}).code == 0);
  std::ifstream in(dir / "metrics.json");
  const auto metrics = nlohmann::json::parse(in);
  REQUIRE(metrics.at("metrics").size() == 2);
  for (const auto& m : metrics.at("metrics")) {
    CHECK(std::isfinite(m.at("auroc").get<double>()));
    CHECK(std::isfinite(m.at("auprc").get<double>()));
    CHECK(std::isfinite(m.at("auroc_bootstrap_sd").get<double>()));
  }

  REQUIRE(cli({"effects", "--checkpoint", p("ck"), "--out", p("effects.csv"), "--draws", "20", "--baseline",
               p("base.csv"), "--coefficients", p("coef.csv"), "--thresholds", p("thr.csv")})
              .code == 0);
  const auto header = first_line(dir / "effects.csv");
  for (int i = 0; i < 4; ++i)
    for (int k = 1; k <= 5; ++k) {
      const auto suffix = "_i" + std::to_string(i) + "_k" + std::to_string(k);
      CHECK(header.find("mean" + suffix) != std::string::npos);
      CHECK(header.find("sd" + suffix) != std::string::npos);
    }
  std::ifstream eff(dir / "effects.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(eff, line);) ++lines;
  CHECK(lines == 1 + 26 * 32 * 3);
  fs::remove_all(dir);
}

TEST_CASE("quantize and history subcommands") {
  const auto dir = scratch("cli_features");
  auto p = [&](const char* f) { return (dir / f).string(); };
  {
    std::ofstream t(dir / "table.csv");
    t << "los,age\n";
    for (int i = 0; i < 50; ++i) t << (i % 9) << ',' << 60 + i % 30 << '\n';
    std::ofstream c(dir / "counts.csv");
    c << "h0,h1,h2,h3\n";
    for (int i = 0; i < 60; ++i) c << i % 3 << ',' << (i % 5) * 2 << ',' << i % 2 << ',' << (i * 7) % 4 << '\n';
  }
  REQUIRE(cli({"quantize", "fit", "--table", p("table.csv"), "--out", p("map.json")}).code == 0);
  REQUIRE(cli({"quantize", "apply", "--table", p("table.csv"), "--map", p("map.json"), "--out", p("bin.csv")}).code == 0);
  CHECK(first_line(dir / "bin.csv").find("los>=") != std::string::npos);
  REQUIRE(cli({"history", "fit", "--counts", p("counts.csv"), "--out", p("enc.json"), "--latent-dim", "2"}).code == 0);
  REQUIRE(cli({"history", "encode", "--counts", p("counts.csv"), "--encoder", p("enc.json"), "--out", p("groups.csv")}).code == 0);
  fs::remove_all(dir);
}
