#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using dmcl::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "dmcl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("dmcl_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("cli help and usage errors") {
  CHECK(invoke({"--help"}).code == 0);
  for (const char* sub : {"gradcheck", "synth", "theory", "train", "eval", "density", "compare"}) {
    const auto r = invoke({sub, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find(sub) != std::string::npos);
  }
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"gradcheck", "--bogus"}).code == 2);
  CHECK(invoke({"train"}).code == 2);
  CHECK(invoke({"eval", "--data", "x", "--untrained", "--checkpoint", "y"}).code == 2);
  CHECK(invoke({"theory", "--encoder", "fancy"}).code == 2);
  CHECK(invoke({"train", "--data", "x", "--mode", "nonsense"}).code == 2);
}

TEST_CASE("cli gradcheck and theory") {
  const auto dir = fresh("gradcheck");
  CHECK(invoke({"gradcheck", "--seed", "7", "--instances", "2", "--out-dir", dir.string()}).code == 0);
  const std::string csv = slurp(dir / "gradcheck.csv");
  CHECK(csv.find("train_step") != std::string::npos);

  CHECK(invoke({"theory", "--rho", "0", "--dim", "16", "--samples", "200", "--out-dir", dir.string()}).code == 0);
  std::istringstream lines(slurp(dir / "theory.csv"));
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header.starts_with("rho,expected,empirical"));
  CHECK(row.starts_with("0,1,1,"));
  fs::remove_all(dir);
}

TEST_CASE("cli data errors") {
  const auto r = invoke({"eval", "--data", "/nonexistent/dmcl", "--untrained"});
  CHECK(r.code == 3);
  CHECK(r.err.find("/nonexistent/dmcl") != std::string::npos);

  const auto dir = fresh("config");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"stepz": 3})";
  CHECK(invoke({"synth", "--config", (dir / "bad.json").string(), "--out-dir", dir.string()}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli pipeline is byte-reproducible") {
  const auto base = fresh("pipeline");
  auto pipeline = [&](const std::string& name) {
    const auto dir = base / name;
    const auto data = (dir / "data").string();
    fs::create_directories(dir);
    const auto cfg = (dir / "small.json").string();
    std::ofstream(cfg) << R"({"batch_size": 8, "eval_every": 5})";
    REQUIRE(invoke({"synth", "--dim", "8", "--intents", "24", "--intent-rank", "4", "--corpus", "40", "--rounds", "2",
                    "--out-dir", data})
                .code == 0);
    const auto trained = invoke({"train", "--data", data, "--steps", "10", "--config", cfg, "--out-dir", dir.string()});
    INFO(trained.err);
    REQUIRE(trained.code == 0);
    REQUIRE(invoke({"eval", "--data", data, "--out-dir", dir.string()}).code == 0);
    REQUIRE(invoke({"density", "--pairs", (dir / "pairs.jsonl").string(), "--bins", "8", "--out-dir", dir.string()}).code ==
            0);
    return dir;
  };
  const auto a = pipeline("a"), b = pipeline("b");
  for (const char* f : {"trace.csv", "model.ckpt", "report.csv", "report.csv.meta.json", "density.csv", "config.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "report.csv").starts_with("round,hits_at_k,n_instances\n"));

  const auto data = (a / "data").string();
  const auto cmp = invoke({"compare", "--data", data, "--steps", "3", "--modes", "text_only_nce,text_only_nce",
                           "--out-dir", (base / "cmp").string()});
  // compare has no --steps flag of its own; steps come from the config.
  CHECK(cmp.code == 2);
  const auto cmp_ok = invoke({"compare", "--data", data, "--modes", "text_only_nce", "--config",
                              (a / "config.json").string(), "--out-dir", (base / "cmp").string()});
  CHECK(cmp_ok.code == 0);
  CHECK(slurp(base / "cmp" / "compare.csv").starts_with("mode,hits_at_10,"));
  fs::remove_all(base);
}

TEST_CASE("installed binary runs") {
  const std::string cmd = std::string("\"") + DMCL_BINARY + "\" --help > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
}
