#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hybridscope/cli.hpp"
#include "hybridscope/error.hpp"

using namespace hybridscope;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hybridscope_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "hybridscope");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Manifest small(const fs::path& out) {
  Manifest m;
  m.out_dir = out.string();
  m.max_length = 200;
  m.n_lengths = 2;
  m.n_depths = 2;
  m.budget = 24;
  return m;
}

}  // namespace

TEST_CASE("k lists and grids") {
  CHECK(parse_k_list("3") == std::vector<int>{3});
  CHECK(parse_k_list("0,2,5") == std::vector<int>{0, 2, 5});
  CHECK(parse_k_list("0-3") == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(parse_k_list(""), InvalidInput);
  CHECK_THROWS_AS(parse_k_list("3-1"), InvalidInput);
  CHECK_THROWS_AS(parse_k_list("a"), InvalidInput);
  CHECK(parse_grid("10x10") == std::pair{10, 10});
  CHECK(parse_grid("4x2") == std::pair{4, 2});
  CHECK_THROWS_AS(parse_grid("10"), InvalidInput);
  CHECK_THROWS_AS(parse_grid("0x3"), InvalidInput);

  CHECK(sweep_policy("generation", 2).k_generation == 2);
  CHECK(!sweep_policy("generation", 2).k_prefill);
  CHECK(sweep_policy("prefill", 1).k_prefill == 1);
  CHECK(sweep_policy("both", 0).k_generation == 0);
  CHECK(sweep_policy("both", 0).k_prefill == 0);
  CHECK_THROWS_AS(sweep_policy("decode", 1), InvalidInput);
}

TEST_CASE("exit codes") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({"niah", "--policy", "Keep"}) == 2);
  CHECK(run({"niah", "--grid", "oops"}) == 2);
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({"render", "/nonexistent/map.csv", "/tmp/x.svg"}) == 3);
  const fs::path dir = scratch("exit");
  std::ofstream(dir / "bad.csv") << "length_tokens,depth_pct,score\n1,2\n";
  CHECK(run({"render", (dir / "bad.csv").string(), (dir / "x.svg").string()}) == 2);
  std::ofstream(dir / "bad.bin") << "nope";
  CHECK(run({"niah", "--weights", (dir / "bad.bin").string(), "--grid", "1x1", "--max-len", "120",
             "--out", dir.string()}) == 2);
}

TEST_CASE("sweep writes one row per phase and k") {
  const fs::path out = scratch("sweep");
  const auto rows = cmd_sweep_k(small(out));
  CHECK(rows.size() == 10);
  CHECK(rows.front().phase == "generation");
  CHECK(rows.front().k == 0);
  CHECK(rows.front().accuracy == 0.0);
  CHECK(rows[1].accuracy == 1.0);
  const std::string summary = slurp(out / "sweep_k" / "summary.csv");
  CHECK(summary.rfind("phase,k,accuracy\n", 0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 11);
  CHECK(fs::exists(out / "sweep_k" / "generation_k0.csv"));
  CHECK(fs::exists(out / "sweep_k" / "both_k4.svg"));

  const fs::path again = scratch("sweep2");
  cmd_sweep_k(small(again));
  CHECK(slurp(again / "sweep_k" / "summary.csv") == summary);
  CHECK(slurp(again / "sweep_k" / "both_k2.csv") == slurp(out / "sweep_k" / "both_k2.csv"));
}

TEST_CASE("mcq writes one row per k") {
  const fs::path out = scratch("mcq");
  Manifest m = small(out);
  m.mcq_items = 40;
  m.k_values = {0, 2, 4};
  const auto rows = cmd_mcq(m);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].accuracy == 1.0);
  CHECK(rows[2].accuracy == 1.0);
  const std::string summary = slurp(out / "mcq" / "summary.csv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 4);
}

TEST_CASE("render is byte-stable and save-model round-trips") {
  const fs::path dir = scratch("render");
  std::ofstream(dir / "m.csv") << "length_tokens,depth_pct,score\n100,100,5\n100,0,1\n";
  REQUIRE(run({"render", (dir / "m.csv").string(), (dir / "a.svg").string()}) == 0);
  REQUIRE(run({"render", (dir / "m.csv").string(), (dir / "b.svg").string()}) == 0);
  CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));
  CHECK(!slurp(dir / "a.svg").empty());

  REQUIRE(run({"save-model", "--preset", "rg2b-toy", (dir / "toy.bin").string()}) == 0);
  CHECK(run({"niah", "--weights", (dir / "toy.bin").string(), "--grid", "1x1", "--max-len", "120", "--budget",
             "2", "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "niah" / "map.csv"));
}
