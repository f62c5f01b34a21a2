#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mflq/errors.hpp"
#include "mflq/io.hpp"
#include "test_models.hpp"

using namespace mflq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path root;
  TempDir() : root(fs::temp_directory_path() / fs::path("mflq-test-" + std::to_string(::getpid()))) {
    fs::create_directories(root);
  }
  ~TempDir() { fs::remove_all(root); }
  std::string file(const std::string& name) const { return (root / name).string(); }
};

Ensemble tiny_ensemble() {
  const ModelParams p = table1_model();
  const OpenLoopFollowerSolution fol = solve_follower_system(p, 200);
  const StackedLeaderSolution leader = solve_leader_stacked(p, fol, 200);
  const OpenLoopPolicy pol = build_openloop_policy(p, fol, leader);
  SimConfig cfg;
  cfg.N = 3;
  cfg.paths = 2;
  cfg.sim_steps = 20;
  cfg.store_every = 5;
  cfg.seed = 99;
  cfg.store_followers = true;
  return simulate_openloop(p, pol, cfg);
}

bool same_vec(const Vec& a, const Vec& b) {
  return a.size() == b.size() && (a.size() == 0 || inf_norm((a - b).eval()) == 0.0);
}

bool same_mat(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || inf_norm(a - b) == 0.0);
}

}  // namespace

TEST_CASE("atomic write replaces content and leaves no temporary behind") {
  TempDir dir;
  const std::string path = dir.file("note.txt");
  atomic_write(path, "first\n");
  CHECK(read_file(path) == "first\n");
  atomic_write(path, "second\n");
  CHECK(read_file(path) == "second\n");
  CHECK(!fs::exists(path + ".tmp"));

  const std::string nested = dir.file("sub/dir/note.txt");
  atomic_write(nested, "deep");
  CHECK(read_file(nested) == "deep");

  CHECK_THROWS_AS(read_file(dir.file("missing.txt")), ParseError);
}

TEST_CASE("format_double writes shortest round-tripping decimals") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(-0.5) == "-0.5");
  const double third = 1.0 / 3.0;
  CHECK(std::stod(format_double(third)) == third);
  const double tiny = 6.1e-17;
  CHECK(std::stod(format_double(tiny)) == tiny);
}

TEST_CASE("csv files are plain LF text with one header row") {
  TempDir dir;
  const std::string path = dir.file("table.csv");
  write_csv(path, {"t", "value"}, {{0.0, 1.5}, {0.5, -2.0}});
  CHECK(read_file(path) == "t,value\n0,1.5\n0.5,-2\n");

  CHECK_THROWS_AS(write_csv(path, {"t"}, {{0.0, 1.0}}), ValidationError);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64(std::string{}) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(std::string{"a"}) == 0xaf63dc4c8601ec8cULL);
  CHECK(to_hex64(0xcbf29ce484222325ULL) == "cbf29ce484222325");
}

TEST_CASE("model hashes are stable and sensitive") {
  const ModelParams p = table1_model();
  const std::string h = model_hash(p);
  CHECK(h.size() == 16);
  CHECK(h == model_hash(table1_model()));

  ModelParams q = p;
  q.leader_dyn.A0(0, 0) += 1e-9;
  CHECK(model_hash(q) != h);
}

TEST_CASE("manifest comparison ignores only the timing section") {
  const ModelParams p = table1_model();
  nlohmann::json a = manifest_template(p, "mflq solve --mode both");
  CHECK(a["schema"] == "mflq-manifest-v1");
  CHECK(a["model_hash"] == model_hash(p));

  nlohmann::json b = a;
  b["timings"]["solve_ms"] = 123.4;
  CHECK(manifests_equal_ignoring_timings(a, b));

  b["results"]["extra"] = 1;
  CHECK(!manifests_equal_ignoring_timings(a, b));
}

TEST_CASE("manifest files survive a write and read cycle") {
  TempDir dir;
  const ModelParams p = table1_model();
  nlohmann::json m = manifest_template(p, "mflq test");
  m["results"]["answer"] = 42;
  const std::string path = dir.file("manifest.json");
  write_manifest(path, m);
  CHECK(read_manifest(path) == m);

  atomic_write(dir.file("bad.json"), "{not json");
  CHECK_THROWS_AS(read_manifest(dir.file("bad.json")), ParseError);
}

TEST_CASE("svg charts are self-contained and deterministic") {
  TempDir dir;
  SvgSeries s1{"empirical", "#1f77b4", {1.0, 2.0, 4.0}, {0.1, 0.05, 0.02}};
  SvgSeries s2{"reference", "#d62728", {1.0, 2.0, 4.0}, {0.12, 0.06, 0.03}};
  const std::string path = dir.file("chart.svg");
  write_svg_chart(path, "gap against N", "N", "gap", {s1, s2}, true, true);
  const std::string body = read_file(path);
  CHECK(body.find("<svg") != std::string::npos);
  CHECK(body.find("polyline") != std::string::npos);
  CHECK(body.find("gap against N") != std::string::npos);
  CHECK(body.find("</svg>") != std::string::npos);

  write_svg_chart(dir.file("chart2.svg"), "gap against N", "N", "gap", {s1, s2}, true, true);
  CHECK(read_file(dir.file("chart2.svg")) == body);
}

TEST_CASE("ensemble binaries round trip exactly") {
  TempDir dir;
  const Ensemble ens = tiny_ensemble();
  const std::string path = dir.file("ensemble.bin");
  write_ensemble_binary(path, ens);
  const Ensemble back = read_ensemble_binary(path);

  CHECK(back.cfg.N == ens.cfg.N);
  CHECK(back.cfg.paths == ens.cfg.paths);
  CHECK(back.cfg.sim_steps == ens.cfg.sim_steps);
  CHECK(back.cfg.store_every == ens.cfg.store_every);
  CHECK(back.cfg.seed == ens.cfg.seed);
  CHECK(back.cfg.antithetic == ens.cfg.antithetic);
  CHECK(back.cfg.store_followers == ens.cfg.store_followers);

  CHECK(back.times == ens.times);
  CHECK(back.gap_sq == ens.gap_sq);
  CHECK(back.J0_path == ens.J0_path);
  CHECK(back.Jsoc_path == ens.Jsoc_path);
  CHECK(back.sT_integrand == ens.sT_integrand);

  REQUIRE(back.mean_x0.size() == ens.mean_x0.size());
  for (std::size_t k = 0; k < ens.mean_x0.size(); ++k) {
    CHECK(same_vec(back.mean_x0[k], ens.mean_x0[k]));
    CHECK(same_vec(back.mean_xN[k], ens.mean_xN[k]));
    CHECK(same_vec(back.mean_xbar[k], ens.mean_xbar[k]));
  }
  REQUIRE(back.followers_stored.size() == ens.followers_stored.size());
  for (std::size_t pth = 0; pth < ens.followers_stored.size(); ++pth) {
    REQUIRE(back.followers_stored[pth].size() == ens.followers_stored[pth].size());
    for (std::size_t k = 0; k < ens.followers_stored[pth].size(); ++k) {
      CHECK(same_vec(back.x0_stored[pth][k], ens.x0_stored[pth][k]));
      CHECK(same_vec(back.xbar_stored[pth][k], ens.xbar_stored[pth][k]));
      CHECK(same_mat(back.followers_stored[pth][k], ens.followers_stored[pth][k]));
    }
  }
}

TEST_CASE("corrupt ensemble binaries are rejected") {
  TempDir dir;
  const Ensemble ens = tiny_ensemble();
  const std::string path = dir.file("ensemble.bin");
  write_ensemble_binary(path, ens);

  std::string bytes = read_file(path);
  std::string wrong = bytes;
  wrong[0] = 'X';
  atomic_write(dir.file("magic.bin"), wrong);
  CHECK_THROWS_AS(read_ensemble_binary(dir.file("magic.bin")), ParseError);

  atomic_write(dir.file("short.bin"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_ensemble_binary(dir.file("short.bin")), ParseError);
}

TEST_CASE("the figure bundle is complete and reproducible") {
  TempDir dir;
  const ModelParams p = table1_model();
  SimConfig cfg;
  cfg.N = 5;
  cfg.paths = 4;
  cfg.sim_steps = 100;
  cfg.store_every = 10;
  cfg.seed = 4242;

  const std::vector<std::string> first =
      write_paper_bundle(p, dir.file("one"), cfg, 200, "mflq test-bundle");
  REQUIRE(first.size() == 9);
  CHECK(fs::path(first.back()).filename() == "manifest.json");
  const std::vector<std::string> expected = {
      "riccati_openloop.csv", "riccati_openloop.svg", "riccati_feedback.csv",
      "riccati_feedback.svg", "trajectories.csv",     "trajectories.svg",
      "convergence.csv",      "convergence.svg",      "manifest.json"};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(fs::path(first[i]).filename() == expected[i]);
    CHECK(fs::exists(first[i]));
  }

  const std::vector<std::string> second =
      write_paper_bundle(p, dir.file("two"), cfg, 200, "mflq test-bundle");
  for (std::size_t i = 0; i + 1 < first.size(); ++i) {
    CHECK(read_file(first[i]) == read_file(second[i]));
  }
  CHECK(manifests_equal_ignoring_timings(read_manifest(first.back()), read_manifest(second.back())));
}
