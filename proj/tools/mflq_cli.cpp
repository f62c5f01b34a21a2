#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mflq/costs.hpp"
#include "mflq/errors.hpp"
#include "mflq/io.hpp"
#include "mflq/model.hpp"
#include "mflq/riccati_feedback.hpp"
#include "mflq/riccati_openloop.hpp"
#include "mflq/simulator.hpp"
#include "mflq/strategy.hpp"

namespace {

using namespace mflq;

ModelParams load_or_default(const std::string& model_path) {
  if (model_path.empty()) return table1_model();
  ModelParams p = load_model(model_path);
  const auto problems = validate(p);
  if (!problems.empty()) {
    std::string msg = model_path + ": invalid model";
    for (const auto& line : problems) msg += "\n  " + line;
    throw ValidationError(msg);
  }
  return p;
}

std::string echo_command(int argc, char** argv) {
  std::string cmd;
  for (int i = 0; i < argc; ++i) {
    if (i) cmd += ' ';
    cmd += argv[i];
  }
  return cmd;
}

void print_block(const std::string& name, const Mat& m) {
  if (m.rows() == 1 && m.cols() == 1) {
    std::printf("  %-6s %s\n", name.c_str(), format_double(m(0, 0)).c_str());
    return;
  }
  std::printf("  %s =\n", name.c_str());
  for (int r = 0; r < m.rows(); ++r) {
    std::printf("   ");
    for (int c = 0; c < m.cols(); ++c) std::printf(" % .12e", m(r, c));
    std::printf("\n");
  }
}

int run_solve(const std::string& model_path, const std::string& mode, int solver_steps,
              const std::string& out_dir) {
  const ModelParams p = load_or_default(model_path);
  const int K = solver_steps > 0 ? solver_steps : p.grid_steps;

  if (mode == "ol" || mode == "both") {
    const OpenLoopFollowerSolution fol = solve_follower_system(p, K);
    const StackedLeaderSolution leader = solve_leader_stacked(p, fol, K);
    std::printf("open-loop blocks at t = 0 (K = %d):\n", K);
    print_block("K", fol.K(0));
    print_block("Kbar", fol.Kbar(0));
    print_block("P", fol.P(0));
    print_block("Pbar", fol.Pbar(0));
    print_block("P0", fol.P0(0));
    print_block("Pcal", leader.Pcal.block(0, 0));
    std::printf("  staggered residual %s\n",
                format_double(leader.staggered_residual).c_str());
    if (!fol.solvability_ok) {
      std::printf("  solvability notes:\n");
      for (const auto& note : fol.solvability_notes) std::printf("    %s\n", note.c_str());
    }
  }
  if (mode == "fb" || mode == "both") {
    const FeedbackSolution fb = solve_feedback_joint(p, K);
    std::printf("feedback blocks at t = 0 (K = %d):\n", K);
    print_block("M", fb.M(0));
    print_block("Mbar", fb.Mbar(0));
    print_block("M0", fb.M0(0));
    print_block("Lam0", fb.Lam0(0));
    print_block("Lambar", fb.Lambar(0));
    print_block("Th1", fb.Th1(0));
    print_block("Th2", fb.Th2(0));
    print_block("Th3", fb.Th3(0));
  }
  if (!out_dir.empty()) {
    SimConfig cfg;
    cfg.sim_steps = std::min(cfg.sim_steps, K);
    const auto files = write_paper_bundle(p, out_dir, cfg, K, "mflq solve");
    std::printf("wrote %zu files under %s\n", files.size(), out_dir.c_str());
  }
  return 0;
}

SimConfig sim_config_from_flags(int N, int paths, int sim_steps, int store_every,
                                std::uint64_t seed, bool antithetic) {
  SimConfig cfg;
  if (N > 0) cfg.N = N;
  if (paths > 0) cfg.paths = paths;
  if (sim_steps > 0) cfg.sim_steps = sim_steps;
  if (store_every > 0) cfg.store_every = store_every;
  cfg.seed = seed;
  cfg.antithetic = antithetic;
  return cfg;
}

int run_simulate(const std::string& model_path, const std::string& mode, int solver_steps,
                 const SimConfig& cfg, const std::string& out_dir,
                 const std::string& command) {
  const ModelParams p = load_or_default(model_path);
  const int K = solver_steps > 0 ? solver_steps : p.grid_steps;

  CostReport report;
  Ensemble ens;
  if (mode == "ol") {
    const OpenLoopFollowerSolution fol = solve_follower_system(p, K);
    const StackedLeaderSolution leader = solve_leader_stacked(p, fol, K);
    const OpenLoopPolicy pol = build_openloop_policy(p, fol, leader);
    ens = simulate_openloop(p, pol, cfg);
    report = cost_report_openloop(p, fol, leader, ens);
  } else {
    const FeedbackSolution fb = solve_feedback_joint(p, K);
    const FeedbackPolicy pol = build_feedback_policy(p, fb);
    ens = simulate_feedback(p, pol, cfg);
    report = cost_report_feedback(p, fb, ens);
  }
  std::printf("%s\n", cost_report_to_json(report).dump(2).c_str());

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    nlohmann::json manifest = manifest_template(p, command);
    manifest["config"] = {{"sim", sim_config_to_json(cfg)}, {"solver_steps", K},
                          {"mode", mode}};
    manifest["results"][report.mode] = cost_report_to_json(report);
    const std::string bin = (fs::path(out_dir) / "ensemble.bin").string();
    write_ensemble_binary(bin, ens);
    const std::string content = read_file(bin);
    manifest["outputs"]["ensemble.bin"] = {{"bytes", content.size()},
                                           {"fnv1a64", to_hex64(fnv1a64(content))}};
    write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    std::printf("wrote %s and manifest.json\n", bin.c_str());
  }
  return 0;
}

int run_converge(const std::string& model_path, const std::string& mode,
                 const std::string& kind, int solver_steps, std::vector<int> Ns,
                 const SimConfig& cfg) {
  const ModelParams p = load_or_default(model_path);
  const int K = solver_steps > 0 ? solver_steps : p.grid_steps;

  ConvergenceStudy study;
  if (kind == "riccati") {
    if (Ns.empty()) Ns = {10, 20, 40, 80, 160};
    const FeedbackSolution fb = solve_feedback_joint(p, K);
    study = riccati_gap_study(p, fb, Ns, K);
  } else {
    if (Ns.empty()) Ns = {25, 50, 100, 200, 400};
    if (mode == "ol") {
      const OpenLoopFollowerSolution fol = solve_follower_system(p, K);
      const StackedLeaderSolution leader = solve_leader_stacked(p, fol, K);
      const OpenLoopPolicy pol = build_openloop_policy(p, fol, leader);
      study = meanfield_gap_study_openloop(p, pol, cfg, Ns);
    } else {
      const FeedbackSolution fb = solve_feedback_joint(p, K);
      const FeedbackPolicy pol = build_feedback_policy(p, fb);
      study = meanfield_gap_study_feedback(p, pol, cfg, Ns);
    }
  }
  std::printf("%s\n", convergence_to_json(study).dump(2).c_str());
  return 0;
}

int run_reproduce(const std::string& model_path, const std::string& out_dir,
                  int solver_steps, const std::string& command) {
  const ModelParams p = load_or_default(model_path);
  const int K = solver_steps > 0 ? solver_steps : p.grid_steps;
  const SimConfig cfg;
  const auto files = write_paper_bundle(p, out_dir, cfg, K, command);
  for (const auto& f : files) std::printf("%s\n", f.c_str());
  return 0;
}

int run_rerun(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  const nlohmann::json manifest = read_manifest(manifest_path);
  if (!manifest.contains("schema") || manifest["schema"] != "mflq-manifest-v1") {
    throw ValidationError(manifest_path + ": not an mflq manifest");
  }
  if (!manifest.contains("model") || !manifest.contains("config") ||
      !manifest["config"].contains("sim") || !manifest["config"].contains("solver_steps")) {
    throw ValidationError(manifest_path + ": manifest lacks model or config sections");
  }

  const ModelParams p = parse_model(manifest["model"].dump(), manifest_path + "#model");
  const nlohmann::json& sj = manifest["config"]["sim"];
  SimConfig cfg;
  cfg.N = sj.value("N", cfg.N);
  cfg.paths = sj.value("paths", cfg.paths);
  cfg.sim_steps = sj.value("sim_steps", cfg.sim_steps);
  cfg.store_every = sj.value("store_every", cfg.store_every);
  cfg.seed = sj.value("seed", cfg.seed);
  cfg.antithetic = sj.value("antithetic", cfg.antithetic);
  cfg.realized_leader_in_follower_control =
      sj.value("realized_leader_in_follower_control", cfg.realized_leader_in_follower_control);
  cfg.store_followers = sj.value("store_followers", cfg.store_followers);
  const int K = manifest["config"]["solver_steps"].get<int>();

  const std::string scratch =
      (fs::temp_directory_path() /
       ("mflq-rerun-" + manifest.value("model_hash", std::string("model")))).string();
  fs::remove_all(scratch);
  const auto files = write_paper_bundle(p, scratch, cfg, K,
                                        manifest.value("command", std::string()));
  const nlohmann::json redone = read_manifest(files.back());

  if (manifests_equal_ignoring_timings(manifest, redone)) {
    std::printf("rerun: outputs reproduce the manifest (%s)\n", manifest_path.c_str());
    fs::remove_all(scratch);
    return 0;
  }
  std::printf("rerun: MISMATCH against %s, fresh outputs kept in %s\n", manifest_path.c_str(),
              scratch.c_str());
  for (const auto& key : {"model", "model_hash", "config", "outputs", "results"}) {
    const bool same = manifest.contains(key) && redone.contains(key) &&
                      manifest[key] == redone[key];
    std::printf("  %-10s %s\n", key, same ? "same" : "DIFFERS");
  }
  throw ValidationError("rerun: manifest does not reproduce");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field leader-follower LQ solver and simulator"};
  app.set_version_flag("--version", "mflq 0.1.0");
  app.require_subcommand(1);

  std::string model_path, mode = "both", kind = "riccati", out_dir, manifest_path;
  int solver_steps = 0, N = 0, paths = 0, sim_steps = 0, store_every = 0;
  std::uint64_t seed = SimConfig{}.seed;
  bool antithetic = false;
  std::vector<int> Ns;

  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", model_path, "model JSON file (defaults to the bundled model)");
    sub->add_option("--solver-steps", solver_steps, "backward grid steps");
  };
  auto add_sim = [&](CLI::App* sub, bool with_N = true) {
    if (with_N) sub->add_option("--N", N, "number of followers");
    sub->add_option("--paths", paths, "Monte-Carlo paths");
    sub->add_option("--steps", sim_steps, "simulation steps");
    sub->add_option("--store-every", store_every, "thinning stride of stored curves");
    sub->add_option("--seed", seed, "RNG seed");
    sub->add_flag("--antithetic", antithetic, "antithetic path pairs");
  };

  CLI::App* solve = app.add_subcommand("solve", "solve the Riccati systems");
  add_model(solve);
  solve->add_option("--mode", mode, "ol, fb or both")
      ->check(CLI::IsMember({"ol", "fb", "both"}));
  solve->add_option("--out", out_dir, "also write the figure bundle here");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte-Carlo under the solved profile");
  add_model(simulate);
  add_sim(simulate);
  simulate->add_option("--mode", mode, "ol or fb")
      ->check(CLI::IsMember({"ol", "fb"}))
      ->required();
  simulate->add_option("--out", out_dir, "write ensemble.bin and manifest.json here");

  CLI::App* converge = app.add_subcommand("converge", "convergence studies in N");
  add_model(converge);
  add_sim(converge, false);
  converge->add_option("--kind", kind, "riccati or meanfield")
      ->check(CLI::IsMember({"riccati", "meanfield"}));
  converge->add_option("--mode", mode, "ol or fb (meanfield kind)")
      ->check(CLI::IsMember({"ol", "fb"}));
  converge->add_option("--N", Ns, "population sizes (repeatable)");

  CLI::App* reproduce = app.add_subcommand("reproduce-paper", "write the full figure bundle");
  add_model(reproduce);
  reproduce->add_option("--out", out_dir, "output directory")->required();

  CLI::App* rerun = app.add_subcommand("rerun", "re-execute a manifest and compare");
  rerun->add_option("--manifest", manifest_path, "manifest.json to reproduce")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(mflq::ExitCode::parse_error);
  }

  try {
    if (solve->parsed()) {
      return run_solve(model_path, mode, solver_steps, out_dir);
    }
    if (simulate->parsed()) {
      const mflq::SimConfig cfg =
          sim_config_from_flags(N, paths, sim_steps, store_every, seed, antithetic);
      return run_simulate(model_path, mode, solver_steps, cfg, out_dir,
                          echo_command(argc, argv));
    }
    if (converge->parsed()) {
      mflq::SimConfig cfg =
          sim_config_from_flags(N, paths, sim_steps, store_every, seed, antithetic);
      if (mode == "both") mode = "fb";
      return run_converge(model_path, mode, kind, solver_steps, Ns, cfg);
    }
    if (reproduce->parsed()) {
      return run_reproduce(model_path, out_dir, solver_steps, echo_command(argc, argv));
    }
    if (rerun->parsed()) {
      return run_rerun(manifest_path);
    }
  } catch (const mflq::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
