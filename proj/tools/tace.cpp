// Experiment driver: seeded training runs, cross-seed aggregation,
// the performance-bound verification suite, and heatmap export.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <future>
#include <iostream>
#include <mutex>

#include "tace/config.hpp"
#include "tace/env_io.hpp"
#include "tace/io.hpp"
#include "tace/tcmae.hpp"
#include "tace/theory.hpp"
#include "tace/trainer.hpp"

namespace fs = std::filesystem;
using namespace tace;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(std::stoull(part));
    } else {
      const auto lo = std::stoull(part.substr(0, dots));
      const auto hi = std::stoull(part.substr(dots + 2));
      TACE_REQUIRE(hi >= lo, "seed range must be ascending");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
  }
  TACE_REQUIRE(!seeds.empty(), "no seeds given");
  return seeds;
}

std::string seed_stem(const RunSpec& spec, std::uint64_t seed) {
  return to_string(spec.algorithm) + "_" + spec.env_name + "_seed" +
         std::to_string(seed);
}

void write_manifest(const RunSpec& spec, const TrainConfig& cfg,
                    std::uint64_t seed, const std::string& path) {
  nlohmann::json manifest;
  manifest["algorithm"] = to_string(spec.algorithm);
  manifest["env"] = spec.env_name;
  manifest["seed"] = seed;
  nlohmann::json effective = config_to_json(cfg);
  manifest["config"] = effective;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a_hash(effective.dump())));
  manifest["config_hash"] = hex;
  manifest["git_revision"] = git_revision();
  std::ofstream out(path);
  out << manifest.dump(2) << '\n';
}

struct SeedResult {
  double final_success = 0.0;
  double final_return = 0.0;
  bool failed = false;
  std::string error;
};

// One seeded single-agent run with all artifacts.
SeedResult run_single_agent(const RunSpec& spec, std::uint64_t seed,
                            bool quiet) {
  SeedResult result;
  Preset preset = load_preset(spec.env_name, spec.config_path);
  preset.train.seed = seed;
  const std::string stem = seed_stem(spec, seed);
  const fs::path dir(spec.output_dir);
  const int heatmap_every = std::max(1, preset.train.max_iterations / 10);

  MetricsWriter metrics((dir / ("metrics_" + stem + ".csv")).string(), false);
  write_manifest(spec, preset.train, seed,
                 (dir / ("manifest_" + stem + ".json")).string());

  TcppoTrainer<GridWorld> trainer(preset.env.grid, preset.train,
                                  is_constrained(spec.algorithm));
  const auto start = std::chrono::steady_clock::now();
  double last_success = 0.0, last_return = 0.0;
  try {
    trainer.run([&](const IterationStats& s) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        start)
              .count();
      metrics.row(s, wall);
      last_success = s.success_rate;
      last_return = s.mean_return;
      if ((s.iteration + 1) % heatmap_every == 0) {
        write_heatmap_csv(trainer.visitation(),
                          (dir / ("heatmap_" + stem + "_iter" +
                                  std::to_string(s.iteration + 1) + ".csv"))
                              .string());
      }
      if (!quiet && (s.iteration + 1) % 20 == 0)
        std::cout << stem << " iter " << s.iteration + 1 << " return "
                  << s.mean_return << " success " << s.success_rate
                  << " sigma " << s.sigma << " phase " << s.phase << "\n";
    });
  } catch (const NumericError& e) {
    // partial artifacts stay on disk
    result.failed = true;
    result.error = e.what();
  }
  metrics.flush();
  write_heatmap_csv(trainer.visitation(),
                    (dir / ("heatmap_" + stem + "_final.csv")).string());
  save_checkpoint(trainer.policy().net,
                  (dir / ("policy_" + stem + ".bin")).string());
  save_checkpoint(trainer.value_net(),
                  (dir / ("value_" + stem + ".bin")).string());
  if (!trainer.memory().empty())
    save_memory_jsonl(trainer.memory(),
                      (dir / ("memory_" + stem + ".jsonl")).string());
  result.final_success = last_success;
  result.final_return = last_return;
  return result;
}

SeedResult run_multi_agent(const RunSpec& spec, std::uint64_t seed,
                           bool quiet) {
  SeedResult result;
  Preset preset = load_preset(spec.env_name, spec.config_path);
  preset.train.seed = seed;
  const std::string stem = seed_stem(spec, seed);
  const fs::path dir(spec.output_dir);

  MetricsWriter metrics((dir / ("metrics_" + stem + ".csv")).string(), true);
  write_manifest(spec, preset.train, seed,
                 (dir / ("manifest_" + stem + ".json")).string());

  TcmaeTrainer trainer(preset.env.mpe, preset.train,
                       is_constrained(spec.algorithm));
  const auto start = std::chrono::steady_clock::now();
  // best-so-far team snapshot by trailing optimal-goal share; the shared
  // trajectory repulsion keeps moving, so the last iterate is not
  // necessarily the best team
  std::vector<Mlp> best_team;
  double best_share = 0.0;
  auto snapshot_if_better = [&]() {
    const double share = trainer.recent_optimal_share();
    if (share > best_share) {
      best_share = share;
      best_team.clear();
      for (const auto& slot : trainer.team())
        best_team.push_back(slot.policy.net);
    }
  };
  try {
    for (int iter = 0; iter < preset.train.max_iterations; ++iter) {
      const auto stats = trainer.iterate();
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        start)
              .count();
      for (std::size_t k = 0; k < trainer.team().size(); ++k) {
        metrics.row(stats.iteration, stats.team_mean_return,
                    stats.team_success_rate, stats.mean_raw_mmd[k],
                    stats.sigma[k], 0, static_cast<int>(k), wall);
      }
      result.final_success = stats.team_success_rate;
      result.final_return = stats.team_mean_return;
      snapshot_if_better();
      if (!quiet && (iter + 1) % 20 == 0)
        std::cout << stem << " iter " << iter + 1 << " team return "
                  << stats.team_mean_return << " team success "
                  << stats.team_success_rate << "\n";
      if (trainer.recent_optimal_share() >= preset.train.convergence_threshold)
        break;
    }
  } catch (const NumericError& e) {
    result.failed = true;
    result.error = e.what();
  }
  metrics.flush();
  write_heatmap_csv(trainer.visitation(),
                    (dir / ("heatmap_" + stem + "_final.csv")).string());
  for (std::size_t k = 0; k < trainer.team().size(); ++k) {
    const Mlp& net =
        best_team.empty() ? trainer.team()[k].policy.net : best_team[k];
    save_checkpoint(net, (dir / ("policy_" + stem + "_agent" +
                                 std::to_string(k) + ".bin"))
                             .string());
    save_checkpoint(trainer.team()[k].policy.net,
                    (dir / ("policy_" + stem + "_agent" + std::to_string(k) +
                            "_last.bin"))
                        .string());
  }
  result.final_success = std::max(result.final_success, best_share);
  return result;
}

int cmd_run(const RunSpec& spec, bool quiet) {
  fs::create_directories(spec.output_dir);
  const int cap = tace_thread_cap();
  std::vector<std::future<void>> jobs;
  std::vector<SeedResult> results(spec.seeds.size());
  std::atomic<std::size_t> next{0};
  const int workers =
      std::min<int>(cap, static_cast<int>(spec.seeds.size()));
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < spec.seeds.size();
         i = next.fetch_add(1)) {
      results[i] = is_multi_agent(spec.algorithm)
                       ? run_multi_agent(spec, spec.seeds[i], quiet)
                       : run_single_agent(spec, spec.seeds[i], quiet);
    }
  };
  if (workers > 1) {
    for (int w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, worker));
    for (auto& j : jobs) j.get();
  } else {
    worker();
  }

  bool any_failed = false;
  double mean_success = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].failed) {
      any_failed = true;
      std::cerr << "seed " << spec.seeds[i]
                << " failed: " << results[i].error << "\n";
    }
    mean_success += results[i].final_success;
  }
  mean_success /= results.size();
  std::cout << "runs complete: " << spec.seeds.size() << " seed(s), mean final success "
            << mean_success << ", artifacts in " << spec.output_dir << "\n";
  return any_failed ? 2 : 0;
}

int cmd_verify(int samples, const std::vector<double>& gammas,
               std::uint64_t seed, const std::string& out_path) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    TACE_REQUIRE(file.good(), "verify: cannot write " + out_path);
    out = &file;
  }
  Rng rng(seed);
  long violations = 0;
  *out << "gamma,instance,d_minus,delta_l,d_plus,theorem1_holds,"
          "corollary1_holds,lemma3_holds,tvkl_holds\n";
  for (double gamma : gammas) {
    for (int i = 0; i < samples; ++i) {
      const int s = 2 + rng.uniform_int(7);
      const int a = 2 + rng.uniform_int(3);
      TabularMDP mdp = random_mdp(rng, s, a, gamma);
      TabularPolicy pi = random_policy(rng, s, a);
      TabularPolicy pi_new = perturbed_policy(rng, pi, rng.uniform());
      const double sigma = rng.uniform(0.0, 2.0);
      const Vec f = combined_value_function(mdp, pi, sigma);
      const BoundReport t1 = check_theorem1(mdp, pi, pi_new, sigma, f);
      const Corollary1Report c1 = check_corollary1(mdp, pi, pi_new, sigma);
      const Lemma3Report l3 = check_lemma3(mdp, pi, pi_new);
      bool tvkl = true;
      for (int st = 0; st < s; ++st) {
        const Vec p = pi_new.probs.row(st).transpose();
        const Vec q = pi.probs.row(st).transpose();
        if (tv_distance(p, q) >
            std::sqrt(kl_divergence(p, q) / 2.0) + 1e-12)
          tvkl = false;
      }
      if (!t1.holds || !c1.holds || !l3.holds || !tvkl) ++violations;
      *out << gamma << ',' << i << ',' << t1.d_minus << ',' << t1.delta_l
           << ',' << t1.d_plus << ',' << (t1.holds ? 1 : 0) << ','
           << (c1.holds ? 1 : 0) << ',' << (l3.holds ? 1 : 0) << ','
           << (tvkl ? 1 : 0) << '\n';
    }
  }
  // the sigma corollary's two printed sign variants, surfaced side by side
  const SigmaBoundReport sb =
      sigma_lower_bound_report(0.05, 0.2, 0.02, 1.0, 0.9, 0.5);
  std::cout << "sigma lower bound (derivation form): " << sb.bound
            << ", main-text sign variant: " << sb.main_text_variant << "\n";
  std::cout << (violations == 0 ? "PASS" : "FAIL") << ": " << violations
            << " violation(s) over " << samples * gammas.size()
            << " instances\n";
  return violations == 0 ? 0 : 1;
}

int cmd_heatmap(const std::string& env_name, const std::string& checkpoint,
                int episodes, std::uint64_t seed, const std::string& out_path,
                const std::string& config_path) {
  Preset preset = load_preset(env_name, config_path);
  TACE_REQUIRE(!preset.env.multi_agent,
               "heatmap: single-agent environments only");
  const GridWorld& env = preset.env.grid;
  CategoricalPolicy policy{load_checkpoint(checkpoint)};
  TACE_REQUIRE(policy.net.input_dim() == env.observation_dim() &&
                   policy.net.output_dim() == env.action_count(),
               "heatmap: checkpoint shape does not match environment");
  Rng rng(seed);
  std::vector<std::vector<Cell>> paths;
  for (int ep = 0; ep < episodes; ++ep) {
    std::vector<Cell> path;
    auto state = env.initial_state();
    path.push_back(state.pos);
    while (true) {
      auto [action, lp] = policy.sample(env.observe(state), rng);
      const auto out = grid_step(env, state, action);
      state = out.next;
      path.push_back(state.pos);
      if (out.terminal) break;
    }
    paths.push_back(std::move(path));
  }
  write_heatmap_csv(visitation_counts(env.width, env.height, paths), out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory-constrained exploration experiments"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "train with one or more seeds");
  std::string algo = "tcppo", env_name = "grid20", seeds_spec = "1";
  std::string out_dir = "runs", config_path;
  bool quiet = false;
  run->add_option("--algo", algo, "tcppo | ppo | tcmae | ippo");
  run->add_option("--env", env_name,
                  "grid50 | grid70 | grid70_three_goal | mpe70 | grid20 | "
                  "mpe30");
  run->add_option("--seeds", seeds_spec, "e.g. 1 or 1,2,3 or 1..5");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--config", config_path, "JSON config with preset sections");
  run->add_flag("--quiet", quiet, "suppress progress lines");

  // aggregate
  auto* agg = app.add_subcommand("aggregate",
                                 "mean/std per iteration across seed CSVs");
  std::vector<std::string> agg_inputs;
  std::string agg_out;
  agg->add_option("inputs", agg_inputs, "metrics CSV files")->required();
  agg->add_option("--out", agg_out, "output CSV (default stdout)");

  // verify
  auto* verify = app.add_subcommand(
      "verify", "performance-bound suite on random tabular instances");
  int samples = 200;
  std::vector<double> gammas{0.5, 0.9, 0.99};
  std::uint64_t verify_seed = 7;
  std::string verify_out;
  verify->add_option("--samples", samples, "instances per gamma");
  verify->add_option("--gammas", gammas, "discount factors");
  verify->add_option("--seed", verify_seed, "instance sampling seed");
  verify->add_option("--out", verify_out, "CSV output path (default stdout)");

  // heatmap
  auto* heatmap = app.add_subcommand(
      "heatmap", "roll a stored policy and export visitation counts");
  std::string hm_env = "grid20", hm_checkpoint, hm_out = "heatmap.csv";
  std::string hm_config;
  int hm_episodes = 64;
  std::uint64_t hm_seed = 1;
  heatmap->add_option("--env", hm_env, "environment preset");
  heatmap->add_option("--policy", hm_checkpoint, "policy checkpoint")
      ->required();
  heatmap->add_option("--episodes", hm_episodes, "episodes to roll");
  heatmap->add_option("--seed", hm_seed, "sampling seed");
  heatmap->add_option("--out", hm_out, "output CSV");
  heatmap->add_option("--config", hm_config, "JSON config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      RunSpec spec;
      spec.algorithm = algorithm_from_string(algo);
      spec.env_name = env_name;
      spec.seeds = parse_seeds(seeds_spec);
      spec.output_dir = out_dir;
      spec.config_path = config_path;
      spec.validate();
      const Preset probe = load_preset(env_name, config_path);
      TACE_REQUIRE(probe.env.multi_agent == is_multi_agent(spec.algorithm),
                   "algorithm/environment mismatch: " + algo + " on " +
                       env_name);
      return cmd_run(spec, quiet);
    }
    if (agg->parsed()) {
      if (agg_out.empty()) {
        aggregate_csv(agg_inputs, std::cout);
      } else {
        std::ofstream out(agg_out);
        TACE_REQUIRE(out.good(), "aggregate: cannot write " + agg_out);
        aggregate_csv(agg_inputs, out);
      }
      return 0;
    }
    if (verify->parsed())
      return cmd_verify(samples, gammas, verify_seed, verify_out);
    if (heatmap->parsed())
      return cmd_heatmap(hm_env, hm_checkpoint, hm_episodes, hm_seed, hm_out,
                         hm_config);
  } catch (const InputError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
