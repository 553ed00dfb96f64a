// Pipeline CLI: gen-demos, train, couple, align, eval, paths.
//
// Every run prints its full effective config (defaults included) to stderr.
// Exit codes: 0 success, 1 argument/validation problems, 2 runtime failures.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sefa/align.hpp"
#include "sefa/envs.hpp"
#include "sefa/eval.hpp"
#include "sefa/flow.hpp"
#include "sefa/io.hpp"
#include "sefa/reflow.hpp"
#include "sefa/sha256.hpp"
#include "sefa/solvers.hpp"

using namespace sefa;

namespace {

// Stream tags for deriving stage-local rngs from one user seed.
constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kNoiseStream = 0x22;

void echo_config(const json& cfg) { std::cerr << "config: " << cfg.dump() << "\n"; }

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const VersionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

void check_net_matches_env(const VelocityNet& net, EnvId env) {
  if (net.arch.action_dim != chunk_dim(env) || net.arch.obs_dim != env_obs_dim(env)) {
    throw ValidationError("checkpoint dimensions do not match environment " +
                          env_name(env));
  }
}

Source stage_source(Stage stage) {
  switch (stage) {
    case Stage::base: return Source::base;
    case Stage::reflow: return Source::reflow;
    case Stage::sefa: return Source::sefa;
  }
  return Source::base;
}

struct GenDemosArgs {
  std::string env;
  int episodes = 200;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string stage;
  std::string demos;
  std::string couplings;
  std::string init;
  int epochs = 0;
  int batch = 64;
  double lr = 1e-4;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  int noise_per_demo = 1;
  int time_harmonics = 0;
  std::vector<int> hidden = {128, 128};
  bool cold_start = false;
  int rounds = 1;
  int gen_k = 10;
  std::string gen_solver = "euler:1";
  std::uint64_t gen_seed = 0;
  std::string out;
};

struct CoupleArgs {
  std::string ckpt;
  std::string demos;
  int k = 10;
  std::string solver;  // empty: stage default (base euler:100, else euler:1)
  std::uint64_t seed = 0;
  std::string out;
};

struct AlignArgs {
  std::string couplings;
  std::string demos;
  std::string ckpt;
  double delta = 0.5;
  std::string out;
  std::string report;
};

struct EvalArgs {
  std::string ckpt;
  std::string env;
  int episodes = 50;
  std::string solver = "euler:1";
  std::string seeds = "0..9";
  std::uint64_t env_seed = 0;
  int max_invocations = 0;
  std::string demos;
  int probe_couplings = 500;
  int probe_steps = 100;
  std::uint64_t probe_seed = 0;
  std::string align_report;
  std::string out;
};

struct PathsArgs {
  std::string ckpt;
  std::string demos;
  int samples = 16;
  int steps = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_gen_demos(const GenDemosArgs& a) {
  echo_config(json{{"command", "gen-demos"},
                   {"env", a.env},
                   {"episodes", a.episodes},
                   {"seed", a.seed},
                   {"out", a.out}});
  const auto demos = generate_demos(parse_env(a.env), a.episodes, a.seed);
  save_demos(a.out, demos);
  std::cerr << "wrote " << demos.size() << " demonstration chunks\n";
}

void cmd_train(const TrainArgs& a) {
  echo_config(json{{"command", "train"},
                   {"stage", a.stage},
                   {"demos", a.demos},
                   {"couplings", a.couplings},
                   {"init", a.init},
                   {"epochs", a.epochs},
                   {"batch", a.batch},
                   {"lr", a.lr},
                   {"beta1", a.beta1},
                   {"beta2", a.beta2},
                   {"eps", a.eps},
                   {"weight_decay", a.weight_decay},
                   {"seed", a.seed},
                   {"noise_per_demo", a.noise_per_demo},
                   {"time_harmonics", a.time_harmonics},
                   {"hidden", a.hidden},
                   {"cold_start", a.cold_start},
                   {"rounds", a.rounds},
                   {"gen_k", a.gen_k},
                   {"gen_solver", a.gen_solver},
                   {"gen_seed", a.gen_seed},
                   {"out", a.out}});
  const Stage stage = parse_stage(a.stage);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.beta1 = a.beta1;
  cfg.beta2 = a.beta2;
  cfg.eps = a.eps;
  cfg.weight_decay = a.weight_decay;

  Checkpoint out_ckpt;
  out_ckpt.stage = stage;
  out_ckpt.train_config = cfg;

  if (stage == Stage::base) {
    if (a.demos.empty()) throw InvalidArgumentError("train --stage base needs --demos");
    if (!a.init.empty() || a.cold_start) {
      throw InvalidArgumentError("train --stage base neither warm-starts nor takes --init");
    }
    const auto demos = load_demos(a.demos);
    const Normalizer norm = Normalizer::fit(demos);
    DeterministicRng rng(derive_seed(a.seed, kInitStream));
    VelocityNet net = init_net(static_cast<int>(demos[0].action.size()),
                               static_cast<int>(demos[0].obs.size()), rng, a.hidden,
                               a.time_harmonics);
    net.norm = norm;
    const CouplingSet data = groundtruth_couplings(demos, norm, a.noise_per_demo,
                                                   derive_seed(a.seed, kNoiseStream));
    TrainResult result = train_policy(net, data, cfg);
    std::cerr << "final epoch loss " << result.epoch_losses.back() << " after "
              << result.steps << " steps\n";
    out_ckpt.net = std::move(result.net);
    save_checkpoint(a.out, out_ckpt);
    return;
  }

  // reflow / sefa
  if (a.couplings.empty()) {
    throw InvalidArgumentError("train --stage " + a.stage + " needs --couplings");
  }
  const std::string couplings_hash = sha256_file_hex(a.couplings);
  const CouplingSet data = load_couplings(a.couplings);

  VelocityNet net;
  std::string parent_hash;
  if (a.cold_start) {
    if (a.demos.empty()) {
      throw InvalidArgumentError("train --cold-start needs --demos for the normalizer");
    }
    const auto demos = load_demos(a.demos);
    DeterministicRng rng(derive_seed(a.seed, kInitStream));
    net = init_net(static_cast<int>(data[0].action.size()),
                   static_cast<int>(data[0].obs.size()), rng, a.hidden,
                   a.time_harmonics);
    net.norm = Normalizer::fit(demos);
  } else {
    if (a.init.empty()) {
      throw InvalidArgumentError("train --stage " + a.stage +
                                 " needs --init (or --cold-start)");
    }
    parent_hash = sha256_file_hex(a.init);
    net = load_checkpoint(a.init).net;
  }

  TrainResult result = train_policy(net, data, cfg);
  std::cerr << "final epoch loss " << result.epoch_losses.back() << " after "
            << result.steps << " steps\n";

  if (a.rounds > 1) {
    if (stage != Stage::reflow) {
      throw InvalidArgumentError("--rounds applies to --stage reflow only");
    }
    if (a.demos.empty()) {
      throw InvalidArgumentError("train --rounds > 1 needs --demos");
    }
    const auto demos = load_demos(a.demos);
    for (int round = 2; round <= a.rounds; ++round) {
      CouplingGenConfig gen;
      gen.couplings_per_obs = a.gen_k;
      gen.solver = parse_solver(a.gen_solver);
      gen.seed = derive_seed(a.gen_seed, static_cast<std::uint64_t>(round));
      TrainConfig round_cfg = cfg;
      round_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(round));
      const ReflowRound rr =
          run_reflow_round(result.net, demos, gen, round_cfg, Source::reflow);
      result.net = rr.net;
      std::cerr << "reflow round " << round << " done (" << rr.couplings.size()
                << " couplings)\n";
    }
  }

  out_ckpt.net = std::move(result.net);
  out_ckpt.provenance = Provenance{parent_hash, couplings_hash};
  save_checkpoint(a.out, out_ckpt);
}

void cmd_couple(const CoupleArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const std::string solver_text =
      !a.solver.empty() ? a.solver
                        : (ckpt.stage == Stage::base ? "euler:100" : "euler:1");
  echo_config(json{{"command", "couple"},
                   {"ckpt", a.ckpt},
                   {"demos", a.demos},
                   {"k", a.k},
                   {"solver", solver_text},
                   {"seed", a.seed},
                   {"out", a.out}});
  const auto demos = load_demos(a.demos);
  if (static_cast<int>(demos[0].action.size()) != ckpt.net.arch.action_dim ||
      static_cast<int>(demos[0].obs.size()) != ckpt.net.arch.obs_dim) {
    throw ValidationError("demo dimensions do not match the checkpoint");
  }
  CouplingGenConfig cfg;
  cfg.couplings_per_obs = a.k;
  cfg.solver = parse_solver(solver_text);
  cfg.seed = a.seed;
  const CouplingSet couplings =
      generate_couplings(ckpt.net, demos, cfg, stage_source(ckpt.stage));
  save_couplings(a.out, couplings);
  std::cerr << "wrote " << couplings.size() << " couplings\n";
}

void cmd_align(const AlignArgs& a) {
  echo_config(json{{"command", "align"},
                   {"couplings", a.couplings},
                   {"demos", a.demos},
                   {"ckpt", a.ckpt},
                   {"delta", a.delta},
                   {"out", a.out},
                   {"report", a.report}});
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const CouplingSet couplings = load_couplings(a.couplings);
  const auto demos = load_demos(a.demos);
  if (static_cast<int>(demos[0].action.size()) != ckpt.net.arch.action_dim ||
      static_cast<int>(demos[0].obs.size()) != ckpt.net.arch.obs_dim) {
    throw ValidationError("demo dimensions do not match the checkpoint");
  }
  if (couplings[0].action.size() != demos[0].action.size() ||
      couplings[0].obs.size() != demos[0].obs.size()) {
    throw ValidationError("coupling dimensions do not match the demos");
  }
  const NormalizedDemos nd = NormalizedDemos::from(demos, ckpt.net.norm);
  AlignConfig cfg;
  cfg.delta = a.delta;
  const auto [aligned, report] = align_dataset(couplings, nd, cfg);
  save_couplings(a.out, aligned);
  if (!a.report.empty()) {
    save_alignment_report(a.report, report);
  }
  std::cerr << "replaced " << report.replaced << " of " << report.total
            << " couplings (fraction " << report.fraction << ")\n";
}

void cmd_eval(const EvalArgs& a) {
  const std::vector<std::uint64_t> seeds = parse_seed_range(a.seeds);
  EvalConfig cfg;
  cfg.env = parse_env(a.env);
  cfg.episodes = a.episodes;
  cfg.seeds = seeds;
  cfg.solver = parse_solver(a.solver);
  cfg.env_seed = a.env_seed;
  cfg.max_invocations = a.max_invocations;

  json config_echo{{"command", "eval"},
                   {"ckpt", a.ckpt},
                   {"env", a.env},
                   {"episodes", a.episodes},
                   {"solver", a.solver},
                   {"seeds", seeds},
                   {"env_seed", a.env_seed},
                   {"max_invocations", cfg.effective_max_invocations()},
                   {"demos", a.demos},
                   {"probe_couplings", a.probe_couplings},
                   {"probe_steps", a.probe_steps},
                   {"probe_seed", a.probe_seed},
                   {"align_report", a.align_report},
                   {"out", a.out}};
  echo_config(config_echo);

  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  check_net_matches_env(ckpt.net, cfg.env);
  const auto demos = load_demos(a.demos);

  const StudyResult study = success_rate_study(ckpt.net, cfg);

  // Straightness and transport cost are probed on couplings generated from
  // the checkpoint itself with a high-resolution solver.
  const auto distinct = distinct_observations(demos, ckpt.net.norm);
  CouplingGenConfig probe_cfg;
  probe_cfg.couplings_per_obs = std::max<int>(
      1, static_cast<int>((a.probe_couplings + distinct.size() - 1) / distinct.size()));
  probe_cfg.solver = SolverConfig::euler(100);
  probe_cfg.seed = a.probe_seed;
  CouplingSet probes =
      generate_couplings(ckpt.net, demos, probe_cfg, stage_source(ckpt.stage));
  if (static_cast<int>(probes.size()) > a.probe_couplings) {
    probes.resize(static_cast<std::size_t>(a.probe_couplings));
  }

  EvalReportDoc doc;
  config_echo.erase("command");
  config_echo.erase("out");
  doc.config = config_echo;
  doc.study = study;
  doc.straightness = straightness(ckpt.net, probes, a.probe_steps);
  doc.transport_cost = transport_cost(probes);
  if (!a.align_report.empty()) {
    const json ar = load_report(a.align_report);
    AlignmentReport rep;
    rep.total = ar.at("total").get<long>();
    rep.replaced = ar.at("replaced").get<long>();
    rep.fraction = ar.at("fraction").get<double>();
    doc.alignment = rep;
  }
  save_report(a.out, doc);
  std::cerr << "mean success " << study.mean << " (std " << study.stddev << ")\n";
}

void cmd_paths(const PathsArgs& a) {
  echo_config(json{{"command", "paths"},
                   {"ckpt", a.ckpt},
                   {"demos", a.demos},
                   {"samples", a.samples},
                   {"steps", a.steps},
                   {"seed", a.seed},
                   {"out", a.out}});
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const auto demos = load_demos(a.demos);
  export_paths(a.out, ckpt.net, demos, a.samples, a.steps, a.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rectified-flow visuomotor policy pipeline"};
  app.require_subcommand(1);

  GenDemosArgs gd;
  auto* gen = app.add_subcommand("gen-demos", "roll out the scripted expert");
  gen->add_option("--env", gd.env, "bimodal | pushblock")->required();
  gen->add_option("--episodes", gd.episodes, "expert episodes")->required();
  gen->add_option("--seed", gd.seed, "demo seed");
  gen->add_option("--out", gd.out, "output demos JSONL")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "fit a policy stage");
  train->add_option("--stage", tr.stage, "base | reflow | sefa")->required();
  train->add_option("--demos", tr.demos, "demos JSONL");
  train->add_option("--couplings", tr.couplings, "training couplings JSONL");
  train->add_option("--init", tr.init, "warm-start checkpoint");
  train->add_option("--epochs", tr.epochs, "training epochs")->required();
  train->add_option("--batch", tr.batch, "batch size");
  train->add_option("--lr", tr.lr, "learning rate");
  train->add_option("--beta1", tr.beta1, "AdamW beta1");
  train->add_option("--beta2", tr.beta2, "AdamW beta2");
  train->add_option("--eps", tr.eps, "AdamW epsilon");
  train->add_option("--weight-decay", tr.weight_decay, "AdamW weight decay");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--noise-per-demo", tr.noise_per_demo,
                    "noise draws per demo (base stage)");
  train->add_option("--time-harmonics", tr.time_harmonics,
                    "Fourier time-feature pairs for fresh nets");
  train->add_option("--hidden", tr.hidden, "hidden layer widths for fresh nets");
  train->add_flag("--cold-start", tr.cold_start,
                  "initialize fresh instead of from --init (reflow/sefa)");
  train->add_option("--rounds", tr.rounds, "reflow rounds (reflow stage)");
  train->add_option("--k", tr.gen_k, "couplings per observation for rounds > 1");
  train->add_option("--gen-solver", tr.gen_solver, "generation solver for rounds > 1");
  train->add_option("--gen-seed", tr.gen_seed, "generation seed for rounds > 1");
  train->add_option("--out", tr.out, "output checkpoint")->required();

  CoupleArgs cp;
  auto* couple = app.add_subcommand("couple", "generate couplings from a checkpoint");
  couple->add_option("--ckpt", cp.ckpt, "policy checkpoint")->required();
  couple->add_option("--demos", cp.demos, "demos JSONL (conditioning set)")->required();
  couple->add_option("--k", cp.k, "couplings per distinct observation");
  couple->add_option("--solver", cp.solver,
                     "generation solver (default: euler:100 for base, euler:1 after)");
  couple->add_option("--seed", cp.seed, "noise seed");
  couple->add_option("--out", cp.out, "output couplings JSONL")->required();

  AlignArgs al;
  auto* align = app.add_subcommand("align", "selective flow alignment");
  align->add_option("--couplings", al.couplings, "generated couplings JSONL")->required();
  align->add_option("--demos", al.demos, "expert demos JSONL")->required();
  align->add_option("--ckpt", al.ckpt, "checkpoint providing the normalizer")->required();
  align->add_option("--delta", al.delta, "replacement threshold (normalized)");
  align->add_option("--out", al.out, "aligned couplings JSONL")->required();
  align->add_option("--report", al.report, "alignment report JSON");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "success-rate study and flow metrics");
  eval->add_option("--ckpt", ev.ckpt, "policy checkpoint")->required();
  eval->add_option("--env", ev.env, "bimodal | pushblock")->required();
  eval->add_option("--episodes", ev.episodes, "episodes per inference seed");
  eval->add_option("--solver", ev.solver, "inference solver");
  eval->add_option("--seeds", ev.seeds, "inference seed range A..B");
  eval->add_option("--env-seed", ev.env_seed, "episode reset seed base");
  eval->add_option("--max-invocations", ev.max_invocations,
                   "policy invocations per episode (0 = horizon/chunk)");
  eval->add_option("--demos", ev.demos, "demos JSONL (probe conditioning)")->required();
  eval->add_option("--probe-couplings", ev.probe_couplings,
                   "couplings for straightness/transport probes");
  eval->add_option("--probe-steps", ev.probe_steps, "straightness probe steps");
  eval->add_option("--probe-seed", ev.probe_seed, "probe noise seed");
  eval->add_option("--align-report", ev.align_report,
                   "alignment report to embed in the eval report");
  eval->add_option("--out", ev.out, "output report JSON")->required();

  PathsArgs pa;
  auto* paths = app.add_subcommand("paths", "export sampling trajectories as CSV");
  paths->add_option("--ckpt", pa.ckpt, "policy checkpoint")->required();
  paths->add_option("--demos", pa.demos, "demos JSONL (conditioning)")->required();
  paths->add_option("--samples", pa.samples, "number of sampled paths");
  paths->add_option("--steps", pa.steps, "euler steps per path");
  paths->add_option("--seed", pa.seed, "sampling seed");
  paths->add_option("--out", pa.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage hint
    return 1;
  }

  if (gen->parsed()) return run_guarded([&] { cmd_gen_demos(gd); });
  if (train->parsed()) return run_guarded([&] { cmd_train(tr); });
  if (couple->parsed()) return run_guarded([&] { cmd_couple(cp); });
  if (align->parsed()) return run_guarded([&] { cmd_align(al); });
  if (eval->parsed()) return run_guarded([&] { cmd_eval(ev); });
  if (paths->parsed()) return run_guarded([&] { cmd_paths(pa); });
  return 1;
}
