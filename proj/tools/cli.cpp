#include "cli.hpp"

#include "lfiw/agent.hpp"
#include "lfiw/bellman.hpp"
#include "lfiw/bench.hpp"
#include "lfiw/stats.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace lfiw::cli {
namespace fs = std::filesystem;

void RunManifest::write(std::ostream& out) const {
  out << "# lfiw run manifest\n";
  out << "# rerun with: lfiw " << subcommand << " --config <this file>\n";
  out << "subcommand = " << subcommand << '\n';
  out << "version = " << kVersion << '\n';
  out << "out = " << out_dir.string() << '\n';
  write_key_values(out, settings);
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << contents;
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Setting {
  std::string flag;  ///< empty if only settable from a config file
  std::string key;
  std::string default_value;
  std::string help;
  bool is_flag = false;
};

using Job = std::function<int(std::ostream& out)>;

struct Command {
  std::string name;
  std::string help;
  std::vector<Setting> settings;
  /// Validates settings and returns the work; throws on bad settings.
  std::function<Job(const KeyValues&, const fs::path&)> prepare;
};

/// Runs fn(0..n-1) on up to jobs threads; the first exception is rethrown.
void parallel_for(std::size_t n, long jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1L, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(mu);
          if (next >= n || failure) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

long get_count(const KeyValues& kv, const std::string& key, long min) {
  const long v = get_long(kv, key, min);
  if (v < min) throw UsageError(key + " must be >= " + std::to_string(min));
  return v;
}

std::uint64_t get_seed(const KeyValues& kv) {
  const long v = get_long(kv, "seed", 0);
  if (v < 0) throw UsageError("seed must be >= 0");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string csv_precise(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  os << std::setprecision(17);
  fn(os);
  return os.str();
}

// ---------------------------------------------------------------- chain

Command chain_command() {
  Command c;
  c.name = "chain";
  c.help = "Chain-MDP policy evaluation under uniform, td_error and oracle_dpi weighting";
  c.settings = {
      {"--p-right", "p_right", "0.8", "probability of the right action"},
      {"--schemes", "schemes", "uniform,td_error,oracle_dpi", "comma-separated schemes"},
      {"--seeds", "seeds", "100", "number of seeds"},
      {"--epochs", "epochs", "20000", "simulated sweeps per run"},
      {"--eta", "eta", "0.1", "TD step size"},
      {"--n-states", "n_states", "5", "chain length"},
      {"--gamma", "gamma", "0.99", "discount"},
      {"--threshold", "threshold", "1", "error threshold for steps-to-threshold"},
      {"--record-every", "record_every", "100", "trace stride in epochs"},
      {"--seed", "seed", "0", "root seed"},
      {"--jobs", "jobs", "1", "worker threads"},
  };
  c.prepare = [](const KeyValues& kv, const fs::path& out_dir) -> Job {
    ChainExperimentConfig base;
    base.p_right = get_double(kv, "p_right", 0.8);
    base.eta = get_double(kv, "eta", 0.1);
    base.n_epochs = get_count(kv, "epochs", 0);
    base.n_states = static_cast<int>(get_count(kv, "n_states", 2));
    base.gamma = get_double(kv, "gamma", 0.99);
    base.threshold = get_double(kv, "threshold", 1.0);
    base.record_every = get_count(kv, "record_every", 1);
    if (!(base.p_right >= 0.0 && base.p_right <= 1.0)) throw UsageError("p_right must be in [0, 1]");
    if (!(base.eta > 0.0 && base.eta < 1.0)) throw UsageError("eta must be in (0, 1)");
    if (!(base.gamma >= 0.0 && base.gamma < 1.0)) throw UsageError("gamma must be in [0, 1)");
    std::vector<Scheme> schemes;
    for (const std::string& name : split_list(get_string(kv, "schemes", ""))) {
      const Scheme s = parse_scheme(name);
      if (s == Scheme::lfiw) throw UsageError("the chain experiment has no lfiw scheme");
      schemes.push_back(s);
    }
    if (schemes.empty()) throw UsageError("schemes must list at least one scheme");
    const long n_seeds = get_count(kv, "seeds", 1);
    const long jobs = get_count(kv, "jobs", 1);
    const std::uint64_t root = get_seed(kv);

    return [=](std::ostream& out) {
      const std::size_t n = schemes.size() * static_cast<std::size_t>(n_seeds);
      std::vector<ExperimentTrace> traces(n);
      parallel_for(n, jobs, [&](std::size_t i) {
        ChainExperimentConfig cfg = base;
        cfg.scheme = schemes[i / static_cast<std::size_t>(n_seeds)];
        traces[i] = run_chain_experiment(cfg, derive_seed(root, i % static_cast<std::size_t>(n_seeds)));
      });
      write_file_atomic(out_dir / "chain_trace.csv", csv_precise([&](std::ostream& os) {
                          write_chain_trace_header(os);
                          for (const auto& t : traces) write_chain_trace_rows(os, t);
                        }));

      std::ostringstream summary;
      summary << std::setprecision(10) << "scheme,mean_steps,standard_error,reached,seeds\n";
      out << "steps until error < " << base.threshold << " (p_right " << base.p_right << ", " << n_seeds
          << " seeds)\n";
      std::vector<std::pair<double, std::string>> ranking;
      for (std::size_t k = 0; k < schemes.size(); ++k) {
        std::vector<double> steps;
        for (long j = 0; j < n_seeds; ++j)
          if (const auto& t = traces[k * static_cast<std::size_t>(n_seeds) + static_cast<std::size_t>(j)]; t.first_below)
            steps.push_back(static_cast<double>(*t.first_below));
        const std::string name(to_string(schemes[k]));
        const double m = steps.empty() ? NAN : stats::mean(steps);
        const double se = steps.empty() ? NAN : stats::standard_error(steps);
        summary << name << ',' << m << ',' << se << ',' << steps.size() << ',' << n_seeds << '\n';
        out << "  " << std::left << std::setw(11) << name << std::right << " mean " << std::setw(10) << m
            << "  se " << std::setw(8) << se << "  reached " << steps.size() << '/' << n_seeds << '\n';
        if (!steps.empty()) ranking.emplace_back(m, name);
      }
      std::sort(ranking.begin(), ranking.end());
      out << "ranking:";
      for (std::size_t i = 0; i < ranking.size(); ++i) out << (i ? " < " : " ") << ranking[i].second;
      out << '\n';
      write_file_atomic(out_dir / "chain_summary.csv", summary.str());
      return static_cast<int>(kOk);
    };
  };
  return c;
}

// ---------------------------------------------------------------- contraction

Command contraction_command() {
  Command c;
  c.name = "contraction";
  c.help = "Audit the Bellman operator as a gamma-contraction under a weighted norm";
  c.settings = {
      {"--mdp", "mdp", "chain", "chain | random | file"},
      {"--mdp-file", "mdp_file", "", "MDP text file for --mdp file"},
      {"--dist", "dist", "dpi", "dpi | occupancy | uniform | file"},
      {"--dist-file", "dist_file", "", "S x A weight table for --dist file"},
      {"--trials", "trials", "10000", "random Q pairs"},
      {"--counterexample", "counterexample", "false", "also build a violating pair", true},
      {"--n-states", "n_states", "5", "states (chain or random)"},
      {"--n-actions", "n_actions", "3", "actions (random)"},
      {"--gamma", "gamma", "0.99", "discount"},
      {"--p-right", "p_right", "0.8", "chain right-action probability"},
      {"--seed", "seed", "0", "root seed"},
  };
  c.prepare = [](const KeyValues& kv, const fs::path& out_dir) -> Job {
    const std::string mdp_kind = get_string(kv, "mdp", "chain");
    const std::string dist_kind = get_string(kv, "dist", "dpi");
    const long trials = get_long(kv, "trials", 10000);
    if (trials < 1) throw UsageError("--trials must be >= 1");
    const bool want_counterexample = get_bool(kv, "counterexample", false);
    const int n_states = static_cast<int>(get_count(kv, "n_states", 1));
    const int n_actions = static_cast<int>(get_count(kv, "n_actions", 1));
    const double gamma = get_double(kv, "gamma", 0.99);
    const std::uint64_t seed = get_seed(kv);
    if (!(gamma >= 0.0 && gamma < 1.0)) throw UsageError("gamma must be in [0, 1)");

    std::optional<TabularMdp> mdp;
    std::optional<Policy> policy;
    if (mdp_kind == "chain") {
      ChainProblem chain = build_chain_mdp(n_states, get_double(kv, "p_right", 0.8), gamma);
      mdp = std::move(chain.mdp);
      policy = std::move(chain.policy);
    } else if (mdp_kind == "random") {
      Rng rng(derive_seed(seed, 100));
      mdp = random_mdp(n_states, n_actions, gamma, rng);
      policy = random_policy(n_states, n_actions, rng);
    } else if (mdp_kind == "file") {
      const std::string path = get_string(kv, "mdp_file", "");
      if (path.empty()) throw UsageError("--mdp file needs --mdp-file");
      mdp = load_mdp(path);
      policy = Policy::uniform(mdp->n_states(), mdp->n_actions());
    } else {
      throw UsageError("unknown --mdp: " + mdp_kind);
    }

    std::optional<Table> file_dist;
    if (dist_kind == "file") {
      const std::string path = get_string(kv, "dist_file", "");
      std::ifstream in(path);
      if (path.empty() || !in) throw UsageError("--dist file needs a readable --dist-file");
      file_dist = read_table(in, mdp->n_states(), mdp->n_actions());
    } else if (dist_kind != "dpi" && dist_kind != "occupancy" && dist_kind != "uniform") {
      throw UsageError("unknown --dist: " + dist_kind);
    }

    return [=](std::ostream& out) {
      Table d;
      if (dist_kind == "dpi") d = stationary_distribution(*mdp, *policy);
      else if (dist_kind == "occupancy") d = occupancy(*mdp, *policy).normalized;
      else if (dist_kind == "uniform") d = WeightedNorm::uniform(mdp->n_states(), mdp->n_actions()).dist();
      else d = *file_dist;
      const WeightedNorm norm(d);

      const ContractionReport report =
          weighted_contraction_check(*mdp, *policy, norm, static_cast<int>(trials), seed);
      write_file_atomic(out_dir / "contraction.csv", csv_precise([&](std::ostream& os) {
                          write_contraction_csv_header(os);
                          write_contraction_csv_row(os, report);
                        }));
      out << "dist:      " << dist_kind << '\n';
      print_contraction_summary(out, report);

      if (want_counterexample) {
        try {
          const Counterexample ce = build_counterexample(*mdp, *policy, norm);
          out << std::setprecision(10) << "counterexample ratio: " << ce.achieved_ratio << " (gamma " << mdp->gamma()
              << ", nu " << ce.nu << ")" << (ce.achieved_ratio > mdp->gamma() ? " exceeds gamma" : " does not exceed gamma")
              << '\n';
          write_file_atomic(out_dir / "counterexample.csv", csv_precise([&](std::ostream& os) {
                              os << "s,a,q,q_prime\n";
                              for (int s = 0; s < mdp->n_states(); ++s)
                                for (int a = 0; a < mdp->n_actions(); ++a)
                                  os << s << ',' << a << ',' << ce.q(s, a) << ',' << ce.q_prime(s, a) << '\n';
                            }));
        } catch (const NoCounterexampleError& e) {
          out << "no counterexample: " << e.what() << '\n';
        }
      }
      if (report.violated && dist_kind == "dpi") {
        out << "contraction violated under the stationary distribution\n";
        return static_cast<int>(kFailure);
      }
      return static_cast<int>(kOk);
    };
  };
  return c;
}

// ---------------------------------------------------------------- dre-bench

Command dre_bench_command() {
  Command c;
  c.name = "dre-bench";
  c.help = "Train the density-ratio estimator on distributions with known ratios";
  c.settings = {
      {"--dist-pair", "dist_pair", "two-atom", "two-atom | gridworld-policies | identical"},
      {"--steps", "steps", "2000", "training steps"},
      {"--batch", "batch", "256", "samples per side per step"},
      {"--hidden", "hidden", "64", "hidden width"},
      {"--learning-rate", "learning_rate", "0.001", "Adam learning rate"},
      {"--log-interval", "log_interval", "100", "steps between trace rows"},
      {"--seed", "seed", "0", "root seed"},
  };
  c.prepare = [](const KeyValues& kv, const fs::path& out_dir) -> Job {
    DreBenchConfig cfg;
    cfg.steps = get_count(kv, "steps", 0);
    cfg.batch = static_cast<std::size_t>(get_count(kv, "batch", 1));
    cfg.hidden = static_cast<int>(get_count(kv, "hidden", 1));
    cfg.learning_rate = get_double(kv, "learning_rate", 1e-3);
    cfg.log_interval = get_count(kv, "log_interval", 1);
    cfg.seed = get_seed(kv);
    if (!(cfg.learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
    const DistPair pair = make_dist_pair(get_string(kv, "dist_pair", "two-atom"), cfg.seed);

    return [=](std::ostream& out) {
      const DreBenchResult r = run_dre_bench(pair, cfg);
      write_file_atomic(out_dir / "dre_bench.csv", csv_precise([&](std::ostream& os) { write_dre_bench_csv(os, r); }));
      const Vector truth = pair.true_ratio();
      std::ostringstream ratios;
      ratios << std::setprecision(17) << "s,a,true_ratio,estimated_ratio\n";
      for (Eigen::Index i = 0; i < truth.size(); ++i)
        ratios << i / pair.n_actions << ',' << i % pair.n_actions << ',' << truth(i) << ',' << r.estimated_ratio(i) << '\n';
      write_file_atomic(out_dir / "dre_ratios.csv", ratios.str());
      out << std::setprecision(6) << "dist pair:            " << pair.name << '\n'
          << "mean rel ratio error: " << r.mean_rel_err << '\n'
          << "max abs ratio error:  " << r.max_abs_dev << '\n'
          << "variational bound:    " << r.objective << '\n'
          << "exact divergence:     " << r.divergence << '\n'
          << "relative bound gap:   " << r.bound_gap << '\n';
      return static_cast<int>(kOk);
    };
  };
  return c;
}

// ---------------------------------------------------------------- actor-critic

Command actor_critic_command() {
  Command c;
  c.name = "actor-critic";
  c.help = "Tabular actor-critic with uniform, lfiw or oracle_dpi replay weighting";
  const LfiwConfig d;
  const KeyValues dkv = to_key_values(d);
  c.settings = {
      {"--env", "env", "gridworld", "chain | gridworld"},
      {"--method", "method", "lfiw", "uniform | lfiw | oracle_dpi"},
      {"--seeds", "seeds", "20", "number of seeds"},
      {"--steps", "steps", std::to_string(d.episodes * d.episode_length), "environment steps per run"},
      {"--temperature", "temperature", dkv.at("temperature"), "weight temperature T"},
      {"--seed", "seed", "0", "root seed"},
      {"--jobs", "jobs", "1", "worker threads"},
  };
  for (const auto& [key, value] : dkv)
    if (key != "method" && key != "temperature" && key != "seed" && key != "episodes")
      c.settings.push_back({"", key, value, ""});
  c.prepare = [](const KeyValues& kv, const fs::path& out_dir) -> Job {
    const std::string env = get_string(kv, "env", "gridworld");
    if (env != "chain" && env != "gridworld") throw UsageError("unknown --env: " + env);
    KeyValues lkv;
    for (const auto& [key, value] : kv)
      if (key != "env" && key != "seeds" && key != "steps" && key != "jobs" && key != "seed") lkv[key] = value;
    LfiwConfig base = lfiw_config_from(lkv);
    const long steps = get_count(kv, "steps", 1);
    base.episodes = (steps + base.episode_length - 1) / base.episode_length;
    base.validate();
    const long n_seeds = get_count(kv, "seeds", 1);
    const long jobs = get_count(kv, "jobs", 1);
    const std::uint64_t root = get_seed(kv);
    const TabularMdp mdp = env == "chain" ? build_chain_mdp(5, 0.8, 0.99).mdp : build_gridworld();

    return [=](std::ostream& out) {
      std::vector<ExperimentTrace> traces(static_cast<std::size_t>(n_seeds));
      parallel_for(traces.size(), jobs, [&](std::size_t i) {
        LfiwConfig cfg = base;
        cfg.seed = derive_seed(root, i);
        traces[i] = run_lfiw_actor_critic(mdp, cfg);
      });
      write_file_atomic(out_dir / "actor_critic.csv", csv_precise([&](std::ostream& os) {
                          write_actor_critic_header(os);
                          for (const auto& t : traces) write_actor_critic_rows(os, t);
                        }));
      std::ostringstream curve;
      curve << std::setprecision(17) << "step,mean_return,std_return,mean_error,std_error\n";
      const std::size_t points = traces.front().records.size();
      for (std::size_t p = 0; p < points; ++p) {
        std::vector<double> ret, err;
        for (const auto& t : traces) {
          ret.push_back(*t.records[p].ret);
          err.push_back(t.records[p].error);
        }
        curve << traces.front().records[p].step << ',' << stats::mean(ret) << ',' << stats::stddev(ret) << ','
              << stats::mean(err) << ',' << stats::stddev(err) << '\n';
      }
      write_file_atomic(out_dir / "actor_critic_curve.csv", curve.str());
      std::vector<double> finals;
      for (const auto& t : traces) finals.push_back(final_return(t));
      out << std::setprecision(8) << "method:            " << to_string(base.method) << " (T " << base.temperature
          << ")\nenv:               " << env << "\nseeds:             " << n_seeds
          << "\nfinal return mean: " << stats::mean(finals) << "\nfinal return std:  " << stats::stddev(finals) << '\n';
      return static_cast<int>(kOk);
    };
  };
  return c;
}

fs::path default_out_dir() {
  if (const char* env = std::getenv("LFIW_OUT_DIR"); env && *env) return env;
  return "lfiw_out";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> commands = {chain_command(), contraction_command(), dre_bench_command(),
                                         actor_critic_command()};
  CLI::App app{"Occupancy-weighted experience replay toolkit", "lfiw"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  struct Parsed {
    std::map<std::string, std::string> values;
    std::map<std::string, bool> flags;
    std::string config;
    std::string out;
  };
  std::vector<Parsed> parsed(commands.size());
  std::vector<CLI::App*> subs;
  std::vector<std::map<std::string, CLI::Option*>> options(commands.size());
  for (std::size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].name, commands[i].help);
    sub->add_option("--config", parsed[i].config, "key = value settings file (a run manifest works)");
    sub->add_option("--out", parsed[i].out, "output directory (default $LFIW_OUT_DIR or lfiw_out)");
    for (const Setting& s : commands[i].settings) {
      if (s.flag.empty()) continue;
      options[i][s.key] = s.is_flag ? sub->add_flag(s.flag, parsed[i].flags[s.key], s.help)
                                     : sub->add_option(s.flag, parsed[i].values[s.key], s.help)
                                           ->default_str(s.default_value);
    }
    subs.push_back(sub);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  const Command& cmd = commands[which];
  const Parsed& p = parsed[which];

  KeyValues kv;
  for (const Setting& s : cmd.settings) kv[s.key] = s.default_value;
  fs::path out_dir = default_out_dir();
  Job job;
  try {
    if (!p.config.empty()) {
      KeyValues file = load_key_values(p.config);
      if (auto it = file.find("subcommand"); it != file.end()) {
        if (it->second != cmd.name) throw UsageError("config is for subcommand " + it->second);
        file.erase(it);
      }
      file.erase("version");
      if (auto it = file.find("out"); it != file.end()) {
        out_dir = it->second;
        file.erase(it);
      }
      for (const auto& [key, value] : file) {
        if (!kv.contains(key)) throw UsageError("unknown setting in " + p.config + ": " + key);
        kv[key] = value;
      }
    }
    for (const Setting& s : cmd.settings) {
      if (s.flag.empty() || options[which].at(s.key)->count() == 0) continue;
      kv[s.key] = s.is_flag ? "true" : p.values.at(s.key);
    }
    if (!p.out.empty()) out_dir = p.out;
    job = cmd.prepare(kv, out_dir);
  } catch (const std::exception& e) {
    err << "lfiw " << cmd.name << ": " << e.what() << '\n';
    return kUsage;
  }

  try {
    fs::create_directories(out_dir);
    const RunManifest manifest{cmd.name, kv, out_dir};
    std::ostringstream text;
    manifest.write(text);
    write_file_atomic(out_dir / "manifest.txt", text.str());
    return job(out);
  } catch (const std::exception& e) {
    err << "lfiw " << cmd.name << ": " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace lfiw::cli
