#include "pgql/harness.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "pgql/errors.h"

namespace pgql {
namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  for (std::string part; std::getline(in, part, sep);) {
    part = trim(part);
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key, "expected an integer, got '" + value + "'");
  }
  return out;
}

// "0,3,7" or "0-4" (inclusive) or a mix.
std::vector<std::uint64_t> parse_seeds(const std::string& key,
                                       const std::string& value) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& part : split(value, ',')) {
    const auto dash = part.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(static_cast<std::uint64_t>(parse_int(key, part)));
      continue;
    }
    const std::int64_t lo = parse_int(key, part.substr(0, dash));
    const std::int64_t hi = parse_int(key, part.substr(dash + 1));
    if (lo < 0 || hi < lo) throw ConfigError(key, "bad seed range " + part);
    for (std::int64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  return seeds;
}

// Shortest text that reads back to the same double.
std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(x);
}

CriticVariant parse_critic(const std::string& name) {
  if (name == "sarsa") return CriticVariant::kSarsa;
  if (name == "expected-sarsa") return CriticVariant::kExpectedSarsa;
  if (name == "q-learning") return CriticVariant::kQLearning;
  if (name == "monte-carlo") return CriticVariant::kMonteCarlo;
  throw ConfigError("critic", "unknown critic '" + name + "'");
}

ActorForm parse_actor_form(const std::string& name) {
  if (name == "q-tilde") return ActorForm::kQTildeBaseline;
  if (name == "explicit-entropy") return ActorForm::kExplicitEntropy;
  throw ConfigError("actor-form", "unknown actor form '" + name + "'");
}

PgqlMode parse_pgql_mode(const std::string& name) {
  if (name == "practical") return PgqlMode::kPractical;
  if (name == "blend") return PgqlMode::kBlend;
  throw ConfigError("pgql-mode", "unknown mode '" + name + "'");
}

std::string join_agents(const std::vector<AgentKind>& kinds) {
  std::string out;
  for (AgentKind k : kinds) {
    if (!out.empty()) out += ",";
    out += to_string(k);
  }
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::uint64_t s : seeds) {
    if (!out.empty()) out += ",";
    out += std::to_string(s);
  }
  return out;
}

}  // namespace

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kActorCritic: return "actor-critic";
    case AgentKind::kQLearning: return "q-learning";
    case AgentKind::kPgql: return "pgql";
    case AgentKind::kExpectedSarsa: return "expected-sarsa";
  }
  return "unknown";
}

AgentKind parse_agent_kind(const std::string& name) {
  if (name == "actor-critic") return AgentKind::kActorCritic;
  if (name == "q-learning") return AgentKind::kQLearning;
  if (name == "pgql") return AgentKind::kPgql;
  if (name == "expected-sarsa") return AgentKind::kExpectedSarsa;
  throw ConfigError("agent", "unknown agent '" + name + "'");
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> kKeys = {
      "env",          "layout-file",     "garnet-states", "garnet-actions",
      "garnet-branching", "garnet-seed", "agent",         "alpha",
      "gamma",        "eta",             "lr-actor",      "lr-critic",
      "lr-q",         "critic",          "actor-form",    "pgql-mode",
      "replay-capacity", "batch-size",   "steps",         "eval-every",
      "max-episode-steps", "seeds",      "workers",       "out"};
  return kKeys;
}

void ExperimentConfig::set(const std::string& raw_key,
                           const std::string& raw_value) {
  const std::string key = normalize_key(trim(raw_key));
  const std::string value = trim(raw_value);
  if (key == "env") {
    if (value != "gridworld" && value != "garnet") {
      throw ConfigError(key, "expected gridworld or garnet, got '" + value + "'");
    }
    env = value;
  } else if (key == "layout-file") {
    layout_file = value;
  } else if (key == "garnet-states") {
    garnet_states = static_cast<int>(parse_int(key, value));
  } else if (key == "garnet-actions") {
    garnet_actions = static_cast<int>(parse_int(key, value));
  } else if (key == "garnet-branching") {
    garnet_branching = static_cast<int>(parse_int(key, value));
  } else if (key == "garnet-seed") {
    garnet_seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "agent") {
    agents.clear();
    for (const std::string& name : split(value, ',')) {
      agents.push_back(parse_agent_kind(name));
    }
  } else if (key == "alpha") {
    agent.alpha = parse_double(key, value);
  } else if (key == "gamma") {
    agent.gamma = parse_double(key, value);
  } else if (key == "eta") {
    agent.eta = parse_double(key, value);
  } else if (key == "lr-actor") {
    agent.lr_actor = parse_double(key, value);
  } else if (key == "lr-critic") {
    agent.lr_critic = parse_double(key, value);
  } else if (key == "lr-q") {
    agent.lr_q = parse_double(key, value);
  } else if (key == "critic") {
    parse_critic(value);
    critic = value;
  } else if (key == "actor-form") {
    parse_actor_form(value);
    actor_form = value;
  } else if (key == "pgql-mode") {
    parse_pgql_mode(value);
    pgql_mode = value;
  } else if (key == "replay-capacity") {
    const std::int64_t n = parse_int(key, value);
    if (n <= 0) throw ConfigError(key, "must be positive");
    agent.replay_capacity = static_cast<std::size_t>(n);
  } else if (key == "batch-size") {
    const std::int64_t n = parse_int(key, value);
    if (n <= 0) throw ConfigError(key, "must be positive");
    agent.batch_size = static_cast<std::size_t>(n);
  } else if (key == "steps") {
    steps = parse_int(key, value);
  } else if (key == "eval-every") {
    eval_every = parse_int(key, value);
  } else if (key == "max-episode-steps") {
    max_episode_steps = parse_int(key, value);
  } else if (key == "seeds") {
    seeds = parse_seeds(key, value);
  } else if (key == "workers") {
    workers = static_cast<int>(parse_int(key, value));
  } else if (key == "out") {
    out = value;
  } else {
    throw ConfigError(key, "unknown configuration key");
  }
}

void ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config", path + ":" + std::to_string(line_no) +
                                      ": expected key=value");
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* message) {
    if (!ok) throw ConfigError(field, message);
  };
  require(env == "gridworld" || env == "garnet", "env", "unknown environment");
  require(!agents.empty(), "agent", "at least one agent is required");
  require(agent.alpha > 0.0, "alpha", "must be positive");
  require(agent.gamma > 0.0 && agent.gamma < 1.0, "gamma", "must lie in (0, 1)");
  require(agent.eta >= 0.0 && agent.eta <= 1.0, "eta", "must lie in [0, 1]");
  require(agent.lr_actor > 0.0, "lr-actor", "must be positive");
  require(agent.lr_critic > 0.0, "lr-critic", "must be positive");
  require(agent.lr_q > 0.0, "lr-q", "must be positive");
  require(steps >= 0, "steps", "must be nonnegative");
  require(eval_every >= 1, "eval-every", "must be at least 1");
  require(max_episode_steps >= 0, "max-episode-steps", "must be nonnegative");
  require(!seeds.empty(), "seeds", "at least one seed is required");
  require(workers >= 1, "workers", "must be at least 1");
  if (critic == "monte-carlo") {
    for (AgentKind kind : agents) {
      require(kind == AgentKind::kActorCritic || kind == AgentKind::kQLearning ||
                  kind == AgentKind::kExpectedSarsa,
              "critic", "monte-carlo returns need whole episodes; pgql steps online");
    }
  }
  if (env == "garnet") {
    require(garnet_states > 0, "garnet-states", "must be positive");
    require(garnet_actions > 0, "garnet-actions", "must be positive");
    require(garnet_branching >= 1 && garnet_branching <= garnet_states,
            "garnet-branching", "must lie in [1, garnet-states]");
  }
}

std::vector<std::string> ExperimentConfig::to_lines() const {
  return {
      "env=" + env,
      "layout-file=" + layout_file,
      "garnet-states=" + std::to_string(garnet_states),
      "garnet-actions=" + std::to_string(garnet_actions),
      "garnet-branching=" + std::to_string(garnet_branching),
      "garnet-seed=" + std::to_string(garnet_seed),
      "agent=" + join_agents(agents),
      "alpha=" + format_double(agent.alpha),
      "gamma=" + format_double(agent.gamma),
      "eta=" + format_double(agent.eta),
      "lr-actor=" + format_double(agent.lr_actor),
      "lr-critic=" + format_double(agent.lr_critic),
      "lr-q=" + format_double(agent.lr_q),
      "critic=" + critic,
      "actor-form=" + actor_form,
      "pgql-mode=" + pgql_mode,
      "replay-capacity=" + std::to_string(agent.replay_capacity),
      "batch-size=" + std::to_string(agent.batch_size),
      "steps=" + std::to_string(steps),
      "eval-every=" + std::to_string(eval_every),
      "max-episode-steps=" + std::to_string(max_episode_steps),
      "seeds=" + join_seeds(seeds),
      "workers=" + std::to_string(workers),
      "out=" + out,
  };
}

TabularMdp make_environment(const ExperimentConfig& config) {
  if (config.env == "garnet") {
    GarnetSpec spec;
    spec.n_states = config.garnet_states;
    spec.n_actions = config.garnet_actions;
    spec.branching = config.garnet_branching;
    spec.gamma = config.agent.gamma;
    spec.seed = config.garnet_seed;
    return garnet_generate(spec);
  }
  GridWorldSpec spec;
  if (!config.layout_file.empty()) {
    spec = load_grid_layout(config.layout_file, config.agent.gamma);
  }
  spec.gamma = config.agent.gamma;
  return gridworld_to_mdp(spec);
}

AgentConfig effective_agent_config(const ExperimentConfig& config) {
  AgentConfig cfg = config.agent;
  cfg.critic = parse_critic(config.critic);
  cfg.actor_form = parse_actor_form(config.actor_form);
  cfg.pgql_mode = parse_pgql_mode(config.pgql_mode);
  return cfg;
}

double Trace::area_under_curve() const {
  if (rows.empty()) return 0.0;
  if (rows.size() == 1) return rows.front().j_true;
  double area = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    area += 0.5 * (rows[i].j_true + rows[i - 1].j_true) *
            static_cast<double>(rows[i].step - rows[i - 1].step);
  }
  const double span = static_cast<double>(rows.back().step - rows.front().step);
  return span > 0.0 ? area / span : rows.back().j_true;
}

TraceRow evaluate_snapshot(const TabularMdp& mdp, const Eigen::MatrixXd& theta,
                           const Eigen::VectorXd& w, double alpha,
                           std::int64_t step, std::uint64_t seed) {
  const TabularPolicy policy{theta / alpha, alpha};
  TraceRow row;
  row.step = step;
  row.seed = seed;
  row.j_true = policy_performance(mdp, policy);
  const QTable q{dueling_q(theta, w, policy.probabilities())};
  row.bellman_residual =
      sup_norm(apply_bellman_star(q, mdp).values - q.values);
  const Eigen::VectorXd entropy = entropy_rows(policy.logits);
  double total = 0.0;
  int count = 0;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    total += entropy(s);
    ++count;
  }
  row.mean_entropy = count > 0 ? total / count : 0.0;
  return row;
}

Trace run_single(const ExperimentConfig& config, const TabularMdp& mdp,
                 AgentKind kind, std::uint64_t seed) {
  const AgentConfig cfg = effective_agent_config(config);
  AgentState agent(mdp.n_states, mdp.n_actions, cfg, seed);
  auto shared = std::make_shared<const TabularMdp>(mdp);
  EpisodeStepper env(shared, seed * 0x9e3779b97f4a7c15ULL + 1);

  Trace trace;
  trace.agent = kind;
  trace.seed = seed;
  auto record = [&](std::int64_t step) {
    trace.rows.push_back(
        evaluate_snapshot(mdp, agent.theta, agent.w, cfg.alpha, step, seed));
    trace.checkpoints.push_back(agent.theta / cfg.alpha);
  };
  record(0);

  const bool monte_carlo = cfg.critic == CriticVariant::kMonteCarlo;
  const bool sarsa = cfg.critic == CriticVariant::kSarsa;
  std::vector<Transition> episode;
  std::int64_t episode_length = 0;
  int s = env.reset();
  int pending_action = -1;

  for (std::int64_t step = 1; step <= config.steps; ++step) {
    const int a = pending_action >= 0 ? pending_action : agent.sample_action(s);
    pending_action = -1;
    const StepResult out = env.step(a);
    Transition t{s, a, out.reward, out.next_state, out.done};
    ++episode_length;
    const bool truncated = !out.done && config.max_episode_steps > 0 &&
                           episode_length >= config.max_episode_steps;

    // The SARSA critic commits to the next action before the update.
    const bool uses_critic =
        kind == AgentKind::kActorCritic || kind == AgentKind::kPgql;
    if (uses_critic && sarsa && !out.done) {
      t.a_next = agent.sample_action(out.next_state);
      if (!truncated) pending_action = t.a_next;
    }

    switch (kind) {
      case AgentKind::kActorCritic:
        if (monte_carlo) {
          episode.push_back(t);
          if (out.done) ac_episode_step(agent, episode);
          if (out.done || truncated) episode.clear();
        } else {
          ac_step(agent, t);
        }
        break;
      case AgentKind::kQLearning:
        agent.replay.push(t);
        if (agent.replay.size() >= cfg.batch_size) {
          av_step(agent, agent.replay.sample(cfg.batch_size, agent.rng));
        }
        break;
      case AgentKind::kPgql:
        pgql_step(agent, t);
        break;
      case AgentKind::kExpectedSarsa:
        agent.apply(av_delta(agent, std::span<const Transition>(&t, 1),
                             ValueError::kExpectedSarsa));
        break;
    }

    if (out.done || truncated) {
      s = env.reset();
      episode_length = 0;
    } else {
      s = out.next_state;
    }
    if (step % config.eval_every == 0 || step == config.steps) record(step);
  }
  return trace;
}

void write_experiment_files(const ExperimentConfig& config,
                            const ExperimentResult& result) {
  std::filesystem::create_directories(config.out);
  const std::filesystem::path dir(config.out);
  std::ofstream summary(dir / "summary.csv");
  if (!summary) throw Error("cannot write " + (dir / "summary.csv").string());
  summary.precision(17);
  summary << "agent,seed,final_j_true,auc,j_star\n";
  for (const Trace& trace : result.traces) {
    const std::string stem =
        to_string(trace.agent) + "_seed" + std::to_string(trace.seed);
    std::vector<std::string> header = config.to_lines();
    header.push_back("trace-agent=" + to_string(trace.agent));
    header.push_back("trace-seed=" + std::to_string(trace.seed));
    header.push_back("j-star=" + format_double(result.j_star));
    write_trace_csv((dir / ("trace_" + stem + ".csv")).string(), trace, header);
    write_policy_csv((dir / ("policy_" + stem + ".csv")).string(),
                     trace.checkpoints.back());
    summary << to_string(trace.agent) << ',' << trace.seed << ','
            << trace.final_j() << ',' << trace.area_under_curve() << ','
            << result.j_star << '\n';
  }
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const TabularMdp mdp = make_environment(config);
  const QTable q_star = solve_q_star(mdp);
  ExperimentResult result;
  result.j_star =
      mdp.initial_dist.dot(Eigen::VectorXd(q_star.values.rowwise().maxCoeff()));

  for (AgentKind kind : config.agents) {
    for (std::uint64_t seed : config.seeds) {
      Trace trace = run_single(config, mdp, kind, seed);
      trace.j_star = result.j_star;
      result.traces.push_back(std::move(trace));
    }
  }

  if (!config.out.empty()) write_experiment_files(config, result);
  return result;
}

}  // namespace pgql
