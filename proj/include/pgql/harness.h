#ifndef PGQL_HARNESS_H_
#define PGQL_HARNESS_H_

// Experiment driver: configures an environment and agents, trains them, and
// scores every policy snapshot exactly against the MDP.

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "pgql/agents.h"
#include "pgql/envs.h"
#include "pgql/fixed_point.h"

namespace pgql {

enum class AgentKind { kActorCritic, kQLearning, kPgql, kExpectedSarsa };

std::string to_string(AgentKind kind);
AgentKind parse_agent_kind(const std::string& name);

struct ExperimentConfig {
  // Environment.
  std::string env = "gridworld";  // gridworld | garnet
  std::string layout_file;        // optional grid layout override
  int garnet_states = 10;
  int garnet_actions = 4;
  int garnet_branching = 3;
  std::uint64_t garnet_seed = 0;

  std::vector<AgentKind> agents{AgentKind::kPgql};
  AgentConfig agent;  // alpha, gamma, eta, learning rates, replay
  std::string critic = "expected-sarsa";
  std::string actor_form = "q-tilde";
  std::string pgql_mode = "practical";

  std::int64_t steps = 20'000;
  std::int64_t eval_every = 50;
  std::int64_t max_episode_steps = 0;  // 0: episodes end only at a terminal
  std::vector<std::uint64_t> seeds{0};
  int workers = 1;
  std::string out;  // output directory; empty writes nothing

  // Applies one key=value setting; throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value);
  // Reads a flat key=value file ('#' comments, blank lines ignored).
  void load_file(const std::string& path);
  void validate() const;
  // Effective values, one "key=value" per entry, in a fixed order.
  std::vector<std::string> to_lines() const;

  static const std::vector<std::string>& keys();
};

// Builds the exact MDP the agents train on.
TabularMdp make_environment(const ExperimentConfig& config);

struct TraceRow {
  std::int64_t step = 0;
  double j_true = 0.0;
  double bellman_residual = 0.0;
  double mean_entropy = 0.0;
  std::uint64_t seed = 0;
};

struct Trace {
  AgentKind agent = AgentKind::kPgql;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  // Policy logits evaluated for each row, in the same order.
  std::vector<Eigen::MatrixXd> checkpoints;
  double j_star = 0.0;

  double final_j() const { return rows.empty() ? 0.0 : rows.back().j_true; }
  // Mean of j_true over the trapezoid rule in step, normalized by the span.
  double area_under_curve() const;
};

struct ExperimentResult {
  std::vector<Trace> traces;
  double j_star = 0.0;
};

// Scores one parameter snapshot exactly.
TraceRow evaluate_snapshot(const TabularMdp& mdp, const Eigen::MatrixXd& theta,
                           const Eigen::VectorXd& w, double alpha,
                           std::int64_t step, std::uint64_t seed);

AgentConfig effective_agent_config(const ExperimentConfig& config);

Trace run_single(const ExperimentConfig& config, const TabularMdp& mdp,
                 AgentKind kind, std::uint64_t seed);

// Synchronous runs: every agent kind x every seed. Writes trace, checkpoint
// and summary files when config.out is set.
ExperimentResult run_experiment(const ExperimentConfig& config);

// trace_<agent>_seed<seed>.csv, policy_<agent>_seed<seed>.csv (final
// logits) and summary.csv under config.out.
void write_experiment_files(const ExperimentConfig& config,
                            const ExperimentResult& result);

// Parameters shared between asynchronous workers. Every update and every
// snapshot holds the lock for the whole operation.
class SharedParameters {
 public:
  SharedParameters(Eigen::MatrixXd theta, Eigen::VectorXd w);

  void update(const std::function<void(Eigen::MatrixXd&, Eigen::VectorXd&)>& fn);
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> snapshot() const;

 private:
  mutable std::mutex mu_;
  Eigen::MatrixXd theta_;
  Eigen::VectorXd w_;
};

class SharedReplay {
 public:
  explicit SharedReplay(std::size_t capacity) : buffer_(capacity) {}

  void push(const Transition& t);
  // Empty result when fewer than batch_size transitions are stored.
  std::vector<Transition> sample(std::size_t batch_size, std::mt19937_64& rng);
  std::size_t size() const;
  std::size_t capacity() const { return buffer_.capacity(); }

 private:
  mutable std::mutex mu_;
  ReplayBuffer buffer_;
};

// Actor workers share one parameter table and one replay buffer; a learner
// thread applies Q-learning steps from replay. workers == 1 runs the
// synchronous PGQL loop instead.
ExperimentResult run_async(const ExperimentConfig& config);

// --- Files -----------------------------------------------------------------

void write_trace_csv(const std::string& path, const Trace& trace,
                     const std::vector<std::string>& header_lines);
struct TraceFile {
  std::map<std::string, std::string> header;  // from "# key=value" lines
  std::vector<TraceRow> rows;
};
TraceFile read_trace_csv(const std::string& path);

void write_policy_csv(const std::string& path, const Eigen::MatrixXd& logits);
Eigen::MatrixXd read_policy_csv(const std::string& path);

// Seed-averaged j_true polylines, one per agent label (the trace-agent
// header, else agent, else the file stem).
std::string emit_plot(const std::vector<std::string>& trace_files);
std::string render_plot_svg(
    const std::vector<std::pair<std::string, std::vector<TraceRow>>>& series);

// --- Certificates ----------------------------------------------------------

struct CertificateRow {
  std::uint64_t mdp_seed = 0;
  BoundReport report;
};

struct CertifyConfig {
  std::vector<std::uint64_t> seeds;
  std::vector<double> alphas{1.0, 0.1, 0.01};
  std::vector<double> etas{0.0, 0.25, 0.5, 0.75};
  GarnetSpec garnet;
  FixedPointOptions options;
};

std::vector<CertificateRow> run_certify(const CertifyConfig& config);
void write_certificate_csv(const std::string& path,
                           const std::vector<CertificateRow>& rows);

}  // namespace pgql

#endif  // PGQL_HARNESS_H_
