#ifndef PGQL_AGENTS_H_
#define PGQL_AGENTS_H_

// Online tabular learners sharing one parameterization: action preferences
// theta (pi = softmax(theta / alpha)) and a state-value table w.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pgql/mdp.h"

namespace pgql {

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  bool done = false;
  int a_next = -1;  // action taken at s_next; only the SARSA critic uses it

  friend bool operator==(const Transition&, const Transition&) = default;
};

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  // Uniform with replacement.
  std::vector<Transition> sample(std::size_t batch_size,
                                 std::mt19937_64& rng) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return storage_.size(); }
  bool empty() const { return size_ == 0; }
  // i = 0 is the oldest stored transition.
  const Transition& operator[](std::size_t i) const;
  std::vector<Transition> contents() const;

 private:
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

enum class CriticVariant { kSarsa, kExpectedSarsa, kQLearning, kMonteCarlo };

// How entropy regularization enters the actor-critic update.
enum class ActorForm {
  kQTildeBaseline,   // delta = q_hat - Q~(s, a)
  kExplicitEntropy,  // delta = q_hat - V(s) plus an explicit alpha grad H term
};

// Ordering of the two halves of a combined step.
enum class PgqlMode {
  kBlend,      // (1 - eta) actor-critic + eta Q-learning, both at the same
               // parameters
  kPractical,  // full actor-critic step, then a full Q-learning step with
               // lr_q on the updated parameters; eta = 0 or 1 drops a half
};

struct AgentConfig {
  double alpha = 0.001;
  double gamma = 0.95;
  double eta = 0.5;
  double lr_actor = 1.0;
  double lr_critic = 1.0;
  double lr_q = 1.0;
  CriticVariant critic = CriticVariant::kExpectedSarsa;
  ActorForm actor_form = ActorForm::kQTildeBaseline;
  PgqlMode pgql_mode = PgqlMode::kPractical;
  std::size_t replay_capacity = 10'000;
  std::size_t batch_size = 8;

  void validate() const;
};

struct ParameterDelta {
  Eigen::MatrixXd theta;
  Eigen::VectorXd w;
};

struct AgentState {
  AgentState(int n_states, int n_actions, const AgentConfig& config,
             std::uint64_t seed);

  int n_states() const { return static_cast<int>(theta.rows()); }
  int n_actions() const { return static_cast<int>(theta.cols()); }

  // softmax(theta / alpha), temperature alpha.
  TabularPolicy policy() const;
  // Dueling composition theta - sum_b pi theta + w, which equals
  // alpha (log pi + H) + w.
  QTable q_values() const;
  int sample_action(int s);

  void apply(const ParameterDelta& delta, double scale = 1.0);

  Eigen::MatrixXd theta;
  Eigen::VectorXd w;
  AgentConfig config;
  ReplayBuffer replay;
  std::mt19937_64 rng;
};

// Dueling composition Y - sum_b mu(s, b) Y(s, b) + V.
Eigen::MatrixXd dueling_q(const Eigen::MatrixXd& y, const Eigen::VectorXd& v,
                          const Eigen::MatrixXd& mu);

// Bootstrapped critic estimate for the configured variant. Monte-Carlo
// returns come from mc_critic instead.
double critic_estimate(const AgentState& agent, const Transition& t);

// Actor-critic delta for one transition against a given critic value q_hat.
ParameterDelta ac_delta(const AgentState& agent, const Transition& t,
                        double q_hat);
ParameterDelta ac_delta(const AgentState& agent, const Transition& t);

enum class ValueError { kQLearning, kExpectedSarsa };

// Batch-averaged action-value delta. `mu` defaults to the current policy.
ParameterDelta av_delta(const AgentState& agent,
                        std::span<const Transition> batch,
                        ValueError error = ValueError::kQLearning,
                        const Eigen::MatrixXd* mu = nullptr);

void ac_step(AgentState& agent, const Transition& t, double scale = 1.0);
// Updates every step of a finished episode with Monte-Carlo returns.
void ac_episode_step(AgentState& agent, std::span<const Transition> episode);
void av_step(AgentState& agent, std::span<const Transition> batch,
             double scale = 1.0);

// Pushes t into replay, then applies the actor-critic and Q-learning halves.
// The Q-learning half is skipped while replay holds fewer than batch_size
// transitions.
void pgql_step(AgentState& agent, const Transition& t);
// Same as pgql_step but with the replay batch supplied by the caller.
void pgql_step_with_batch(AgentState& agent, const Transition& t,
                          std::span<const Transition> batch);

// Discounted return from each step to the end of a terminated episode.
std::vector<double> mc_critic(std::span<const Transition> episode,
                              double gamma);

struct EquivalenceOptions {
  double alpha = 0.1;
  double gamma = 0.9;
  double learning_rate = 0.1;
  bool freeze_mu = false;  // counterfactual: mu stays at the initial policy
};

// Runs an actor-critic agent and a dueling expected-SARSA agent on the same
// transition stream and returns the largest parameter discrepancy seen.
double equivalence_check(std::uint64_t seed, int n_states, int n_actions,
                         int n_steps, const EquivalenceOptions& options = {});

}  // namespace pgql

#endif  // PGQL_AGENTS_H_
