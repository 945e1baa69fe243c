#include "pgql/agents.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "pgql/envs.h"
#include "pgql/errors.h"

namespace pgql {
namespace {

// Softmax statistics of one state's preferences at temperature alpha.
struct RowPolicy {
  Eigen::RowVectorXd probs;
  Eigen::RowVectorXd logp;
  double entropy = 0.0;
};

RowPolicy row_policy(const Eigen::MatrixXd& theta, int s, double alpha) {
  const Eigen::RowVectorXd logits = theta.row(s) / alpha;
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  RowPolicy out;
  out.logp = logits.array() - lse;
  out.probs = out.logp.array().exp();
  out.entropy = -(out.probs.array() * out.logp.array()).sum();
  return out;
}

// alpha (log pi(s, a) + H(s)) + w(s)
double q_tilde_at(const AgentState& agent, int s, int a) {
  const RowPolicy pi = row_policy(agent.theta, s, agent.config.alpha);
  return agent.config.alpha * (pi.logp(a) + pi.entropy) + agent.w(s);
}

double q_tilde_max(const AgentState& agent, int s) {
  const RowPolicy pi = row_policy(agent.theta, s, agent.config.alpha);
  return agent.config.alpha * (pi.logp.maxCoeff() + pi.entropy) + agent.w(s);
}

void check_transition(const AgentState& agent, const Transition& t) {
  if (t.s < 0 || t.s >= agent.n_states() || t.s_next < 0 ||
      t.s_next >= agent.n_states() || t.a < 0 || t.a >= agent.n_actions()) {
    throw DomainError("transition indices out of range");
  }
}

ParameterDelta zero_delta(const AgentState& agent) {
  return ParameterDelta{
      Eigen::MatrixXd::Zero(agent.n_states(), agent.n_actions()),
      Eigen::VectorXd::Zero(agent.n_states())};
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
  if (capacity == 0) throw DomainError("replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  storage_[head_] = t;
  head_ = (head_ + 1) % storage_.size();
  size_ = std::min(size_ + 1, storage_.size());
}

const Transition& ReplayBuffer::operator[](std::size_t i) const {
  if (i >= size_) throw DomainError("replay index out of range");
  const std::size_t oldest = (head_ + storage_.size() - size_) % storage_.size();
  return storage_[(oldest + i) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::vector<Transition> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) out.push_back((*this)[i]);
  return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size,
                                             std::mt19937_64& rng) const {
  if (size_ == 0) throw EmptyInputError("cannot sample an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<Transition> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back((*this)[pick(rng)]);
  return batch;
}

void AgentConfig::validate() const {
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in (0, 1)");
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0, 1]");
  if (!(lr_actor > 0.0 && lr_critic > 0.0 && lr_q > 0.0)) {
    throw DomainError("learning rates must be positive");
  }
  if (replay_capacity == 0) throw DomainError("replay capacity must be positive");
  if (batch_size == 0) throw DomainError("batch size must be positive");
}

AgentState::AgentState(int n_states, int n_actions, const AgentConfig& cfg,
                       std::uint64_t seed)
    : theta(Eigen::MatrixXd::Zero(n_states, n_actions)),
      w(Eigen::VectorXd::Zero(n_states)),
      config(cfg),
      replay(cfg.replay_capacity),
      rng(seed) {
  config.validate();
}

TabularPolicy AgentState::policy() const {
  return TabularPolicy{theta / config.alpha, config.alpha};
}

QTable AgentState::q_values() const {
  return QTable{dueling_q(theta, w, policy().probabilities())};
}

int AgentState::sample_action(int s) {
  const RowPolicy pi = row_policy(theta, s, config.alpha);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = 0;
  for (int a = 0; a < n_actions(); ++a) {
    if (pi.probs(a) <= 0.0) continue;
    acc += pi.probs(a);
    last = a;
    if (u < acc) return a;
  }
  return last;
}

void AgentState::apply(const ParameterDelta& delta, double scale) {
  theta += scale * delta.theta;
  w += scale * delta.w;
}

Eigen::MatrixXd dueling_q(const Eigen::MatrixXd& y, const Eigen::VectorXd& v,
                          const Eigen::MatrixXd& mu) {
  const Eigen::VectorXd mean = (mu.array() * y.array()).rowwise().sum();
  Eigen::MatrixXd out = y.colwise() - mean;
  out.colwise() += v;
  return out;
}

double critic_estimate(const AgentState& agent, const Transition& t) {
  check_transition(agent, t);
  const double continuation = t.done ? 0.0 : agent.config.gamma;
  switch (agent.config.critic) {
    case CriticVariant::kExpectedSarsa:
      return t.r + continuation * agent.w(t.s_next);
    case CriticVariant::kSarsa:
      if (t.done) return t.r;
      if (t.a_next < 0 || t.a_next >= agent.n_actions()) {
        throw DomainError("SARSA critic needs the next action");
      }
      return t.r + continuation * q_tilde_at(agent, t.s_next, t.a_next);
    case CriticVariant::kQLearning:
      return t.r + (t.done ? 0.0 : continuation * q_tilde_max(agent, t.s_next));
    case CriticVariant::kMonteCarlo:
      break;
  }
  throw DomainError("Monte-Carlo critic needs a complete episode");
}

ParameterDelta ac_delta(const AgentState& agent, const Transition& t,
                        double q_hat) {
  check_transition(agent, t);
  const AgentConfig& cfg = agent.config;
  const RowPolicy pi = row_policy(agent.theta, t.s, cfg.alpha);
  ParameterDelta delta = zero_delta(agent);
  if (cfg.actor_form == ActorForm::kQTildeBaseline) {
    const double q_tilde = cfg.alpha * (pi.logp(t.a) + pi.entropy) + agent.w(t.s);
    const double error = q_hat - q_tilde;
    for (int b = 0; b < agent.n_actions(); ++b) {
      delta.theta(t.s, b) = cfg.lr_actor * error * ((b == t.a) - pi.probs(b));
    }
    delta.w(t.s) = cfg.lr_critic * error;
  } else {
    const double error = q_hat - agent.w(t.s);
    for (int b = 0; b < agent.n_actions(); ++b) {
      const double entropy_term =
          cfg.alpha * pi.probs(b) * (pi.logp(b) + pi.entropy);
      delta.theta(t.s, b) =
          cfg.lr_actor * (error * ((b == t.a) - pi.probs(b)) - entropy_term);
    }
    delta.w(t.s) = cfg.lr_critic * error;
  }
  return delta;
}

ParameterDelta ac_delta(const AgentState& agent, const Transition& t) {
  return ac_delta(agent, t, critic_estimate(agent, t));
}

ParameterDelta av_delta(const AgentState& agent,
                        std::span<const Transition> batch, ValueError error,
                        const Eigen::MatrixXd* mu) {
  if (batch.empty()) throw EmptyInputError("action-value step needs a batch");
  const Eigen::MatrixXd current =
      mu == nullptr ? agent.policy().probabilities() : *mu;
  const Eigen::MatrixXd q = dueling_q(agent.theta, agent.w, current);
  const double lr = agent.config.lr_q / static_cast<double>(batch.size());

  ParameterDelta delta = zero_delta(agent);
  for (const Transition& t : batch) {
    check_transition(agent, t);
    double target = t.r;
    if (!t.done) {
      target += agent.config.gamma * (error == ValueError::kQLearning
                                          ? q.row(t.s_next).maxCoeff()
                                          : agent.w(t.s_next));
    }
    const double td = target - q(t.s, t.a);
    for (int b = 0; b < agent.n_actions(); ++b) {
      delta.theta(t.s, b) += lr * td * ((b == t.a) - current(t.s, b));
    }
    delta.w(t.s) += lr * td;
  }
  return delta;
}

void ac_step(AgentState& agent, const Transition& t, double scale) {
  agent.apply(ac_delta(agent, t), scale);
}

void ac_episode_step(AgentState& agent, std::span<const Transition> episode) {
  const std::vector<double> returns = mc_critic(episode, agent.config.gamma);
  for (std::size_t i = 0; i < episode.size(); ++i) {
    agent.apply(ac_delta(agent, episode[i], returns[i]));
  }
}

void av_step(AgentState& agent, std::span<const Transition> batch,
             double scale) {
  agent.apply(av_delta(agent, batch), scale);
}

void pgql_step_with_batch(AgentState& agent, const Transition& t,
                          std::span<const Transition> batch) {
  const double eta = agent.config.eta;
  if (agent.config.pgql_mode == PgqlMode::kPractical) {
    // eta only switches the halves off at its end points here.
    if (eta < 1.0) ac_step(agent, t);
    if (eta > 0.0 && !batch.empty()) av_step(agent, batch);
    return;
  }
  // Both halves see the same parameters, so the step is linear in eta.
  std::optional<ParameterDelta> actor, learner;
  if (eta < 1.0) actor = ac_delta(agent, t);
  if (eta > 0.0 && !batch.empty()) learner = av_delta(agent, batch);
  if (actor) agent.apply(*actor, 1.0 - eta);
  if (learner) agent.apply(*learner, eta);
}

void pgql_step(AgentState& agent, const Transition& t) {
  agent.replay.push(t);
  std::vector<Transition> batch;
  if (agent.replay.size() >= agent.config.batch_size) {
    batch = agent.replay.sample(agent.config.batch_size, agent.rng);
  }
  pgql_step_with_batch(agent, t, batch);
}

std::vector<double> mc_critic(std::span<const Transition> episode,
                              double gamma) {
  if (episode.empty() || !episode.back().done) {
    throw DomainError("Monte-Carlo returns need a terminated episode");
  }
  std::vector<double> returns(episode.size());
  double running = 0.0;
  for (std::size_t i = episode.size(); i-- > 0;) {
    running = episode[i].r + gamma * running;
    returns[i] = running;
  }
  return returns;
}

double equivalence_check(std::uint64_t seed, int n_states, int n_actions,
                         int n_steps, const EquivalenceOptions& options) {
  GarnetSpec spec;
  spec.n_states = n_states;
  spec.n_actions = n_actions;
  spec.branching = std::min(3, n_states);
  spec.gamma = options.gamma;
  spec.seed = seed;
  auto mdp = std::make_shared<const TabularMdp>(garnet_generate(spec));

  AgentConfig cfg;
  cfg.alpha = options.alpha;
  cfg.gamma = options.gamma;
  cfg.critic = CriticVariant::kExpectedSarsa;
  cfg.actor_form = ActorForm::kQTildeBaseline;
  // A zero rate is allowed here: it is the degenerate reference run.
  const double lr = options.learning_rate;
  cfg.lr_actor = cfg.lr_critic = cfg.lr_q = lr > 0.0 ? lr : 1.0;

  AgentState actor_critic(n_states, n_actions, cfg, seed);
  std::mt19937_64 init(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : actor_critic.theta.reshaped()) x = normal(init);
  for (double& x : actor_critic.w) x = normal(init);
  AgentState action_value = actor_critic;

  const Eigen::MatrixXd initial_mu = actor_critic.policy().probabilities();
  const double scale = lr > 0.0 ? 1.0 : 0.0;
  EpisodeStepper env(mdp, seed + 1);
  int s = env.reset();
  double worst = 0.0;
  for (int step = 0; step < n_steps; ++step) {
    const int a = actor_critic.sample_action(s);
    const StepResult out = env.step(a);
    const Transition t{s, a, out.reward, out.next_state, out.done};

    const ParameterDelta ac = ac_delta(actor_critic, t);
    const std::span<const Transition> one(&t, 1);
    const ParameterDelta av =
        av_delta(action_value, one, ValueError::kExpectedSarsa,
                 options.freeze_mu ? &initial_mu : nullptr);
    actor_critic.apply(ac, scale);
    action_value.apply(av, scale);

    worst = std::max(worst, sup_norm(actor_critic.theta - action_value.theta) +
                                sup_norm(actor_critic.w - action_value.w));
    s = out.done ? env.reset() : out.next_state;
  }
  return worst;
}

}  // namespace pgql
