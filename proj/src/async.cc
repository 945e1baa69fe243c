#include <algorithm>
#include <atomic>
#include <memory>
#include <thread>

#include "pgql/errors.h"
#include "pgql/harness.h"

namespace pgql {
namespace {

struct Snapshot {
  std::int64_t step = 0;
  Eigen::MatrixXd theta;
  Eigen::VectorXd w;
};

// Runs `fn` on `scratch` with the shared parameters swapped in, so the
// single-agent update functions can be reused under the table's lock.
void with_shared(SharedParameters& params, AgentState& scratch,
                 const std::function<void(AgentState&)>& fn) {
  params.update([&](Eigen::MatrixXd& theta, Eigen::VectorXd& w) {
    scratch.theta.swap(theta);
    scratch.w.swap(w);
    fn(scratch);
    scratch.theta.swap(theta);
    scratch.w.swap(w);
  });
}

Trace run_async_single(const ExperimentConfig& config,
                       std::shared_ptr<const TabularMdp> mdp,
                       std::uint64_t seed) {
  AgentConfig cfg = effective_agent_config(config);
  AgentConfig scratch_cfg = cfg;
  scratch_cfg.replay_capacity = 1;

  SharedParameters params(Eigen::MatrixXd::Zero(mdp->n_states, mdp->n_actions),
                          Eigen::VectorXd::Zero(mdp->n_states));
  SharedReplay replay(cfg.replay_capacity);
  std::atomic<std::int64_t> next_step{0};
  std::atomic<std::int64_t> completed{0};
  std::atomic<std::int64_t> learned{0};
  std::atomic<bool> actors_done{false};
  const std::int64_t max_lag = 2 * config.workers;
  const bool sarsa = cfg.critic == CriticVariant::kSarsa;

  std::mutex snapshot_mu;
  std::vector<Snapshot> snapshots;
  {
    auto [theta, w] = params.snapshot();
    snapshots.push_back({0, std::move(theta), std::move(w)});
  }

  auto actor = [&](int worker) {
    AgentState local(mdp->n_states, mdp->n_actions, scratch_cfg,
                     seed * 1000003ULL + 2 * worker + 1);
    EpisodeStepper env(mdp, seed * 1000003ULL + 2 * worker + 2);
    int s = env.reset();
    std::int64_t episode_length = 0;
    int pending_action = -1;
    while (true) {
      const std::int64_t step = next_step.fetch_add(1) + 1;
      if (step > config.steps) break;
      while (completed.load() - learned.load() > max_lag &&
             replay.size() >= cfg.batch_size) {
        std::this_thread::yield();
      }
      int a = pending_action;
      if (a < 0) {
        with_shared(params, local,
                    [&](AgentState& agent) { a = agent.sample_action(s); });
      }
      pending_action = -1;
      const StepResult out = env.step(a);
      Transition t{s, a, out.reward, out.next_state, out.done};
      ++episode_length;
      const bool truncated = config.max_episode_steps > 0 &&
                             episode_length >= config.max_episode_steps;
      with_shared(params, local, [&](AgentState& agent) {
        if (sarsa && !out.done) {
          t.a_next = agent.sample_action(out.next_state);
          if (!truncated) pending_action = t.a_next;
        }
        ac_step(agent, t);
      });
      replay.push(t);
      completed.fetch_add(1);

      if (step % config.eval_every == 0 || step == config.steps) {
        auto [theta, w] = params.snapshot();
        std::lock_guard<std::mutex> lock(snapshot_mu);
        snapshots.push_back({step, std::move(theta), std::move(w)});
      }
      if (out.done || truncated) {
        s = env.reset();
        episode_length = 0;
      } else {
        s = out.next_state;
      }
    }
  };

  // One Q-learning step per completed actor step. Actors stall while the
  // learner trails by more than max_lag steps.
  auto learner = [&]() {
    AgentState local(mdp->n_states, mdp->n_actions, scratch_cfg,
                     seed * 1000003ULL);
    std::mt19937_64 rng(seed * 1000003ULL + 7);
    std::int64_t done_steps = 0;
    while (!actors_done.load()) {
      if (done_steps >= completed.load()) {
        std::this_thread::yield();
        continue;
      }
      const std::vector<Transition> batch = replay.sample(cfg.batch_size, rng);
      if (batch.empty()) {
        std::this_thread::yield();
        continue;
      }
      with_shared(params, local,
                  [&](AgentState& agent) { av_step(agent, batch); });
      ++done_steps;
      learned.store(done_steps);
    }
  };

  std::thread learner_thread(learner);
  std::vector<std::thread> actors;
  for (int i = 0; i < config.workers; ++i) actors.emplace_back(actor, i);
  for (std::thread& t : actors) t.join();
  actors_done.store(true);
  learner_thread.join();

  std::sort(snapshots.begin(), snapshots.end(),
            [](const Snapshot& a, const Snapshot& b) { return a.step < b.step; });
  Trace trace;
  trace.agent = AgentKind::kPgql;
  trace.seed = seed;
  for (const Snapshot& snap : snapshots) {
    trace.rows.push_back(
        evaluate_snapshot(*mdp, snap.theta, snap.w, cfg.alpha, snap.step, seed));
    trace.checkpoints.push_back(snap.theta / cfg.alpha);
  }
  return trace;
}

}  // namespace

SharedParameters::SharedParameters(Eigen::MatrixXd theta, Eigen::VectorXd w)
    : theta_(std::move(theta)), w_(std::move(w)) {}

void SharedParameters::update(
    const std::function<void(Eigen::MatrixXd&, Eigen::VectorXd&)>& fn) {
  std::lock_guard<std::mutex> lock(mu_);
  fn(theta_, w_);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> SharedParameters::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return {theta_, w_};
}

void SharedReplay::push(const Transition& t) {
  std::lock_guard<std::mutex> lock(mu_);
  buffer_.push(t);
}

std::vector<Transition> SharedReplay::sample(std::size_t batch_size,
                                             std::mt19937_64& rng) {
  std::lock_guard<std::mutex> lock(mu_);
  if (buffer_.size() < batch_size) return {};
  return buffer_.sample(batch_size, rng);
}

std::size_t SharedReplay::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return buffer_.size();
}

ExperimentResult run_async(const ExperimentConfig& config) {
  config.validate();
  for (AgentKind kind : config.agents) {
    if (kind != AgentKind::kPgql) {
      throw ConfigError("agent", "asynchronous mode runs the pgql agent only");
    }
  }
  if (config.workers == 1) return run_experiment(config);

  auto mdp = std::make_shared<const TabularMdp>(make_environment(config));
  const QTable q_star = solve_q_star(*mdp);
  ExperimentResult result;
  result.j_star = mdp->initial_dist.dot(
      Eigen::VectorXd(q_star.values.rowwise().maxCoeff()));
  for (std::uint64_t seed : config.seeds) {
    Trace trace = run_async_single(config, mdp, seed);
    trace.j_star = result.j_star;
    result.traces.push_back(std::move(trace));
  }
  if (!config.out.empty()) write_experiment_files(config, result);
  return result;
}

}  // namespace pgql
