#include "pgql/envs.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pgql/errors.h"

namespace pgql {

void GridWorldSpec::validate() const {
  if (rows <= 0 || cols <= 0) throw SpecError("grid must be non-empty");
  auto inside = [&](Cell c) {
    return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
  };
  if (!inside(start)) throw SpecError("start cell lies outside the grid");
  if (!inside(terminal)) throw SpecError("terminal cell lies outside the grid");
  if (start == terminal) throw SpecError("start and terminal coincide");
  if (is_wall(start) || is_wall(terminal)) {
    throw SpecError("start/terminal cell is a wall");
  }
  for (const Cell& w : walls) {
    if (!inside(w)) throw SpecError("wall lies outside the grid");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw DomainError("gamma must lie strictly inside (0, 1)");
  }
}

bool GridWorldSpec::is_wall(Cell c) const {
  return std::find(walls.begin(), walls.end(), c) != walls.end();
}

GridWorldSpec parse_grid_layout(std::string_view text, double gamma) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw SpecError("layout is empty");

  GridWorldSpec spec;
  spec.rows = static_cast<int>(lines.size());
  spec.cols = static_cast<int>(lines.front().size());
  spec.gamma = gamma;
  int starts = 0, terminals = 0;
  for (int r = 0; r < spec.rows; ++r) {
    if (static_cast<int>(lines[r].size()) != spec.cols) {
      throw SpecError("layout row " + std::to_string(r) + " has width " +
                      std::to_string(lines[r].size()) + ", expected " +
                      std::to_string(spec.cols));
    }
    for (int c = 0; c < spec.cols; ++c) {
      switch (lines[r][c]) {
        case '.':
          break;
        case '#':
          spec.walls.push_back({r, c});
          break;
        case 'S':
          spec.start = {r, c};
          ++starts;
          break;
        case 'T':
          spec.terminal = {r, c};
          ++terminals;
          break;
        default:
          throw SpecError(std::string("unexpected layout character '") +
                          lines[r][c] + "'");
      }
    }
  }
  if (starts != 1 || terminals != 1) {
    throw SpecError("layout needs exactly one S and one T");
  }
  spec.validate();
  return spec;
}

GridWorldSpec load_grid_layout(const std::string& path, double gamma) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open layout file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_grid_layout(buffer.str(), gamma);
}

GridWorld::GridWorld(GridWorldSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  index_.assign(spec_.rows * spec_.cols, -1);
  for (int r = 0; r < spec_.rows; ++r) {
    for (int c = 0; c < spec_.cols; ++c) {
      if (spec_.is_wall({r, c})) continue;
      index_[r * spec_.cols + c] = static_cast<int>(cells_.size());
      cells_.push_back({r, c});
    }
  }
}

int GridWorld::state_of(Cell c) const {
  if (c.row < 0 || c.row >= spec_.rows || c.col < 0 || c.col >= spec_.cols) {
    return -1;
  }
  return index_[c.row * spec_.cols + c.col];
}

Cell GridWorld::move(Cell from, int action) const {
  Cell to = from;
  switch (action) {
    case kUp: --to.row; break;
    case kDown: ++to.row; break;
    case kLeft: --to.col; break;
    case kRight: ++to.col; break;
    default: throw DomainError("unknown grid action");
  }
  return state_of(to) < 0 ? from : to;
}

TabularMdp GridWorld::to_mdp() const {
  TabularMdp mdp = TabularMdp::zeros(n_states(), kGridActions, spec_.gamma);
  const int goal = terminal_state();
  mdp.terminal[goal] = 1;
  mdp.initial_dist(start_state()) = 1.0;
  for (int s = 0; s < n_states(); ++s) {
    for (int a = 0; a < kGridActions; ++a) {
      if (s == goal) {
        mdp.transition(mdp.row(s, a), s) = 1.0;
        continue;
      }
      const int next = state_of(move(cells_[s], a));
      mdp.transition(mdp.row(s, a), next) = 1.0;
      mdp.reward(s, a) = next == goal ? 1.0 : 0.0;
    }
  }
  mdp.validate();
  return mdp;
}

TabularMdp gridworld_to_mdp(const GridWorldSpec& spec) {
  return GridWorld(spec).to_mdp();
}

TabularMdp garnet_generate(const GarnetSpec& spec) {
  if (spec.n_states <= 0 || spec.n_actions <= 0) {
    throw SpecError("garnet needs positive state and action counts");
  }
  if (spec.branching < 1 || spec.branching > spec.n_states) {
    throw SpecError("garnet branching must lie in [1, n_states]");
  }
  TabularMdp mdp = TabularMdp::zeros(spec.n_states, spec.n_actions, spec.gamma);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> states(spec.n_states);
  std::iota(states.begin(), states.end(), 0);
  std::vector<double> weights(spec.branching);

  for (int s = 0; s < spec.n_states; ++s) {
    for (int a = 0; a < spec.n_actions; ++a) {
      // Partial Fisher-Yates: the first `branching` entries are the sample.
      for (int i = 0; i < spec.branching; ++i) {
        std::uniform_int_distribution<int> pick(i, spec.n_states - 1);
        std::swap(states[i], states[pick(rng)]);
      }
      double total = 0.0;
      for (double& w : weights) {
        w = unit(rng) + 1e-12;
        total += w;
      }
      for (int i = 0; i < spec.branching; ++i) {
        mdp.transition(mdp.row(s, a), states[i]) = weights[i] / total;
      }
      mdp.reward(s, a) = unit(rng);
    }
  }
  mdp.initial_dist.setConstant(1.0 / spec.n_states);
  mdp.validate();
  return mdp;
}

EpisodeStepper::EpisodeStepper(std::shared_ptr<const TabularMdp> mdp,
                               std::uint64_t seed)
    : mdp_(std::move(mdp)), rng_(seed) {
  if (!mdp_) throw SpecError("stepper needs an MDP");
}

int EpisodeStepper::sample_row(
    const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  double acc = 0.0;
  int last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

int EpisodeStepper::reset() {
  state_ = sample_row(mdp_->initial_dist.transpose());
  finished_ = mdp_->is_terminal(state_);
  return state_;
}

StepResult EpisodeStepper::step(int action) {
  if (finished_) {
    throw EpisodeFinishedError("episode finished; call reset() first");
  }
  if (action < 0 || action >= mdp_->n_actions) {
    throw DomainError("action out of range");
  }
  StepResult out;
  out.reward = mdp_->reward(state_, action);
  out.next_state = sample_row(mdp_->transition.row(mdp_->row(state_, action)));
  out.done = mdp_->is_terminal(out.next_state);
  state_ = out.next_state;
  finished_ = out.done;
  ++steps_;
  return out;
}

}  // namespace pgql
