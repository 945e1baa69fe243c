#ifndef PGQL_ENVS_H_
#define PGQL_ENVS_H_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pgql/mdp.h"

namespace pgql {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kGridActions = 4;

// Deterministic grid world. Reward 1 on entering the terminal cell, 0
// otherwise. Walls are excluded from the state set; bumping into a wall or
// the border leaves the agent in place.
struct GridWorldSpec {
  int rows = 4;
  int cols = 6;
  Cell start{0, 0};
  Cell terminal{3, 5};
  std::vector<Cell> walls;
  double gamma = 0.95;

  void validate() const;
  bool is_wall(Cell c) const;
};

// Layout text: one line per row over {'.', 'S', 'T', '#'}.
GridWorldSpec parse_grid_layout(std::string_view text, double gamma = 0.95);
GridWorldSpec load_grid_layout(const std::string& path, double gamma = 0.95);

// Maps grid cells to MDP state ids (row-major over non-wall cells).
class GridWorld {
 public:
  explicit GridWorld(GridWorldSpec spec);

  const GridWorldSpec& spec() const { return spec_; }
  int n_states() const { return static_cast<int>(cells_.size()); }
  int state_of(Cell c) const;  // -1 for walls / off-grid
  Cell cell_of(int state) const { return cells_.at(state); }
  int start_state() const { return state_of(spec_.start); }
  int terminal_state() const { return state_of(spec_.terminal); }
  // Destination of a move, ignoring termination.
  Cell move(Cell from, int action) const;

  TabularMdp to_mdp() const;

 private:
  GridWorldSpec spec_;
  std::vector<Cell> cells_;
  std::vector<int> index_;  // rows * cols, -1 for walls
};

TabularMdp gridworld_to_mdp(const GridWorldSpec& spec);

struct GarnetSpec {
  int n_states = 10;
  int n_actions = 4;
  int branching = 3;
  double gamma = 0.9;
  std::uint64_t seed = 0;
};

// Random MDP: each (s, a) reaches `branching` distinct successors with
// normalized uniform weights; rewards U[0, 1]; uniform start distribution.
TabularMdp garnet_generate(const GarnetSpec& spec);

struct StepResult {
  int next_state = 0;
  double reward = 0.0;
  bool done = false;
};

// Samples episodes from an exact MDP. Single owner; one per worker thread.
class EpisodeStepper {
 public:
  EpisodeStepper(std::shared_ptr<const TabularMdp> mdp, std::uint64_t seed);

  int reset();
  StepResult step(int action);

  int state() const { return state_; }
  bool finished() const { return finished_; }
  std::int64_t steps() const { return steps_; }
  const TabularMdp& mdp() const { return *mdp_; }

 private:
  int sample_row(const Eigen::Ref<const Eigen::RowVectorXd>& probs);

  std::shared_ptr<const TabularMdp> mdp_;
  std::mt19937_64 rng_;
  int state_ = 0;
  bool finished_ = true;
  std::int64_t steps_ = 0;
};

}  // namespace pgql

#endif  // PGQL_ENVS_H_
