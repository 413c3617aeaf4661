// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "env.hpp"

namespace ald {

// I-shaped corridor maze. Top row, bottom row and a central column are free;
// the agent starts at the top-left facing east. The cell at the top-right
// end shows a color: red means the bottom-left goal pays, green means the
// bottom-right goal pays. Entering the indicated goal gives reward 1 and
// ends the episode; the wrong goal ends it with 0. On the 15x15 maze each
// central-column cell pays +0.01 on first visit.
//
// Observation: `size` pixels along the facing direction starting at the
// agent's own cell, 3 channels per pixel in order (wall, green, red),
// flattened pixel-major. Pixels beyond the first wall (or off-grid) are
// all-zero; the first blocking cell itself reads as wall.
class IMazeEnv : public Env {
 public:
  enum Action { kForward = 0, kTurnLeft = 1, kTurnRight = 2, kNoop = 3 };

  explicit IMazeEnv(int size);

  int64_t obs_dim() const override { return static_cast<int64_t>(size_) * 3; }
  int64_t num_actions() const override { return 4; }
  int64_t horizon() const override { return horizon_; }
  Tensor reset(uint64_t seed) override;
  StepResult step(int action) override;
  bool done() const override { return done_; }
  bool success() const override { return success_; }
  std::string ascii() const override;
  const char* name() const override { return "imaze"; }
  int wire_id() const override { return 1; }

  // Full-state access for oracles and tests.
  bool free_cell(int r, int c) const;
  int size() const { return size_; }
  bool indicator_red() const { return indicator_red_; }
  int row() const { return row_; }
  int col() const { return col_; }
  int dir() const { return dir_; }  // 0=N 1=E 2=S 3=W
  int goal_row() const { return size_ - 1; }
  int correct_goal_col() const { return indicator_red_ ? 0 : size_ - 1; }
  int steps() const { return steps_; }

  Tensor render() const;

 private:
  int size_;
  int64_t horizon_;
  int row_ = 0, col_ = 0, dir_ = 1;
  bool indicator_red_ = false;
  bool done_ = true, success_ = false;
  int steps_ = 0;
  std::vector<uint8_t> visited_column_;  // 15x15 shaping flags, by row
};

}  // namespace ald
