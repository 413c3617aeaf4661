// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "env.hpp"

namespace ald {

// Open 7x7 gridworld with K objects and a hidden fetch order. Walking onto
// the next object in the hidden order collects it; reward 1 is paid only
// when the collected prefix grows past its previous best within this cycle.
// Walking onto any other uncollected object clears all collected flags (no
// reward). Completing all K clears the flags and the paid-prefix marker so
// the next cycle pays again. Episodes end after exactly 300 steps.
//
// Observation: 15 cells forward x 3 columns (left of heading, center,
// right), starting one cell ahead of the agent, 4 channels per cell in
// order (free, wall, object, collected object), flattened distance-major:
// index = (d*3 + w)*4 + channel. Off-grid reads as wall; cells beyond the
// first wall in a column are all-zero.
class MetaFetchEnv : public Env {
 public:
  enum Action { kForward = 0, kTurnLeft = 1, kTurnRight = 2 };
  static constexpr int kGrid = 7;
  static constexpr int kHorizon = 300;
  static constexpr int kDepth = 15, kWidth = 3, kChannels = 4;

  explicit MetaFetchEnv(int objects);

  int64_t obs_dim() const override { return kDepth * kWidth * kChannels; }
  int64_t num_actions() const override { return 3; }
  int64_t horizon() const override { return kHorizon; }
  Tensor reset(uint64_t seed) override;
  StepResult step(int action) override;
  bool done() const override { return done_; }
  bool success() const override { return cycles_ > 0; }
  std::string ascii() const override;
  const char* name() const override { return "metafetch"; }
  int wire_id() const override { return 2; }

  // Collision state machine, exposed for direct scenario tests: the agent
  // just landed on object `idx` (index into object_cells). Returns reward.
  float on_object(int idx);

  // Full-state access for oracles and tests.
  int objects() const { return k_; }
  const std::vector<int>& object_cells() const { return cells_; }  // r*kGrid+c
  const std::vector<int>& fetch_order() const { return order_; }   // object idx by rank
  const std::vector<uint8_t>& collected() const { return collected_; }
  int collected_count() const { return collected_count_; }
  int rewarded_depth() const { return rewarded_depth_; }
  int cycles() const { return cycles_; }
  int row() const { return row_; }
  int col() const { return col_; }
  int dir() const { return dir_; }
  int steps() const { return steps_; }

  Tensor render() const;

 private:
  int k_;
  std::vector<int> cells_;
  std::vector<int> order_;
  std::vector<uint8_t> collected_;
  int collected_count_ = 0;
  int rewarded_depth_ = 0;
  int cycles_ = 0;
  int row_ = 0, col_ = 0, dir_ = 0;
  bool done_ = true;
  int steps_ = 0;
};

}  // namespace ald
