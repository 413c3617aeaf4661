// SPDX-License-Identifier: Apache-2.0
#include "imaze.hpp"

#include <stdexcept>

#include "rng.hpp"

namespace ald {

namespace {
constexpr int kDr[4] = {-1, 0, 1, 0};  // N E S W
constexpr int kDc[4] = {0, 1, 0, -1};
}  // namespace

IMazeEnv::IMazeEnv(int size) : size_(size) {
  if (size != 9 && size != 15)
    throw std::invalid_argument("imaze: size must be 9 or 15, got " + std::to_string(size));
  horizon_ = (size == 9) ? 150 : 350;
}

bool IMazeEnv::free_cell(int r, int c) const {
  if (r < 0 || r >= size_ || c < 0 || c >= size_) return false;
  if (r == 0 || r == size_ - 1) return true;
  return c == size_ / 2;
}

Tensor IMazeEnv::reset(uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, 101);
  indicator_red_ = (rng() & 1) != 0;
  row_ = 0;
  col_ = 0;
  dir_ = 1;  // facing east along the top corridor
  steps_ = 0;
  done_ = false;
  success_ = false;
  visited_column_.assign(static_cast<size_t>(size_), 0);
  return render();
}

Tensor IMazeEnv::render() const {
  Tensor obs{Shape{obs_dim()}};
  float* d = obs.mutable_data();
  bool blocked = false;
  for (int p = 0; p < size_; ++p) {
    if (blocked) break;  // all-zero past the first wall
    int r = row_ + kDr[dir_] * p;
    int c = col_ + kDc[dir_] * p;
    float* px = d + p * 3;
    if (!free_cell(r, c)) {
      px[0] = 1.0f;  // wall
      blocked = true;
      continue;
    }
    if (r == 0 && c == size_ - 1) {
      if (indicator_red_)
        px[2] = 1.0f;
      else
        px[1] = 1.0f;
    }
  }
  return obs;
}

StepResult IMazeEnv::step(int action) {
  if (done_) throw std::logic_error("imaze: step called on a finished episode");
  if (action < 0 || action > 3)
    throw std::invalid_argument("imaze: action must be in [0,4), got " + std::to_string(action));
  float reward = 0;
  if (action == kTurnLeft) {
    dir_ = (dir_ + 3) % 4;
  } else if (action == kTurnRight) {
    dir_ = (dir_ + 1) % 4;
  } else if (action == kForward) {
    int nr = row_ + kDr[dir_];
    int nc = col_ + kDc[dir_];
    if (free_cell(nr, nc)) {
      row_ = nr;
      col_ = nc;
      if (size_ == 15 && col_ == size_ / 2 && row_ > 0 && row_ < size_ - 1 &&
          !visited_column_[static_cast<size_t>(row_)]) {
        visited_column_[static_cast<size_t>(row_)] = 1;
        reward += 0.01f;
      }
      if (row_ == size_ - 1 && (col_ == 0 || col_ == size_ - 1)) {
        done_ = true;
        if (col_ == correct_goal_col()) {
          reward += 1.0f;
          success_ = true;
        }
      }
    }
  }
  ++steps_;
  if (!done_ && steps_ >= horizon_) done_ = true;
  return {render(), reward, done_};
}

std::string IMazeEnv::ascii() const {
  std::string out;
  for (int r = 0; r < size_; ++r) {
    for (int c = 0; c < size_; ++c) {
      char ch = free_cell(r, c) ? '.' : '#';
      if (r == 0 && c == size_ - 1) ch = indicator_red_ ? 'R' : 'G';
      if (r == size_ - 1 && c == 0) ch = 'L';
      if (r == size_ - 1 && c == size_ - 1) ch = 'r';
      if (r == row_ && c == col_) ch = "^>v<"[dir_];
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace ald
