// SPDX-License-Identifier: Apache-2.0
#include "metafetch.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "rng.hpp"

namespace ald {

namespace {
constexpr int kDr[4] = {-1, 0, 1, 0};  // N E S W
constexpr int kDc[4] = {0, 1, 0, -1};
}  // namespace

MetaFetchEnv::MetaFetchEnv(int objects) : k_(objects) {
  if (objects < 1 || objects >= kGrid * kGrid)
    throw std::invalid_argument("metafetch: object count must be in [1," +
                                std::to_string(kGrid * kGrid) + "), got " + std::to_string(objects));
}

Tensor MetaFetchEnv::reset(uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, 202);
  int agent = static_cast<int>(rng() % (kGrid * kGrid));
  row_ = agent / kGrid;
  col_ = agent % kGrid;
  dir_ = static_cast<int>(rng() % 4);
  std::vector<int> free;
  for (int c = 0; c < kGrid * kGrid; ++c)
    if (c != agent) free.push_back(c);
  std::shuffle(free.begin(), free.end(), rng);
  cells_.assign(free.begin(), free.begin() + k_);
  order_.resize(static_cast<size_t>(k_));
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng);
  collected_.assign(static_cast<size_t>(k_), 0);
  collected_count_ = 0;
  rewarded_depth_ = 0;
  cycles_ = 0;
  steps_ = 0;
  done_ = false;
  return render();
}

float MetaFetchEnv::on_object(int idx) {
  if (collected_[static_cast<size_t>(idx)]) return 0;
  int pos = 0;
  for (int i = 0; i < k_; ++i)
    if (order_[static_cast<size_t>(i)] == idx) pos = i;
  if (pos != collected_count_) {
    // Wrong object: the whole collected prefix resets, nothing is paid.
    collected_.assign(static_cast<size_t>(k_), 0);
    collected_count_ = 0;
    return 0;
  }
  collected_[static_cast<size_t>(idx)] = 1;
  ++collected_count_;
  float reward = 0;
  if (collected_count_ > rewarded_depth_) {
    reward = 1;
    rewarded_depth_ = collected_count_;
  }
  if (collected_count_ == k_) {
    ++cycles_;
    collected_.assign(static_cast<size_t>(k_), 0);
    collected_count_ = 0;
    rewarded_depth_ = 0;  // the next cycle pays the full sequence again
  }
  return reward;
}

StepResult MetaFetchEnv::step(int action) {
  if (done_) throw std::logic_error("metafetch: step called on a finished episode");
  if (action < 0 || action > 2)
    throw std::invalid_argument("metafetch: action must be in [0,3), got " + std::to_string(action));
  float reward = 0;
  if (action == kTurnLeft) {
    dir_ = (dir_ + 3) % 4;
  } else if (action == kTurnRight) {
    dir_ = (dir_ + 1) % 4;
  } else {
    int nr = row_ + kDr[dir_];
    int nc = col_ + kDc[dir_];
    if (nr >= 0 && nr < kGrid && nc >= 0 && nc < kGrid) {
      row_ = nr;
      col_ = nc;
      int cell = nr * kGrid + nc;
      for (int i = 0; i < k_; ++i)
        if (cells_[static_cast<size_t>(i)] == cell && !collected_[static_cast<size_t>(i)]) {
          reward = on_object(i);
          break;
        }
    }
  }
  ++steps_;
  if (steps_ >= kHorizon) done_ = true;
  return {render(), reward, done_};
}

Tensor MetaFetchEnv::render() const {
  Tensor obs{Shape{obs_dim()}};
  float* d = obs.mutable_data();
  const int lat = (dir_ + 3) % 4;  // left of heading
  for (int w = 0; w < kWidth; ++w) {
    const int off = w - 1;  // -1 left, 0 center, +1 right
    bool blocked = false;
    for (int dist = 1; dist <= kDepth; ++dist) {
      if (blocked) break;
      int r = row_ + kDr[dir_] * dist - kDr[lat] * off;
      int c = col_ + kDc[dir_] * dist - kDc[lat] * off;
      float* px = d + ((dist - 1) * kWidth + w) * kChannels;
      if (r < 0 || r >= kGrid || c < 0 || c >= kGrid) {
        px[1] = 1.0f;  // off-grid reads as wall
        blocked = true;
        continue;
      }
      int cell = r * kGrid + c;
      int ch = 0;
      for (int i = 0; i < k_; ++i)
        if (cells_[static_cast<size_t>(i)] == cell)
          ch = collected_[static_cast<size_t>(i)] ? 3 : 2;
      px[ch] = 1.0f;
    }
  }
  return obs;
}

std::string MetaFetchEnv::ascii() const {
  std::string out;
  for (int r = 0; r < kGrid; ++r) {
    for (int c = 0; c < kGrid; ++c) {
      char ch = '.';
      int cell = r * kGrid + c;
      for (int i = 0; i < k_; ++i)
        if (cells_[static_cast<size_t>(i)] == cell) {
          int pos = 0;
          for (int j = 0; j < k_; ++j)
            if (order_[static_cast<size_t>(j)] == i) pos = j;
          ch = collected_[static_cast<size_t>(i)] ? 'x' : static_cast<char>('1' + pos);
        }
      if (r == row_ && c == col_) ch = "^>v<"[dir_];
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace ald
