// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "tensor.hpp"

namespace ald {

struct EnvConfig {
  std::string name = "imaze";  // imaze | metafetch
  int size = 9;                // imaze grid size (9 or 15)
  int objects = 4;             // metafetch object count K
  uint64_t seed = 0;
};

struct StepResult {
  Tensor obs;
  float reward = 0;
  bool done = false;
};

// Single-threaded, owned by one actor. Observations are flat tensors whose
// layout is documented per environment.
class Env {
 public:
  virtual ~Env() = default;
  virtual int64_t obs_dim() const = 0;
  virtual int64_t num_actions() const = 0;
  virtual int64_t horizon() const = 0;
  // Starts a new episode; the seed fully determines hidden state.
  virtual Tensor reset(uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual bool done() const = 0;
  // Valid once done: whether the episode counts as a success.
  virtual bool success() const = 0;
  virtual std::string ascii() const = 0;
  virtual const char* name() const = 0;
  virtual int wire_id() const = 0;
};

std::unique_ptr<Env> make_env(const EnvConfig& cfg);

}  // namespace ald
