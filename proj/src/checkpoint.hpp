// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace ald {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary container: magic, format version, JSON header (names, shapes,
// metadata), then raw little-endian float payload in header order.
// Round-trips bit-exactly.
void save_tensors(std::ostream& os, const NamedTensors& items,
                  const std::map<std::string, std::string>& meta = {});
NamedTensors load_tensors(std::istream& is, std::map<std::string, std::string>* meta = nullptr);

void save_checkpoint(const std::string& path, const NamedTensors& items,
                     const std::map<std::string, std::string>& meta = {});
NamedTensors load_checkpoint(const std::string& path,
                             std::map<std::string, std::string>* meta = nullptr);

std::string serialize_tensors(const NamedTensors& items,
                              const std::map<std::string, std::string>& meta = {});
NamedTensors deserialize_tensors(const std::string& bytes,
                                 std::map<std::string, std::string>* meta = nullptr);

}  // namespace ald
