// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trimodal/tensor.hpp"

namespace trimodal {

// Checkpoint file: a JSON metadata document followed by named tensor blobs
// (same binary header as dataset blobs). Everything needed to resume lives
// here: parameters, batch-norm buffers, momentum, iteration, seed.
struct Checkpoint {
  std::string metadata_json;                // includes config echo + hash
  std::map<std::string, Tensor> tensors;    // stable, name-keyed
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace trimodal
