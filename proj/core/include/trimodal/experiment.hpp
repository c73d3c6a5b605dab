// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "trimodal/archive.hpp"
#include "trimodal/trainer.hpp"

namespace trimodal {

// Strict parse of a training config file: unknown keys are rejected so a
// typo cannot silently fall back to a default.
TrainConfig load_train_config_file(const std::string& path);

// Results files: {"task": ..., "config_hash": ..., "seed": ..,
// "timestamp": ..., "metrics": {...}} plus task-specific extras.
void write_result_json(const std::string& path, const std::string& task, uint64_t config_hash,
                       uint64_t seed, const std::string& metrics_json,
                       const std::string& extras_json = "{}");

std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

}  // namespace trimodal
