// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "masko/optim.hpp"
#include "masko/tensor.hpp"

namespace masko {

inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'K', 'O'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerSnapshot {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::map<std::string, AdamMoments> moments;
};

// In-memory image of a checkpoint file.
//
// Layout: magic "MSKO", u32 version, u64 header length + header JSON, u64
// record count, then records of (u32 name length, name, u32 rank, u64
// extents[rank], f64 values[]), all little-endian. Optimizer moments are
// stored as records named "@adam.m/<param>" and "@adam.v/<param>".
struct Checkpoint {
  nlohmann::json config;
  nlohmann::json meta;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<OptimizerSnapshot> optimizer;

  const Tensor* find(const std::string& name) const;
};

std::string config_hash(const nlohmann::json& config);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Builds a checkpoint image from live state.
Checkpoint snapshot(const ParameterStore& params, const Adam* optimizer, nlohmann::json config,
                    nlohmann::json meta, std::uint64_t seed);

// Reads and validates a whole file; nothing is returned unless every record
// parses. Errors: kIo, kParse (truncation, bad magic, hash), kVersionMismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);

enum class LoadMode {
  kStrict,    // names must match exactly
  kTransfer,  // copy the intersection, report the rest
};

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> skipped;      // in the checkpoint, absent from the model
  std::vector<std::string> uninitialized; // in the model, absent from the checkpoint
};

// Copies tensors into `target`. Shape disagreement is always kShapeMismatch;
// in strict mode extra names raise kUnknownParameter and missing names
// kMissingParameter.
LoadReport load_parameters(ParameterStore& target, const Checkpoint& ckpt, LoadMode mode);

void restore_optimizer(Adam& adam, const Checkpoint& ckpt);

}  // namespace masko
