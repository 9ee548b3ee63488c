// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "masko/checkpoint.hpp"
#include "masko/metrics.hpp"
#include "masko/model.hpp"
#include "masko/optim.hpp"

namespace masko::downstream {

enum class InitMode { kVanilla, kPretrain };
const char* to_string(InitMode mode);

// Id maps a fine-tuning model is built on. In pretrain mode they must be the
// checkpoint's own maps, otherwise embedding rows would not line up.
struct TaskData {
  corpus::Vocabulary vocab;
  corpus::RoleSet roles;
  std::optional<corpus::ReferenceCatalog> catalog;
  std::vector<std::string> labels;  // classification only

  static TaskData from_checkpoint(const Checkpoint& ckpt);
};

// Sorted label set of every labeled utterance.
std::vector<std::string> collect_labels(const std::vector<corpus::Dialogue>& dialogues);

// Classification head: classifier.fc.{w,b} then classifier.out.{w,b} over the
// per-utterance features. Head weights are always drawn from `seed`. With a
// pretrained checkpoint every encoder tensor is copied from it; a missing
// tensor raises kMissingParameter and a shape disagreement kShapeMismatch,
// both naming the tensor.
Model init_classification(const RunConfig& cfg, TaskData data, std::uint64_t seed,
                          const Checkpoint* pretrained = nullptr);

// Encoder plus the decoder.* tensors of sentence generation. With a
// checkpoint both parts are transferred; a checkpoint without decoder
// tensors leaves the decoder random and emits a warning.
Model init_generation(const RunConfig& cfg, TaskData data, std::uint64_t seed, const Checkpoint* pretrained = nullptr);

// Strict load of a saved model of any kind.
Model load_model(const Checkpoint& ckpt);

struct EvalReport {
  std::optional<double> micro_f1, macro_f1;
  std::optional<double> rouge_1, rouge_2, rouge_3, rouge_l, bleu_4;
  std::map<std::string, metrics::ClassScore> per_class;
  nlohmann::json meta = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;  // per dialogue
  std::optional<EvalReport> heldout;
};

struct FinetuneResult {
  std::vector<EpochRecord> epochs;
  std::vector<double> loss_trace;
  std::uint64_t steps = 0;
  EvalReport report;  // on `heldout` after the last epoch
};

struct FinetuneOptions {
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  bool eval_every_epoch = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Sum of per-utterance cross-entropies per dialogue, one Adam step per
// dialogue (or per grad_accumulation dialogues). Throws kInvalidArgument
// naming the first dialogue with an unlabeled utterance; kDivergence on a
// non-finite loss.
FinetuneResult finetune_classification(Model& model, Adam& adam, const std::vector<corpus::Dialogue>& train,
                                       const std::vector<corpus::Dialogue>& heldout, const FinetuneOptions& opt);

// Teacher-forced sum of token log-losses against [BOS] summary [EOS].
FinetuneResult finetune_generation(Model& model, Adam& adam, const std::vector<corpus::Dialogue>& train,
                                   const std::vector<corpus::Dialogue>& heldout, const FinetuneOptions& opt);

std::vector<std::string> classify(Model& model, const corpus::Dialogue& dialogue);
// Greedy tokens without [BOS] / [EOS]; at most `max_len` of them.
std::vector<std::string> generate(Model& model, const corpus::Dialogue& dialogue, std::size_t max_len);

EvalReport evaluate_classification(Model& model, const std::vector<corpus::Dialogue>& dialogues);
EvalReport evaluate_generation(Model& model, const std::vector<corpus::Dialogue>& dialogues);
// Dispatches on the model kind.
EvalReport evaluate(Model& model, const std::vector<corpus::Dialogue>& dialogues);

}  // namespace masko::downstream
