// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lcs_oracle.hpp"
#include "masko/downstream.hpp"
#include "masko/error.hpp"
#include "masko/log.hpp"
#include "masko/metrics.hpp"
#include "masko/objectives.hpp"
#include "toy.hpp"

using namespace masko;
using namespace masko::downstream;
using metrics::Sequence;

namespace {

TaskData toy_data(const test::Toy& toy) { return {toy.vocab, toy.roles, toy.catalog, {"x", "y"}}; }

TaskData labeled(const Checkpoint& ckpt) {
  TaskData data = TaskData::from_checkpoint(ckpt);
  data.labels = {"x", "y"};
  return data;
}

Checkpoint pretrained(const test::Toy& toy, const std::string& objectives = "w,r,s,f", std::size_t epochs = 2) {
  RunConfig cfg = toy.cfg;
  cfg.objectives = objectives;
  Model m = objectives::make_pretraining_model(cfg, toy.vocab, toy.roles, &toy.catalog, 11);
  Adam adam(AdamHyper{1e-2});
  objectives::pretrain(m, adam, toy.dialogues, epochs, 11);
  return m.to_checkpoint(&adam);
}

bool same_prefix_tensors(const Model& m, const Checkpoint& c, const std::string& prefix) {
  std::size_t seen = 0;
  for (const auto& [name, p] : m.params) {
    if (name.rfind(prefix, 0) != 0) continue;
    const Tensor* t = c.find(name);
    if (t == nullptr || !(*t == p.value)) return false;
    ++seen;
  }
  return seen > 0;
}

struct WarningLog {
  std::vector<std::string> messages;
  WarningHandler previous;
  WarningLog() {
    previous = set_warning_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningLog() { set_warning_handler(previous); }
};

}  // namespace

TEST_CASE("micro and macro F1") {
  SUBCASE("perfect") {
    auto r = metrics::micro_macro_f1({"A", "B", "C"}, {"A", "B", "C"});
    CHECK(r.micro == 1.0);
    CHECK(r.macro == 1.0);
  }
  SUBCASE("hand confusion matrix") {
    auto r = metrics::micro_macro_f1({"A", "B", "B"}, {"A", "A", "B"});
    CHECK(r.micro == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.per_class["A"].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.per_class["B"].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.macro == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.per_class["A"].support == 2);
  }
  SUBCASE("one predicted class") {
    auto r = metrics::micro_macro_f1({"A", "A", "A", "A"}, {"A", "A", "B", "B"});
    CHECK(r.micro == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.macro == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.macro < r.micro);
  }
  SUBCASE("classes absent from both sides are excluded") {
    auto r = metrics::micro_macro_f1({"A", "B"}, {"A", "B"}, {"A", "B", "C"});
    CHECK(r.macro == 1.0);
    CHECK(r.per_class.count("C") == 1);
    CHECK(r.per_class["C"].support == 0);
  }
  SUBCASE("micro equals accuracy") {
    Rng rng(3);
    const std::vector<std::string> labels{"p", "q", "r", "s"};
    std::vector<std::string> pred, gold;
    std::size_t ok = 0;
    for (int i = 0; i < 500; ++i) {
      gold.push_back(labels[uniform_below(rng, 4)]);
      pred.push_back(labels[uniform_below(rng, 4)]);
      ok += pred.back() == gold.back();
    }
    CHECK(metrics::micro_macro_f1(pred, gold, labels).micro == doctest::Approx(ok / 500.0).epsilon(1e-12));
    std::reverse(pred.begin(), pred.end());
    std::reverse(gold.begin(), gold.end());
    auto a = metrics::micro_macro_f1(pred, gold, labels);
    CHECK(a.micro == doctest::Approx(ok / 500.0).epsilon(1e-12));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(metrics::micro_macro_f1({}, {}), Error);
    CHECK_THROWS_AS(metrics::micro_macro_f1({"A"}, {"A", "B"}), Error);
  }
}

TEST_CASE("ROUGE and BLEU") {
  const Sequence abc{"a", "b", "c"};
  CHECK(metrics::rouge_n(abc, abc, 1) == 1.0);
  CHECK(metrics::rouge_n(abc, {"a", "b", "d"}, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(metrics::rouge_n({"a"}, abc, 2) == 0.0);
  CHECK(metrics::rouge_n({"a", "a", "a"}, {"a"}, 1) == doctest::Approx(0.5).epsilon(1e-12));  // clipped
  CHECK_THROWS_AS(metrics::rouge_n(abc, abc, 0), Error);
  CHECK(metrics::rouge_l(abc, abc) == 1.0);
  CHECK(metrics::rouge_l({"a", "x", "b"}, {"a", "b"}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(metrics::rouge_l({"a", "b"}, {"c", "d"}) == 0.0);
  const Sequence five{"a", "b", "c", "d", "e"};
  CHECK(metrics::bleu4(five, five) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(metrics::bleu4({}, five) == 0.0);
  // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0/1 smoothed to 1/2; equal lengths.
  const double expected = std::pow(0.75 * (2.0 / 3.0) * 0.5 * 0.5, 0.25);
  CHECK(std::abs(metrics::bleu4({"a", "b", "c", "d"}, {"a", "b", "c", "e"}) - expected) < 1e-12);
  CHECK(std::abs(expected - 0.5946035575) < 1e-9);
  // Brevity penalty exp(1 - 4/2) on a perfect-precision short candidate,
  // whose 3- and 4-gram precisions are 0/0 and smoothed to 1.
  CHECK(std::abs(metrics::bleu4({"a", "b"}, {"a", "b", "c", "d"}) - std::exp(1.0 - 2.0)) < 1e-12);
}

TEST_CASE("dynamic-programming LCS equals brute force") {
  std::size_t pairs = 0, mismatches = 0;
  const auto seqs = test::all_sequences(6);
  test::brute_force_lcs(6, [&](std::size_t i, std::size_t j, std::size_t lcs) {
    ++pairs;
    mismatches += metrics::lcs_length(seqs[i], seqs[j]) != lcs;
  });
  CHECK(pairs == seqs.size() * seqs.size());
  CHECK(mismatches == 0);
}

TEST_CASE("classification initialization") {
  test::Toy toy;
  const Checkpoint ckpt = pretrained(toy);
  SUBCASE("vanilla") {
    Model a = init_classification(toy.cfg, toy_data(toy), 1);
    CHECK(a.kind == ModelKind::kClassify);
    CHECK(a.init == "vanilla");
    CHECK(a.params.get("classifier.fc.w").value.shape() == Shape{16, 8});
    CHECK(a.params.get("classifier.out.w").value.shape() == Shape{8, 2});
    CHECK_FALSE(a.params.contains("heads.word.v"));
    CHECK_FALSE(same_prefix_tensors(a, ckpt, "encoder."));
  }
  SUBCASE("pretrain: encoder copied, head seeded") {
    Model a = init_classification(toy.cfg, labeled(ckpt), 1, &ckpt);
    Model b = init_classification(toy.cfg, labeled(ckpt), 2, &ckpt);
    Model v = init_classification(toy.cfg, toy_data(toy), 1);
    CHECK(a.init == "pretrain");
    CHECK(same_prefix_tensors(a, ckpt, "encoder."));
    CHECK(same_prefix_tensors(a, ckpt, "embed."));
    CHECK(same_prefix_tensors(b, ckpt, "encoder."));
    CHECK_FALSE(a.params.get("classifier.out.w").value == b.params.get("classifier.out.w").value);
    CHECK(a.params.get("classifier.out.w").value == v.params.get("classifier.out.w").value);
  }
  SUBCASE("vocabulary size mismatch names the tensor") {
    TaskData data = toy_data(toy);
    auto tokens = data.vocab.tokens();
    tokens.push_back("extra");
    data.vocab = corpus::Vocabulary::from_tokens(tokens);
    try {
      init_classification(toy.cfg, data, 1, &ckpt);
      FAIL("expected a shape mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kShapeMismatch);
      CHECK(std::string(e.what()).find("embed.word") != std::string::npos);
    }
  }
  SUBCASE("architecture mismatch") {
    RunConfig cfg = toy.cfg;
    cfg.transformer_layers = 1;
    CHECK_THROWS_AS(init_classification(cfg, TaskData::from_checkpoint(ckpt), 1, &ckpt), Error);
  }
  SUBCASE("label count") {
    TaskData data = toy_data(toy);
    data.labels = {"x"};
    CHECK_THROWS_AS(init_classification(toy.cfg, data, 1), Error);
  }
}

TEST_CASE("generation initialization") {
  test::Toy toy;
  SUBCASE("pretrain copies the decoder") {
    const Checkpoint ckpt = pretrained(toy);
    Model g = init_generation(toy.cfg, TaskData::from_checkpoint(ckpt), 4, &ckpt);
    CHECK(g.kind == ModelKind::kGenerate);
    CHECK(same_prefix_tensors(g, ckpt, "decoder."));
    CHECK(same_prefix_tensors(g, ckpt, "encoder."));
    Model v = init_generation(toy.cfg, toy_data(toy), 4);
    CHECK_FALSE(same_prefix_tensors(v, ckpt, "decoder."));
  }
  SUBCASE("checkpoint without sentence generation") {
    const Checkpoint ckpt = pretrained(toy, "w,r,f");
    WarningLog log;
    Model g = init_generation(toy.cfg, TaskData::from_checkpoint(ckpt), 4, &ckpt);
    REQUIRE(log.messages.size() == 1);
    CHECK(log.messages[0].find("decoder") != std::string::npos);
    CHECK(same_prefix_tensors(g, ckpt, "encoder."));
    Model v = init_generation(toy.cfg, toy_data(toy), 4);
    CHECK(g.params.get("decoder.out.w").value == v.params.get("decoder.out.w").value);
  }
}

TEST_CASE("classification fine-tuning") {
  test::Toy toy;
  SUBCASE("single-class corpus") {
    auto dialogues = toy.dialogues;
    for (auto& d : dialogues)
      for (auto& u : d.utterances) u.label = "x";
    Model m = init_classification(toy.cfg, toy_data(toy), 3);
    Adam adam(AdamHyper{1e-2});
    FinetuneOptions opt;
    opt.epochs = 20;
    opt.seed = 3;
    auto r = finetune_classification(m, adam, dialogues, dialogues, opt);
    CHECK(*r.report.micro_f1 == 1.0);
    CHECK(*r.report.macro_f1 == 1.0);
    CHECK(r.loss_trace.size() == 20);
  }
  SUBCASE("toy labels are learned, deterministically") {
    auto run = [&] {
      Model m = init_classification(toy.cfg, toy_data(toy), 3);
      Adam adam(AdamHyper{1e-2});
      FinetuneOptions opt;
      opt.epochs = 100;
      opt.seed = 3;
      opt.eval_every_epoch = true;
      return finetune_classification(m, adam, toy.dialogues, toy.dialogues, opt);
    };
    auto a = run(), b = run();
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.report.to_json() == b.report.to_json());
    CHECK(a.loss_trace.back() < 0.6 * a.loss_trace.front());
    CHECK(a.epochs[4].heldout.has_value());
    auto j = a.report.to_json();
    CHECK(j.contains("micro_f1"));
    CHECK(j.contains("per_class"));
    CHECK_FALSE(j.contains("bleu_4"));
    CHECK(j["meta"]["init"] == "vanilla");
  }
  SUBCASE("unlabeled utterance names the dialogue") {
    auto dialogues = toy.dialogues;
    dialogues[1].utterances[2].label.reset();
    Model m = init_classification(toy.cfg, toy_data(toy), 3);
    Adam adam;
    FinetuneOptions opt;
    opt.epochs = 1;
    try {
      finetune_classification(m, adam, dialogues, {}, opt);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidArgument);
      CHECK(std::string(e.what()).find("toy-b") != std::string::npos);
    }
  }
  SUBCASE("wrong model kind") {
    Model g = init_generation(toy.cfg, toy_data(toy), 1);
    Adam adam;
    CHECK_THROWS_AS(finetune_classification(g, adam, toy.dialogues, {}, {}), Error);
  }
}

TEST_CASE("generation fine-tuning") {
  test::Toy toy;
  SUBCASE("constant summary is memorized") {
    auto dialogues = toy.dialogues;
    for (auto& d : dialogues) d.summary = std::vector<std::string>{"t1", "t6", "t2"};
    Model m = init_generation(toy.cfg, toy_data(toy), 2);
    Adam adam(AdamHyper{1e-2});
    FinetuneOptions opt;
    opt.epochs = 40;
    opt.seed = 2;
    auto r = finetune_generation(m, adam, dialogues, dialogues, opt);
    CHECK(*r.report.bleu_4 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*r.report.rouge_l == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(generate(m, dialogues[0], 32) == *dialogues[0].summary);
    CHECK(r.loss_trace[19] <= 0.6 * r.loss_trace[0]);
    auto j = r.report.to_json();
    for (const char* k : {"rouge_1", "rouge_2", "rouge_3", "rouge_l", "bleu_4", "meta"}) CHECK(j.contains(k));
    CHECK(j.size() == 6);
  }
  SUBCASE("decoding") {
    Model m = init_generation(toy.cfg, toy_data(toy), 2);
    auto a = generate(m, toy.dialogues[0], 4);
    CHECK(a == generate(m, toy.dialogues[0], 4));
    CHECK(a.size() <= 4);
  }
  SUBCASE("missing summary") {
    auto dialogues = toy.dialogues;
    dialogues[0].summary.reset();
    Model m = init_generation(toy.cfg, toy_data(toy), 2);
    Adam adam;
    try {
      finetune_generation(m, adam, dialogues, {}, {});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("toy-a") != std::string::npos);
    }
  }
  SUBCASE("evaluation is order invariant") {
    Model m = init_generation(toy.cfg, toy_data(toy), 2);
    auto fwd = evaluate(m, toy.dialogues);
    auto rev = toy.dialogues;
    std::reverse(rev.begin(), rev.end());
    auto bwd = evaluate(m, rev);
    CHECK(*fwd.bleu_4 == doctest::Approx(*bwd.bleu_4).epsilon(1e-12));
    CHECK(*fwd.rouge_l == doctest::Approx(*bwd.rouge_l).epsilon(1e-12));
    for (double v : {*fwd.rouge_1, *fwd.rouge_2, *fwd.rouge_3, *fwd.rouge_l, *fwd.bleu_4}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("saved models reload by kind") {
  test::Toy toy;
  const auto path = std::filesystem::temp_directory_path() / "masko_downstream_model.msko";
  Model m = init_classification(toy.cfg, toy_data(toy), 6);
  save_checkpoint(path, m.to_checkpoint());
  Model back = load_model(read_checkpoint(path));
  std::filesystem::remove(path);
  CHECK(back.kind == ModelKind::kClassify);
  CHECK(back.labels == m.labels);
  CHECK(back.init == "vanilla");
  for (const auto& [name, p] : m.params) CHECK(back.params.get(name).value == p.value);
  CHECK(classify(back, toy.dialogues[0]) == classify(m, toy.dialogues[0]));
  CHECK(evaluate(back, toy.dialogues).to_json() == evaluate(m, toy.dialogues).to_json());

  Model pre = objectives::make_pretraining_model(toy.cfg, toy.vocab, toy.roles, &toy.catalog, 1);
  Model pre_back = load_model(pre.to_checkpoint());
  CHECK(pre_back.kind == ModelKind::kPretrain);
  CHECK(pre_back.params.size() == pre.params.size());
  CHECK_THROWS_AS(evaluate(pre_back, toy.dialogues), Error);
}
