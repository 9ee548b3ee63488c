// Copyright 2026 The Masko Authors
// SPDX-License-Identifier: Apache-2.0

#include "masko/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "masko/error.hpp"
#include "masko/rng.hpp"

namespace masko {
namespace {

constexpr const char* kMomentM = "@adam.m/";
constexpr const char* kMomentV = "@adam.v/";

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { buf_.append(s); }
  const std::string& buffer() const { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t remaining() const { return data_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > remaining()) {
      fail(ErrorCode::kParse, "checkpoint truncated at byte " + std::to_string(pos_) + " (needed " +
                                  std::to_string(n) + " more bytes)");
    }
  }
  std::uint64_t le(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return v;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.u64(e);
  for (double v : t.values()) w.f64(v);
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string config_hash(const nlohmann::json& config) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config.dump());
  return os.str();
}

Checkpoint snapshot(const ParameterStore& params, const Adam* optimizer, nlohmann::json config,
                    nlohmann::json meta, std::uint64_t seed) {
  Checkpoint c;
  c.config = std::move(config);
  c.meta = std::move(meta);
  c.seed = seed;
  for (const auto& [name, p] : params) c.tensors.emplace_back(name, p.value);
  if (optimizer) {
    OptimizerSnapshot o;
    o.hyper = optimizer->hyper();
    o.t = optimizer->t();
    o.moments = optimizer->moments();
    c.optimizer = std::move(o);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = ckpt.config;
  header["config_hash"] = config_hash(ckpt.config);
  header["meta"] = ckpt.meta;
  header["seed"] = ckpt.seed;
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    header["optimizer"] = {{"lr", o.hyper.lr}, {"beta1", o.hyper.beta1}, {"beta2", o.hyper.beta2},
                           {"eps", o.hyper.eps}, {"t", o.t}};
  } else {
    header["optimizer"] = nullptr;
  }
  const std::string header_text = header.dump();

  Writer w;
  w.bytes(std::string(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u64(header_text.size());
  w.bytes(header_text);
  std::uint64_t count = ckpt.tensors.size();
  if (ckpt.optimizer) count += 2 * ckpt.optimizer->moments.size();
  w.u64(count);
  for (const auto& [name, t] : ckpt.tensors) write_record(w, name, t);
  if (ckpt.optimizer) {
    for (const auto& [name, mo] : ckpt.optimizer->moments) {
      write_record(w, kMomentM + name, mo.m);
      write_record(w, kMomentV + name, mo.v);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));

  if (r.remaining() < 4 || r.bytes(4) != std::string(kCheckpointMagic, 4)) {
    fail(ErrorCode::kParse, path.string() + " is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                          ", this build reads version " +
                                          std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_len = r.u64();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint c;
  try {
    c.config = header.at("config");
    c.meta = header.at("meta");
    c.seed = header.at("seed").get<std::uint64_t>();
    if (header.at("config_hash").get<std::string>() != config_hash(c.config)) {
      fail(ErrorCode::kParse, "checkpoint config hash does not match its config");
    }
    const auto& opt = header.at("optimizer");
    if (!opt.is_null()) {
      OptimizerSnapshot o;
      o.hyper = {opt.at("lr").get<double>(), opt.at("beta1").get<double>(),
                 opt.at("beta2").get<double>(), opt.at("eps").get<double>()};
      o.t = opt.at("t").get<std::uint64_t>();
      c.optimizer = std::move(o);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("checkpoint header malformed: ") + e.what());
  }

  const std::uint64_t count = r.u64();
  std::set<std::string> seen;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    if (!seen.insert(name).second) fail(ErrorCode::kParse, "duplicate checkpoint record " + name);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) fail(ErrorCode::kParse, "record " + name + " has invalid rank");
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& e : shape) {
      e = r.u64();
      if (e == 0 || e > r.remaining()) fail(ErrorCode::kParse, "record " + name + " has invalid extent");
      n *= e;
      if (n > r.remaining() / 8 + 1) fail(ErrorCode::kParse, "checkpoint truncated inside " + name);
    }
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    Tensor t(std::move(shape), std::move(values));
    if (name.rfind(kMomentM, 0) == 0 || name.rfind(kMomentV, 0) == 0) {
      if (!c.optimizer) fail(ErrorCode::kParse, "moment record " + name + " without optimizer header");
      const bool is_m = name.rfind(kMomentM, 0) == 0;
      const std::string param = name.substr(std::strlen(kMomentM));
      auto& mo = c.optimizer->moments[param];
      (is_m ? mo.m : mo.v) = std::move(t);
    } else {
      c.tensors.emplace_back(std::move(name), std::move(t));
    }
  }
  if (r.remaining() != 0) fail(ErrorCode::kParse, "trailing bytes after last checkpoint record");
  if (c.optimizer) {
    for (const auto& [name, mo] : c.optimizer->moments) {
      if (mo.m.size() == 0 || mo.v.size() == 0 || !c.find(name)) {
        fail(ErrorCode::kParse, "incomplete optimizer state for " + name);
      }
    }
  }
  return c;
}

LoadReport load_parameters(ParameterStore& target, const Checkpoint& ckpt, LoadMode mode) {
  LoadReport report;
  // Validate everything first so a failure leaves `target` untouched.
  for (const auto& [name, t] : ckpt.tensors) {
    if (!target.contains(name)) {
      if (mode == LoadMode::kStrict) {
        fail(ErrorCode::kUnknownParameter, "checkpoint tensor " + name + " has no counterpart in the model");
      }
      report.skipped.push_back(name);
      continue;
    }
    const Parameter& p = target.get(name);
    if (p.value.shape() != t.shape()) {
      fail(ErrorCode::kShapeMismatch, "tensor " + name + ": checkpoint shape " +
                                          shape_to_string(t.shape()) + " vs model shape " +
                                          shape_to_string(p.value.shape()));
    }
  }
  for (const auto& [name, p] : target) {
    if (!ckpt.find(name)) {
      if (mode == LoadMode::kStrict) {
        fail(ErrorCode::kMissingParameter, "checkpoint lacks model tensor " + name);
      }
      report.uninitialized.push_back(name);
    }
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (!target.contains(name)) continue;
    target.get(name).value = t;
    report.loaded.push_back(name);
  }
  return report;
}

void restore_optimizer(Adam& adam, const Checkpoint& ckpt) {
  if (!ckpt.optimizer) fail(ErrorCode::kMissingParameter, "checkpoint carries no optimizer state");
  adam.hyper() = ckpt.optimizer->hyper;
  adam.set_t(ckpt.optimizer->t);
  adam.moments() = ckpt.optimizer->moments;
}

}  // namespace masko
