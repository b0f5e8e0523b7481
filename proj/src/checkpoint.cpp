/*
 * Copyright 2026 The ASIF Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "asif/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace asif {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'S', 'I', 'F', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  void bytes(void* p, std::size_t n) {
    if (n > buf_.size() - off_) throw ParseError("checkpoint truncated", off_);
    std::memcpy(p, buf_.data() + off_, n);
    off_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    const auto n = u64();
    if (n > buf_.size() - off_) throw ParseError("checkpoint string runs past end of file", off_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Matrix matrix() {
    const auto rows = u64();
    const auto cols = u64();
    if (cols != 0 && rows > (buf_.size() - off_) / 8 / cols) throw ParseError("checkpoint tensor runs past end of file", off_);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
  }
  std::size_t offset() const { return off_; }
  bool done() const { return off_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t off_ = 0;
};

}  // namespace

RngStream Checkpoint::rng(const std::string& name) const {
  for (const auto& r : rngs) {
    if (r.name == name) return RngStream::restore(r.seed, r.position);
  }
  throw DomainError("checkpoint has no RNG stream named " + name);
}

Checkpoint capture_checkpoint(AsifModel& model, const std::vector<DgrState>& dgr, std::string config_text,
                              std::vector<Checkpoint::RngRecord> extra_rngs) {
  Checkpoint c;
  c.config_text = std::move(config_text);
  c.model = model.config();
  for (const auto& p : model.parameters()) c.tensors.emplace_back(p.name, p.tensor->data);
  for (const auto& [name, s] : model.bn_states()) {
    c.bn.push_back({name, s->running_mean, s->running_var, s->eps, s->momentum});
  }
  c.dgr = dgr;
  c.rngs.push_back({"dropout", model.dropout_rng().seed(), model.dropout_rng().position()});
  c.rngs.push_back({"identifier_dropout", model.identifier_rng().seed(), model.identifier_rng().position()});
  for (auto& r : extra_rngs) c.rngs.push_back(std::move(r));
  return c;
}

AsifModel model_from_checkpoint(const Checkpoint& ckpt) {
  AsifModel model(ckpt.model, 0);
  std::vector<DgrState> dgr;
  restore_checkpoint(ckpt, model, dgr);
  return model;
}

void restore_checkpoint(const Checkpoint& ckpt, AsifModel& model, std::vector<DgrState>& dgr) {
  auto params = model.parameters();
  if (params.size() != ckpt.tensors.size()) throw DomainError("checkpoint does not match the model's parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ckpt.tensors[i];
    Tensor& t = *params[i].tensor;
    if (params[i].name != name || t.data.rows() != value.rows() || t.data.cols() != value.cols()) {
      throw DomainError("checkpoint tensor " + name + " does not match model tensor " + params[i].name);
    }
    t.data = value;
    t.grad.reset();
  }
  auto bn = model.bn_states();
  if (bn.size() != ckpt.bn.size()) throw DomainError("checkpoint does not match the model's batch-norm layers");
  for (std::size_t i = 0; i < bn.size(); ++i) {
    if (bn[i].first != ckpt.bn[i].name) throw DomainError("checkpoint batch-norm " + ckpt.bn[i].name + " out of order");
    bn[i].second->running_mean = ckpt.bn[i].running_mean;
    bn[i].second->running_var = ckpt.bn[i].running_var;
    bn[i].second->eps = ckpt.bn[i].eps;
    bn[i].second->momentum = ckpt.bn[i].momentum;
  }
  dgr = ckpt.dgr;
  model.set_rng_state(ckpt.rng("dropout"), ckpt.rng("identifier_dropout"));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  w.str(ckpt.config_text);
  const ModelConfig& m = ckpt.model;
  w.u64(static_cast<std::uint64_t>(m.input_dim));
  w.u32(static_cast<std::uint32_t>(m.num_classes));
  w.u32(static_cast<std::uint32_t>(m.extractor_widths.size()));
  for (Index v : m.extractor_widths) w.u64(static_cast<std::uint64_t>(v));
  w.f64(m.extractor_dropout);
  w.u64(static_cast<std::uint64_t>(m.identifier_hidden));
  w.u64(static_cast<std::uint64_t>(m.identifier_output));
  w.f64(m.identifier_dropout);
  w.f64(m.bn_eps);
  w.f64(m.bn_momentum);
  w.u8(m.with_identifier ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(m.identities_per_class.size()));
  for (int n : m.identities_per_class) w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, value] : ckpt.tensors) {
    w.str(name);
    w.matrix(value);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.bn.size()));
  for (const auto& b : ckpt.bn) {
    w.str(b.name);
    w.matrix(b.running_mean);
    w.matrix(b.running_var);
    w.f64(b.eps);
    w.f64(b.momentum);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.dgr.size()));
  for (const auto& d : ckpt.dgr) {
    w.f64(d.lambda);
    w.f64(d.ideal_loss);
    w.u8(d.mode == DgrMode::Dynamic ? 0 : 1);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.rngs.size()));
  for (const auto& r : ckpt.rngs) {
    w.str(r.name);
    w.u64(r.seed);
    w.u64(r.position);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("not a checkpoint file (bad magic)", 0);
  const auto version = r.u32();
  if (version != Checkpoint::kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);

  Checkpoint c;
  c.config_text = r.str();
  ModelConfig& m = c.model;
  m.input_dim = static_cast<Index>(r.u64());
  m.num_classes = static_cast<int>(r.u32());
  m.extractor_widths.clear();
  for (auto n = r.u32(); n > 0; --n) m.extractor_widths.push_back(static_cast<Index>(r.u64()));
  m.extractor_dropout = r.f64();
  m.identifier_hidden = static_cast<Index>(r.u64());
  m.identifier_output = static_cast<Index>(r.u64());
  m.identifier_dropout = r.f64();
  m.bn_eps = r.f64();
  m.bn_momentum = r.f64();
  m.with_identifier = r.u8() != 0;
  m.identities_per_class.clear();
  for (auto n = r.u32(); n > 0; --n) m.identities_per_class.push_back(static_cast<int>(r.u32()));
  try {
    m.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint model section invalid: ") + e.what(), r.offset());
  }
  for (auto n = r.u32(); n > 0; --n) {
    std::string name = r.str();
    c.tensors.emplace_back(std::move(name), r.matrix());
  }
  for (auto n = r.u32(); n > 0; --n) {
    Checkpoint::BnRecord b;
    b.name = r.str();
    b.running_mean = r.matrix();
    b.running_var = r.matrix();
    b.eps = r.f64();
    b.momentum = r.f64();
    c.bn.push_back(std::move(b));
  }
  for (auto n = r.u32(); n > 0; --n) {
    DgrState d;
    d.lambda = r.f64();
    d.ideal_loss = r.f64();
    const auto mode = r.u8();
    if (mode > 1) throw ParseError("bad DGR mode tag", r.offset() - 1);
    d.mode = mode == 0 ? DgrMode::Dynamic : DgrMode::Fixed;
    c.dgr.push_back(d);
  }
  for (auto n = r.u32(); n > 0; --n) {
    Checkpoint::RngRecord rec;
    rec.name = r.str();
    rec.seed = r.u64();
    rec.position = r.u64();
    c.rngs.push_back(std::move(rec));
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.offset());
  return c;
}

}  // namespace asif
