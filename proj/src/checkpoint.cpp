#include "ktts/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "ktts/dataset.hpp"
#include "ktts/errors.hpp"
#include "ktts/hash.hpp"

namespace ktts::training {

namespace {

constexpr char kMagic[8] = {'K', 'T', 'T', 'S', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void matrix(const Matrix& m) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    pod<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    buf_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint is truncated");
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::uint32_t>();
    const auto c = pod<std::uint32_t>();
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(r) * c;
    need(bytes);
    Matrix m(r, c);
    if (bytes) std::memcpy(m.data(), buf_.data() + pos_, bytes);
    pos_ += bytes;
    return m;
  }
  bool done() const { return pos_ == end_; }
  void seek(std::size_t pos) { pos_ = pos; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint capture(const model::Model& model, const FullConfig& config, const Trainer* trainer) {
  Checkpoint c;
  c.config = config;
  c.symbols = model.symbols();
  for (const auto& p : model.params().all()) c.params[p->name] = p->value;
  if (trainer) {
    c.iteration = trainer->iteration();
    c.rng_state = trainer->rng().state();
    c.order_state = trainer->order_state();
    c.adam_steps = trainer->optimizer().steps();
    c.adam_moments = trainer->optimizer().state();
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 8);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::int64_t>(ckpt.iteration);
  w.str(ckpt.config.to_text());
  w.str(ckpt.symbols.to_text());
  w.str(ckpt.rng_state);
  w.str(ckpt.order_state);
  w.pod<std::uint64_t>(ckpt.params.size());
  for (const auto& [name, m] : ckpt.params) {
    w.str(name);
    w.matrix(m);
  }
  w.pod<std::int64_t>(ckpt.adam_steps);
  w.pod<std::uint64_t>(ckpt.adam_moments.size());
  for (const auto& [name, mo] : ckpt.adam_moments) {
    w.str(name);
    w.matrix(mo.m);
    w.matrix(mo.v);
  }
  const std::uint64_t sum = fnv1a(w.bytes());
  w.pod(sum);

  const std::string tmp = path + ".tmp";
  try {
    data::write_file(tmp, w.bytes());
  } catch (const DatasetError& e) {
    throw CheckpointError(e.what());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string buf;
  try {
    buf = data::read_file(path);
  } catch (const DatasetError&) {
    throw CheckpointError("cannot read checkpoint " + path);
  }
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0) throw CheckpointError(path + ": not a checkpoint file");
  if (buf.size() < 12 + 8) throw CheckpointError(path + ": checkpoint is truncated");
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + 8, 4);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, 8);
  if (fnv1a(std::string_view(buf.data(), body)) != stored) {
    throw CheckpointError(path + ": checksum mismatch (corrupt or truncated checkpoint)");
  }

  Reader r(buf, body);
  r.seek(12);
  Checkpoint c;
  c.iteration = r.pod<std::int64_t>();
  try {
    c.config = FullConfig::parse(r.str());
    c.symbols = text::SymbolTable::from_text(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
  c.rng_state = r.str();
  c.order_state = r.str();
  const auto n_params = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    c.params[name] = r.matrix();
  }
  c.adam_steps = r.pod<std::int64_t>();
  const auto n_moments = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_moments; ++i) {
    std::string name = r.str();
    Adam::Moments mo;
    mo.m = r.matrix();
    mo.v = r.matrix();
    c.adam_moments[name] = std::move(mo);
  }
  if (!r.done()) throw CheckpointError(path + ": trailing bytes after checkpoint body");
  return c;
}

void restore_model(const Checkpoint& ckpt, model::Model& model) {
  if (!(ckpt.symbols == model.symbols())) {
    throw CheckpointError("checkpoint symbol table (hash " + hex64(ckpt.symbols.hash()) +
                          ") does not match the model's symbol table (hash " + hex64(model.symbols().hash()) + ")");
  }
  const auto& all = model.params().all();
  if (all.size() != ckpt.params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.params.size()) + " tensors, model expects " +
                          std::to_string(all.size()));
  }
  for (const auto& p : all) {
    auto it = ckpt.params.find(p->name);
    if (it == ckpt.params.end()) throw CheckpointError("checkpoint lacks parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw CheckpointError("parameter " + p->name + " has the wrong shape in the checkpoint");
    }
  }
  for (const auto& p : all) p->value = ckpt.params.at(p->name);
}

void restore_trainer(const Checkpoint& ckpt, Trainer& trainer) {
  trainer.set_iteration(ckpt.iteration);
  if (!ckpt.rng_state.empty()) trainer.rng().set_state(ckpt.rng_state);
  if (!ckpt.order_state.empty()) trainer.set_order_state(ckpt.order_state);
  trainer.optimizer().restore(ckpt.adam_steps, ckpt.adam_moments);
}

model::Model model_from_checkpoint(const Checkpoint& ckpt) {
  model::Model m(ckpt.config.model, ckpt.symbols, 0);
  restore_model(ckpt, m);
  return m;
}

}  // namespace ktts::training
