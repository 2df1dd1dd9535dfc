#include "uprec/checkpoint.hpp"

#include <cstring>

#include "uprec/serialize.hpp"

namespace uprec {

namespace {

constexpr char kMagic[8] = {'U', 'P', 'R', 'E', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

void write_schema(BinaryWriter& w, const AttributeSchema& s) {
  w.u64(s.numeric_names.size());
  for (const auto& n : s.numeric_names) w.str(n);
  w.u64(s.discrete_names.size());
  for (size_t a = 0; a < s.discrete_names.size(); ++a) {
    w.str(s.discrete_names[a]);
    w.u32(static_cast<uint32_t>(s.discrete_cardinalities[a]));
    for (const auto& lab : s.discrete_labels[a]) w.str(lab);
  }
}

AttributeSchema read_schema(BinaryReader& r) {
  AttributeSchema s;
  uint64_t nn = r.u64();
  for (uint64_t a = 0; a < nn; ++a) s.numeric_names.push_back(r.str());
  uint64_t nd = r.u64();
  for (uint64_t a = 0; a < nd; ++a) {
    s.discrete_names.push_back(r.str());
    int card = static_cast<int>(r.u32());
    s.discrete_cardinalities.push_back(card);
    std::vector<std::string> labels;
    for (int i = 0; i < card; ++i) labels.push_back(r.str());
    s.discrete_labels.push_back(std::move(labels));
  }
  return s;
}

void write_span(BinaryWriter& w, const double* data, size_t n) {
  w.u64(n);
  w.bytes(data, n * sizeof(double));
}

void read_span(BinaryReader& r, double* data, size_t n, const std::string& name) {
  uint64_t stored = r.u64();
  if (stored != n) throw DataError("checkpoint: size mismatch for " + name);
  r.bytes(data, n * sizeof(double));
}

}  // namespace

void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  BinaryWriter w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);

  const EncoderConfig& c = ckpt.params.enc_cfg;
  w.u32(static_cast<uint32_t>(c.num_layers));
  w.u32(static_cast<uint32_t>(c.num_heads));
  w.u32(static_cast<uint32_t>(c.hidden_dim));
  w.u32(static_cast<uint32_t>(c.max_len));
  w.f64(c.dropout_rate);
  w.u32(static_cast<uint32_t>(c.vocab_size));
  w.u8(c.gelu_tanh ? 1 : 0);
  w.u8(c.embed_dropout ? 1 : 0);

  write_schema(w, ckpt.params.schema);
  w.vec(ckpt.params.stand.mean);
  w.vec(ckpt.params.stand.stddev);
  w.u8(ckpt.params.mip.tied ? 1 : 0);

  std::vector<TensorRef> refs = tensor_refs(ckpt.params);
  w.u64(refs.size());
  for (const TensorRef& t : refs) {
    w.str(t.name);
    write_span(w, t.data, t.size);
  }

  w.u8(ckpt.opt ? 1 : 0);
  if (ckpt.opt) {
    const AdamState& st = *ckpt.opt;
    if (st.m.size() != refs.size()) throw DataError("checkpoint: optimizer state tensor count mismatch");
    w.f64(st.beta1);
    w.f64(st.beta2);
    w.f64(st.eps);
    w.u64(st.step);
    for (size_t t = 0; t < refs.size(); ++t) {
      write_span(w, st.m[t].data(), st.m[t].size());
      write_span(w, st.v[t].data(), st.v[t].size());
    }
  }

  w.i64(ckpt.epoch);
  w.str(ckpt.rng_state);
  w.str(ckpt.metadata_json);
  if (!w.good()) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  BinaryReader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  if (r.u32() != kVersion) throw DataError("checkpoint: unsupported version in " + path);

  EncoderConfig c;
  c.num_layers = static_cast<int>(r.u32());
  c.num_heads = static_cast<int>(r.u32());
  c.hidden_dim = static_cast<int>(r.u32());
  c.max_len = static_cast<int>(r.u32());
  c.dropout_rate = r.f64();
  c.vocab_size = static_cast<int>(r.u32());
  c.gelu_tanh = r.u8() != 0;
  c.embed_dropout = r.u8() != 0;

  AttributeSchema schema = read_schema(r);
  Vec mean = r.vec();
  Vec stddev = r.vec();
  bool tied = r.u8() != 0;

  Checkpoint ckpt;
  Rng dummy(0);
  ckpt.params = ModelParams::init(c, schema, dummy);
  ckpt.params.stand.mean = mean;
  ckpt.params.stand.stddev = stddev;
  ckpt.params.mip.tied = tied;
  if (!tied) ckpt.params.mip.w_untied = Mat::Zero(c.vocab_size, c.hidden_dim);

  std::vector<TensorRef> refs = tensor_refs(ckpt.params);
  uint64_t n_tensors = r.u64();
  if (n_tensors != refs.size()) throw DataError("checkpoint: tensor count mismatch in " + path);
  for (TensorRef& t : refs) {
    std::string name = r.str();
    if (name != t.name) throw DataError("checkpoint: expected tensor " + t.name + ", found " + name);
    read_span(r, t.data, t.size, name);
  }

  if (r.u8() != 0) {
    AdamState st;
    st.beta1 = r.f64();
    st.beta2 = r.f64();
    st.eps = r.f64();
    st.step = r.u64();
    for (const TensorRef& t : refs) {
      std::vector<double> m(t.size), v(t.size);
      read_span(r, m.data(), t.size, t.name + ".m");
      read_span(r, v.data(), t.size, t.name + ".v");
      st.m.push_back(std::move(m));
      st.v.push_back(std::move(v));
    }
    ckpt.opt = std::move(st);
  }

  ckpt.epoch = r.i64();
  ckpt.rng_state = r.str();
  ckpt.metadata_json = r.str();
  return ckpt;
}

std::string checkpoint_id(const std::string& path) { return hex64(fnv1a64_file(path)); }

}  // namespace uprec
