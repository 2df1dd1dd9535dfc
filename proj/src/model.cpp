#include "uprec/model.hpp"

namespace uprec {

ModelParams ModelParams::init(const EncoderConfig& cfg, const AttributeSchema& schema, Rng& rng) {
  cfg.validate();
  ModelParams m;
  m.enc_cfg = cfg;
  m.encoder = EncoderParams::init(cfg, rng);
  m.schema = schema;

  m.mip.tied = true;
  m.mip.bias = Vec::Zero(cfg.vocab_size);

  const int d = cfg.hidden_dim;
  for (size_t a = 0; a < schema.numeric_names.size(); ++a) {
    Vec w(d);
    for (int i = 0; i < d; ++i) w(i) = truncated_normal(rng, 0.02);
    m.uap.num_w.push_back(std::move(w));
    m.uap.num_b.push_back(0.0);
  }
  for (size_t a = 0; a < schema.discrete_names.size(); ++a) {
    int card = schema.discrete_cardinalities[a];
    Mat w(card, d);
    for (int i = 0; i < w.size(); ++i) w.data()[i] = truncated_normal(rng, 0.02);
    m.uap.disc_w.push_back(std::move(w));
    m.uap.disc_b.push_back(Vec::Zero(card));
  }

  // Unit weights make the initial similarity an ordinary negated squared
  // distance, which is a sane starting metric; zero init would kill the
  // gradient entirely (sim would be constant).
  m.srd.w = Vec::Ones(d);
  m.srd.b = 0.0;

  m.stand.mean = Vec::Zero(static_cast<int>(schema.numeric_names.size()));
  m.stand.stddev = Vec::Ones(static_cast<int>(schema.numeric_names.size()));
  return m;
}

ModelGrads ModelGrads::zeros(const ModelParams& params) {
  ModelGrads g;
  g.encoder = EncoderGrads::zeros(params.enc_cfg);
  g.mip.tied = params.mip.tied;
  if (!params.mip.tied) g.mip.w_untied = Mat::Zero(params.mip.w_untied.rows(), params.mip.w_untied.cols());
  g.mip.bias = Vec::Zero(params.mip.bias.size());
  for (const Vec& w : params.uap.num_w) {
    g.uap.num_w.push_back(Vec::Zero(w.size()));
    g.uap.num_b.push_back(0.0);
  }
  for (const Mat& w : params.uap.disc_w) {
    g.uap.disc_w.push_back(Mat::Zero(w.rows(), w.cols()));
    g.uap.disc_b.push_back(Vec::Zero(w.rows()));
  }
  g.srd.w = Vec::Zero(params.srd.w.size());
  g.srd.b = 0.0;
  return g;
}

void ModelGrads::clear() {
  for (TensorRef& t : tensor_refs(*this)) std::fill(t.data, t.data + t.size, 0.0);
}

namespace {

// ModelParams and ModelGrads expose structurally identical tensor members, so
// one traversal serves both; keeping it single-sourced guarantees the pairing
// by position that adam_step and the checkpoint format rely on.
template <class M>
std::vector<TensorRef> collect(M& m) {
  std::vector<TensorRef> out;
  auto add = [&](const std::string& name, double* data, size_t n) {
    out.push_back({name, data, n});
  };
  add("encoder.item_emb", m.encoder.item_emb.data(), m.encoder.item_emb.size());
  add("encoder.pos_emb", m.encoder.pos_emb.data(), m.encoder.pos_emb.size());
  for (size_t l = 0; l < m.encoder.layers.size(); ++l) {
    auto& L = m.encoder.layers[l];
    std::string p = "encoder.layer" + std::to_string(l) + ".";
    add(p + "w_q", L.w_q.data(), L.w_q.size());
    add(p + "w_k", L.w_k.data(), L.w_k.size());
    add(p + "w_v", L.w_v.data(), L.w_v.size());
    add(p + "w_o", L.w_o.data(), L.w_o.size());
    add(p + "w_ff1", L.w_ff1.data(), L.w_ff1.size());
    add(p + "b_ff1", L.b_ff1.data(), L.b_ff1.size());
    add(p + "w_ff2", L.w_ff2.data(), L.w_ff2.size());
    add(p + "b_ff2", L.b_ff2.data(), L.b_ff2.size());
    add(p + "ln1_gain", L.ln1_gain.data(), L.ln1_gain.size());
    add(p + "ln1_bias", L.ln1_bias.data(), L.ln1_bias.size());
    add(p + "ln2_gain", L.ln2_gain.data(), L.ln2_gain.size());
    add(p + "ln2_bias", L.ln2_bias.data(), L.ln2_bias.size());
  }
  add("mip.bias", m.mip.bias.data(), m.mip.bias.size());
  if (!m.mip.tied) add("mip.w", m.mip.w_untied.data(), m.mip.w_untied.size());
  for (size_t a = 0; a < m.uap.num_w.size(); ++a) {
    std::string p = "uap.num" + std::to_string(a) + ".";
    add(p + "w", m.uap.num_w[a].data(), m.uap.num_w[a].size());
    add(p + "b", &m.uap.num_b[a], 1);
  }
  for (size_t a = 0; a < m.uap.disc_w.size(); ++a) {
    std::string p = "uap.disc" + std::to_string(a) + ".";
    add(p + "w", m.uap.disc_w[a].data(), m.uap.disc_w[a].size());
    add(p + "b", m.uap.disc_b[a].data(), m.uap.disc_b[a].size());
  }
  add("srd.w", m.srd.w.data(), m.srd.w.size());
  add("srd.b", &m.srd.b, 1);
  return out;
}

}  // namespace

std::vector<TensorRef> tensor_refs(ModelParams& m) { return collect(m); }
std::vector<TensorRef> tensor_refs(ModelGrads& g) { return collect(g); }

size_t total_param_count(ModelParams& m) {
  size_t n = 0;
  for (const TensorRef& t : tensor_refs(m)) n += t.size;
  return n;
}

}  // namespace uprec
