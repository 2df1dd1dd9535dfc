#include "uprec/encoder.hpp"

#include <cmath>

namespace uprec {

namespace {

constexpr double kLnEps = 1e-12;

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  // Inverted dropout: kept entries carry 1/(1-rate) so eval needs no rescale.
  Mat m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform01(rng) < rate ? 0.0 : keep_scale;
  return m;
}

void layer_norm_backward(const Mat& d_out, const Mat& xhat, const Vec& inv_std, const Vec& gain,
                         Vec& d_gain, Vec& d_bias, Mat& d_x) {
  const Eigen::Index d = xhat.cols();
  d_x.resize(xhat.rows(), d);
  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
    d_gain += (d_out.row(r).transpose().array() * xhat.row(r).transpose().array()).matrix();
    d_bias += d_out.row(r).transpose();
    Eigen::RowVectorXd d_xhat = d_out.row(r).cwiseProduct(gain.transpose());
    const double m1 = d_xhat.mean();
    const double m2 = d_xhat.cwiseProduct(xhat.row(r)).mean();
    d_x.row(r) = inv_std(r) * (d_xhat.array() - m1 - xhat.row(r).array() * m2).matrix();
  }
  (void)d;
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 0 || num_heads < 1 || hidden_dim < 1 || vocab_size <= kNumSpecialTokens)
    throw DataError("invalid encoder config");
  if (hidden_dim % num_heads != 0) throw DataError("hidden_dim must be divisible by num_heads");
  if (max_len < 3) throw DataError("max_len must be at least 3");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw DataError("dropout_rate must be in [0,1)");
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const int d = cfg.hidden_dim;
  auto tn = [&](Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = truncated_normal(rng, 0.02);
    return m;
  };
  EncoderParams p;
  p.item_emb = tn(cfg.vocab_size, d);
  p.pos_emb = tn(cfg.max_len, d);
  p.layers.resize(cfg.num_layers);
  for (auto& l : p.layers) {
    l.w_q = tn(d, d);
    l.w_k = tn(d, d);
    l.w_v = tn(d, d);
    l.w_o = tn(d, d);
    l.w_ff1 = tn(d, cfg.ffn_dim());
    l.b_ff1 = Vec::Zero(cfg.ffn_dim());
    l.w_ff2 = tn(cfg.ffn_dim(), d);
    l.b_ff2 = Vec::Zero(d);
    l.ln1_gain = Vec::Ones(d);
    l.ln1_bias = Vec::Zero(d);
    l.ln2_gain = Vec::Ones(d);
    l.ln2_bias = Vec::Zero(d);
  }
  return p;
}

EncoderGrads EncoderGrads::zeros(const EncoderConfig& cfg) {
  const int d = cfg.hidden_dim;
  EncoderGrads g;
  g.item_emb = Mat::Zero(cfg.vocab_size, d);
  g.pos_emb = Mat::Zero(cfg.max_len, d);
  g.layers.resize(cfg.num_layers);
  for (auto& l : g.layers) {
    l.w_q = Mat::Zero(d, d);
    l.w_k = Mat::Zero(d, d);
    l.w_v = Mat::Zero(d, d);
    l.w_o = Mat::Zero(d, d);
    l.w_ff1 = Mat::Zero(d, cfg.ffn_dim());
    l.b_ff1 = Vec::Zero(cfg.ffn_dim());
    l.w_ff2 = Mat::Zero(cfg.ffn_dim(), d);
    l.b_ff2 = Vec::Zero(d);
    l.ln1_gain = Vec::Zero(d);
    l.ln1_bias = Vec::Zero(d);
    l.ln2_gain = Vec::Zero(d);
    l.ln2_bias = Vec::Zero(d);
  }
  return g;
}

TokenBatch TokenBatch::from_rows(const std::vector<std::vector<int32_t>>& rows_in) {
  TokenBatch b;
  b.rows = static_cast<int>(rows_in.size());
  size_t w = 1;
  for (const auto& r : rows_in) w = std::max(w, r.size());
  b.width = static_cast<int>(w);
  b.tokens.assign(static_cast<size_t>(b.rows) * b.width, kPadId);
  b.lengths.resize(b.rows);
  for (int r = 0; r < b.rows; ++r) {
    // Trailing PADs in an input row are padding, not content; PAD can never
    // occur inside a real sequence.
    size_t len = rows_in[r].size();
    while (len > 0 && rows_in[r][len - 1] == kPadId) --len;
    b.lengths[r] = static_cast<int32_t>(len);
    for (size_t t = 0; t < len; ++t) b.tokens[static_cast<size_t>(r) * b.width + t] = rows_in[r][t];
  }
  return b;
}

double gelu(double z, bool tanh_approx) {
  if (tanh_approx) {
    const double c = std::sqrt(2.0 / M_PI);
    return 0.5 * z * (1.0 + std::tanh(c * (z + 0.044715 * z * z * z)));
  }
  return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2));
}

double gelu_grad(double z, bool tanh_approx) {
  if (tanh_approx) {
    const double c = std::sqrt(2.0 / M_PI);
    const double u = c * (z + 0.044715 * z * z * z);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * z * z);
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
  }
  const double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return cdf + z * pdf;
}

Mat layer_norm(const Mat& x, const Vec& gain, const Vec& bias, Mat* xhat, Vec* inv_std) {
  Mat out(x.rows(), x.cols());
  if (xhat) xhat->resize(x.rows(), x.cols());
  if (inv_std) inv_std->resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + kLnEps);
    Eigen::RowVectorXd xh = ((x.row(r).array() - mu) * is).matrix();
    if (xhat) xhat->row(r) = xh;
    if (inv_std) (*inv_std)(r) = is;
    out.row(r) = xh.cwiseProduct(gain.transpose()) + bias.transpose();
  }
  return out;
}

Mat scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v,
                         const std::vector<uint8_t>& key_valid, double scale, Mat* probs_out) {
  const Eigen::Index n = q.rows();
  const Eigen::Index nk = k.rows();
  bool any_valid = false;
  for (Eigen::Index t = 0; t < nk; ++t) any_valid = any_valid || key_valid[t];
  if (!any_valid) throw DataError("attention: all keys masked");

  Mat logits = q * k.transpose() * scale;
  Mat probs(n, nk);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < nk; ++t)
      if (key_valid[t]) mx = std::max(mx, logits(r, t));
    double z = 0;
    for (Eigen::Index t = 0; t < nk; ++t) {
      double e = key_valid[t] ? std::exp(logits(r, t) - mx) : 0.0;
      probs(r, t) = e;
      z += e;
    }
    probs.row(r) /= z;
  }
  if (probs_out) *probs_out = probs;
  return probs * v;
}

Mat encode(const TokenBatch& batch, const EncoderParams& params, const EncoderConfig& cfg,
           bool train, Rng* rng, ForwardCache* cache) {
  cfg.validate();
  if (batch.width > cfg.max_len) throw DataError("batch width exceeds max_len");
  if (train && !rng) throw DataError("train mode needs an rng");
  const int B = batch.rows, T = batch.width, d = cfg.hidden_dim;
  const int h = cfg.num_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = train && cfg.dropout_rate > 0.0;

  Mat x(static_cast<Eigen::Index>(B) * T, d);
  for (int r = 0; r < B; ++r)
    for (int t = 0; t < T; ++t) {
      int32_t tok = batch.token(r, t);
      if (tok < 0 || tok >= cfg.vocab_size) throw DataError("token out of range");
      x.row(static_cast<Eigen::Index>(r) * T + t) =
          params.item_emb.row(tok) + params.pos_emb.row(t);
    }
  if (drop && cfg.embed_dropout) {
    Mat m = dropout_mask(x.rows(), x.cols(), cfg.dropout_rate, *rng);
    x = x.cwiseProduct(m);
    if (cache) cache->emb_drop = std::move(m);
  }
  if (cache) {
    cache->batch = batch;
    cache->h0 = x;
    cache->layers.assign(cfg.num_layers, LayerCache{});
  }

  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerParams& lp = params.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->input = x;

    Mat q = x * lp.w_q;
    Mat k = x * lp.w_k;
    Mat v = x * lp.w_v;
    Mat concat(x.rows(), d);
    if (lc) {
      lc->probs.assign(static_cast<size_t>(B) * h, Mat());
    }
    for (int r = 0; r < B; ++r) {
      std::vector<uint8_t> key_valid(T);
      for (int t = 0; t < T; ++t) key_valid[t] = batch.valid(r, t) ? 1 : 0;
      const Eigen::Index off = static_cast<Eigen::Index>(r) * T;
      for (int j = 0; j < h; ++j) {
        Mat probs;
        Mat head = scaled_dot_attention(q.block(off, j * dh, T, dh), k.block(off, j * dh, T, dh),
                                        v.block(off, j * dh, T, dh), key_valid, scale,
                                        lc ? &probs : nullptr);
        concat.block(off, j * dh, T, dh) = head;
        if (lc) lc->probs[static_cast<size_t>(r) * h + j] = std::move(probs);
      }
    }
    Mat attn_out = concat * lp.w_o;
    if (drop) {
      Mat m = dropout_mask(attn_out.rows(), attn_out.cols(), cfg.dropout_rate, *rng);
      attn_out = attn_out.cwiseProduct(m);
      if (lc) lc->drop1 = std::move(m);
    }
    Mat res1 = x + attn_out;
    Mat y = layer_norm(res1, lp.ln1_gain, lp.ln1_bias, lc ? &lc->ln1_xhat : nullptr,
                       lc ? &lc->ln1_inv_std : nullptr);

    Mat z = (y * lp.w_ff1).rowwise() + lp.b_ff1.transpose();
    Mat g = z.unaryExpr([&](double v_) { return gelu(v_, cfg.gelu_tanh); });
    Mat f = (g * lp.w_ff2).rowwise() + lp.b_ff2.transpose();
    if (drop) {
      Mat m = dropout_mask(f.rows(), f.cols(), cfg.dropout_rate, *rng);
      f = f.cwiseProduct(m);
      if (lc) lc->drop2 = std::move(m);
    }
    Mat res2 = y + f;
    Mat out = layer_norm(res2, lp.ln2_gain, lp.ln2_bias, lc ? &lc->ln2_xhat : nullptr,
                         lc ? &lc->ln2_inv_std : nullptr);

    if (lc) {
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(v);
      lc->concat = std::move(concat);
      lc->y = std::move(y);
      lc->ffn_z = std::move(z);
    }
    x = std::move(out);
  }
  return x;
}

void encoder_backward(const Mat& d_out, const ForwardCache& cache, const EncoderParams& params,
                      const EncoderConfig& cfg, EncoderGrads& grads) {
  const TokenBatch& batch = cache.batch;
  const int B = batch.rows, T = batch.width, d = cfg.hidden_dim;
  const int h = cfg.num_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = d_out;
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerParams& lp = params.layers[l];
    const LayerCache& lc = cache.layers[l];
    LayerGrads& lg = grads.layers[l];

    // Sublayer 2: out = LN2(y + drop(FFN(y)))
    Mat d_res2;
    layer_norm_backward(dx, lc.ln2_xhat, lc.ln2_inv_std, lp.ln2_gain, lg.ln2_gain, lg.ln2_bias,
                        d_res2);
    Mat d_f = lc.drop2.size() ? d_res2.cwiseProduct(lc.drop2).eval() : d_res2;
    Mat g = lc.ffn_z.unaryExpr([&](double v_) { return gelu(v_, cfg.gelu_tanh); });
    lg.w_ff2 += g.transpose() * d_f;
    lg.b_ff2 += d_f.colwise().sum().transpose();
    Mat d_g = d_f * lp.w_ff2.transpose();
    Mat d_z =
        d_g.cwiseProduct(lc.ffn_z.unaryExpr([&](double v_) { return gelu_grad(v_, cfg.gelu_tanh); }));
    lg.w_ff1 += lc.y.transpose() * d_z;
    lg.b_ff1 += d_z.colwise().sum().transpose();
    Mat d_y = d_res2 + d_z * lp.w_ff1.transpose();

    // Sublayer 1: y = LN1(x + drop(attn(x)))
    Mat d_res1;
    layer_norm_backward(d_y, lc.ln1_xhat, lc.ln1_inv_std, lp.ln1_gain, lg.ln1_gain, lg.ln1_bias,
                        d_res1);
    Mat d_attn_out = lc.drop1.size() ? d_res1.cwiseProduct(lc.drop1).eval() : d_res1;
    lg.w_o += lc.concat.transpose() * d_attn_out;
    Mat d_concat = d_attn_out * lp.w_o.transpose();

    Mat d_q = Mat::Zero(lc.q.rows(), d);
    Mat d_k = Mat::Zero(lc.k.rows(), d);
    Mat d_v = Mat::Zero(lc.v.rows(), d);
    for (int r = 0; r < B; ++r) {
      const Eigen::Index off = static_cast<Eigen::Index>(r) * T;
      for (int j = 0; j < h; ++j) {
        const Mat& p = lc.probs[static_cast<size_t>(r) * h + j];
        auto d_head = d_concat.block(off, j * dh, T, dh);
        auto vj = lc.v.block(off, j * dh, T, dh);
        Mat d_p = d_head * vj.transpose();
        d_v.block(off, j * dh, T, dh) += p.transpose() * d_head;
        Vec rowdot = (d_p.cwiseProduct(p)).rowwise().sum();
        Mat d_s = p.cwiseProduct(d_p.colwise() - rowdot);
        d_q.block(off, j * dh, T, dh) += scale * d_s * lc.k.block(off, j * dh, T, dh);
        d_k.block(off, j * dh, T, dh) += scale * d_s.transpose() * lc.q.block(off, j * dh, T, dh);
      }
    }
    lg.w_q += lc.input.transpose() * d_q;
    lg.w_k += lc.input.transpose() * d_k;
    lg.w_v += lc.input.transpose() * d_v;
    dx = d_res1 + d_q * lp.w_q.transpose() + d_k * lp.w_k.transpose() + d_v * lp.w_v.transpose();
  }

  if (cache.emb_drop.size()) dx = dx.cwiseProduct(cache.emb_drop);
  for (int r = 0; r < B; ++r)
    for (int t = 0; t < T; ++t) {
      const Eigen::Index row = static_cast<Eigen::Index>(r) * T + t;
      grads.item_emb.row(batch.token(r, t)) += dx.row(row);
      grads.pos_emb.row(t) += dx.row(row);
    }
}

}  // namespace uprec
