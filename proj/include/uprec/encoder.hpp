#pragma once

#include <vector>

#include "uprec/common.hpp"
#include "uprec/rng.hpp"

namespace uprec {

struct EncoderConfig {
  int num_layers = 2;
  int num_heads = 2;
  int hidden_dim = 64;
  int max_len = 30;  // positions including CLS/SEP
  double dropout_rate = 0.5;
  int vocab_size = 0;  // items + 4 specials
  bool gelu_tanh = false;
  bool embed_dropout = true;

  int head_dim() const { return hidden_dim / num_heads; }
  int ffn_dim() const { return 4 * hidden_dim; }
  void validate() const;
};

struct LayerParams {
  // Per-head projections are packed as column blocks: head j owns columns
  // [j*head_dim, (j+1)*head_dim) of w_q/w_k/w_v.
  Mat w_q, w_k, w_v, w_o;
  Mat w_ff1;
  Vec b_ff1;
  Mat w_ff2;
  Vec b_ff2;
  Vec ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct EncoderParams {
  Mat item_emb;  // V x d
  Mat pos_emb;   // max_len x d
  std::vector<LayerParams> layers;

  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);
};

using LayerGrads = LayerParams;

struct EncoderGrads {
  Mat item_emb;
  Mat pos_emb;
  std::vector<LayerGrads> layers;

  static EncoderGrads zeros(const EncoderConfig& cfg);
};

// Right-padded batch of wrapped token rows. Flattened position index is
// r*width + t.
struct TokenBatch {
  int rows = 0;
  int width = 0;
  std::vector<int32_t> tokens;
  std::vector<int32_t> lengths;  // real tokens per row, PADs excluded

  int32_t token(int r, int t) const { return tokens[static_cast<size_t>(r) * width + t]; }
  bool valid(int r, int t) const { return t < lengths[r]; }

  static TokenBatch from_rows(const std::vector<std::vector<int32_t>>& rows_in);
};

struct LayerCache {
  Mat input;          // X, (B*T) x d
  Mat q, k, v;        // packed heads
  std::vector<Mat> probs;  // [r*h + j] -> T x T attention weights
  Mat concat;         // pre-W^O head concat
  Mat drop1;          // dropout scale factors, empty in eval mode
  Mat ln1_xhat;
  Vec ln1_inv_std;
  Mat y;              // sublayer-1 output, FFN input
  Mat ffn_z;          // pre-activation, (B*T) x 4d
  Mat drop2;
  Mat ln2_xhat;
  Vec ln2_inv_std;
};

struct ForwardCache {
  TokenBatch batch;
  Mat emb_drop;  // empty unless train && embed_dropout
  Mat h0;
  std::vector<LayerCache> layers;
};

// Exact-erf GELU and its derivative; tanh variants behind EncoderConfig flag.
double gelu(double z, bool tanh_approx = false);
double gelu_grad(double z, bool tanh_approx = false);

// Row-wise layer norm with eps 1e-12; xhat/inv_std are backward caches.
Mat layer_norm(const Mat& x, const Vec& gain, const Vec& bias, Mat* xhat, Vec* inv_std);

// Softmax attention over one sequence; invalid keys get -inf logits.
// scale multiplies the raw logits (callers pass 1/sqrt(head_dim)).
Mat scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v,
                         const std::vector<uint8_t>& key_valid, double scale, Mat* probs_out);

// Forward pass over the whole batch; returns (rows*width) x d hidden states.
// rng is required in train mode; cache is required for a later backward call.
Mat encode(const TokenBatch& batch, const EncoderParams& params, const EncoderConfig& cfg,
           bool train, Rng* rng, ForwardCache* cache);

// Accumulates parameter gradients for the cached forward pass.
void encoder_backward(const Mat& d_out, const ForwardCache& cache, const EncoderParams& params,
                      const EncoderConfig& cfg, EncoderGrads& grads);

}  // namespace uprec
