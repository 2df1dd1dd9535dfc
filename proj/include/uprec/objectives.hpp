#pragma once

#include <vector>

#include "uprec/data.hpp"
#include "uprec/encoder.hpp"

namespace uprec {

// Wrap sequences with CLS/SEP, keeping the most recent max_len-2 items.
TokenBatch wrap_with_specials(const std::vector<std::vector<int32_t>>& seqs, int max_len);

struct MaskedBatch {
  TokenBatch tokens;  // wrapped rows with MASK substitutions
  std::vector<std::vector<int32_t>> masked_pos;  // positions within the wrapped row
  std::vector<std::vector<int32_t>> labels;      // original items, aligned with masked_pos
  std::vector<int32_t> users;                    // user index per row, -1 when unknown

  size_t total_masked() const;
};

// Bernoulli(p) per item, at least one mask forced per row.
MaskedBatch make_masked_batch(const std::vector<std::vector<int32_t>>& seqs,
                              const std::vector<int32_t>& users, double p, int max_len, Rng& rng);

// Single forced mask appended after the prefix: [CLS] prefix [MASK] [SEP].
// Keeps the most recent max_len-3 prefix items.
MaskedBatch finetune_target_mask(const std::vector<std::vector<int32_t>>& prefixes,
                                 const std::vector<int32_t>& targets,
                                 const std::vector<int32_t>& users, int max_len);

struct MipHead {
  bool tied = true;
  Mat w_untied;  // V x d, used only when tied is false
  Vec bias;      // V
};
using MipGrads = MipHead;

// Softmax over real items only; the 4 special tokens carry zero probability.
// probs_cache rows follow masked positions in row-major batch order.
double mip_loss(const Mat& hidden, const MaskedBatch& batch, const MipHead& head,
                const Mat& item_emb, Mat* probs_cache);

// Accumulates scale * dLoss into d_hidden, d_bias, and d_w (the untied matrix
// or, for the tied head, the item-embedding gradient).
void mip_backward(const Mat& hidden, const MaskedBatch& batch, const MipHead& head,
                  const Mat& item_emb, const Mat& probs, double scale, Mat& d_hidden, Vec& d_bias,
                  Mat& d_w);

// Coordinate-wise max over valid positions; argmax records the winning
// position per (row, coordinate) for the backward pass.
Mat max_pool_user_repr(const Mat& hidden, const TokenBatch& batch, Eigen::MatrixXi* argmax);
void max_pool_backward(const Mat& d_repr, const Eigen::MatrixXi& argmax, const TokenBatch& batch,
                       Mat& d_hidden);

// CLS (position 0) hidden state per row.
Mat cls_repr(const Mat& hidden, const TokenBatch& batch);
void cls_repr_backward(const Mat& d_repr, const TokenBatch& batch, Mat& d_hidden);

double huber(double pred, double target);
double huber_grad(double pred, double target);

// Z-scoring constants for numeric attributes, fit on training users.
struct Standardizer {
  Vec mean;
  Vec stddev;

  static Standardizer fit(const AttributeTable& attrs, const AttributeSchema& schema,
                          const std::vector<uint8_t>& is_eval_user);
  double z(double v, size_t attr) const { return (v - mean(attr)) / stddev(attr); }
  double un_z(double z_, size_t attr) const { return z_ * stddev(attr) + mean(attr); }
};

struct UapHead {
  std::vector<Vec> num_w;  // per numeric attribute, d
  std::vector<double> num_b;
  std::vector<Mat> disc_w;  // per discrete attribute, cardinality x d
  std::vector<Vec> disc_b;
};
using UapGrads = UapHead;

struct UapCache {
  std::vector<std::vector<int>> num_rows;  // batch rows with the value present
  std::vector<Vec> num_err;                // prediction minus z-scored target
  std::vector<std::vector<int>> disc_rows;
  std::vector<Mat> disc_probs;
  std::vector<std::vector<int32_t>> disc_labels;
};

// Sum over attributes of per-attribute mean losses (Huber / cross-entropy),
// each averaged over the batch rows whose value is present.
double uap_loss(const Mat& reprs, const std::vector<int32_t>& users, const AttributeTable& attrs,
                const AttributeSchema& schema, const Standardizer& stand, const UapHead& head,
                UapCache* cache);
void uap_backward(const Mat& reprs, const std::vector<int32_t>& users, const UapHead& head,
                  const UapCache& cache, double scale, Mat& d_reprs, UapGrads& grads);

struct SrdHead {
  Vec w;
  double b = 0.0;
};
struct SrdGrads {
  Vec w;
  double b = 0.0;
};

// Negated weighted squared L2: -(w . (q-c)^2 + b).
double srd_similarity(const Vec& q, const Vec& c, const SrdHead& head);

// neg_mask(j,i): candidate i may serve as a negative for query j. The
// diagonal is the positive and is ignored. Queries with no usable negatives
// are skipped and counted.
struct SrdCache {
  Mat sim;        // B x B
  Mat softmax;    // row-normalized over active entries, zero elsewhere
  std::vector<uint8_t> active_query;
  int n_active = 0;
};
double srd_loss(const Mat& query_reprs, const Mat& cand_reprs,
                const std::vector<std::vector<uint8_t>>& neg_mask, const SrdHead& head,
                uint64_t* skipped, SrdCache* cache);
void srd_backward(const Mat& query_reprs, const Mat& cand_reprs, const SrdHead& head,
                  const SrdCache& cache, double scale, Mat& d_query, Mat& d_cand, SrdGrads& grads);

// True when the two users share at least one attribute and every shared
// discrete attribute matches and every shared numeric attribute lies within
// range_fraction of that attribute's dataset range.
bool profiles_similar(int32_t u, int32_t v, const AttributeTable& attrs,
                      const AttributeSchema& schema, const std::vector<double>& numeric_range,
                      double range_fraction);

std::vector<double> numeric_ranges(const AttributeTable& attrs, const AttributeSchema& schema);

// Entry (j,i)=1 unless candidate i's user is the query j's user, a two-hop
// neighbor of it, or profile-similar to it. Diagonal entries are left 0.
std::vector<std::vector<uint8_t>> build_srd_negative_mask(
    const std::vector<int32_t>& query_users, const std::vector<int32_t>& cand_users,
    const SocialGraph& graph, const AttributeTable& attrs, const AttributeSchema& schema,
    const std::vector<double>& num_range, double range_fraction);

double joint_loss(double l_mip, double l_uap, double l_srd, double lambda1, double lambda2,
                  double lambda3);

}  // namespace uprec
