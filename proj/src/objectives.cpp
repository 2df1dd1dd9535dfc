#include "uprec/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace uprec {

namespace {

std::vector<int32_t> truncate_recent(const std::vector<int32_t>& seq, int budget) {
  if (static_cast<int>(seq.size()) <= budget) return seq;
  return {seq.end() - budget, seq.end()};
}

}  // namespace

TokenBatch wrap_with_specials(const std::vector<std::vector<int32_t>>& seqs, int max_len) {
  std::vector<std::vector<int32_t>> rows(seqs.size());
  for (size_t r = 0; r < seqs.size(); ++r) {
    if (seqs[r].empty()) throw DataError("cannot wrap an empty sequence");
    std::vector<int32_t> items = truncate_recent(seqs[r], max_len - 2);
    rows[r].reserve(items.size() + 2);
    rows[r].push_back(kClsId);
    rows[r].insert(rows[r].end(), items.begin(), items.end());
    rows[r].push_back(kSepId);
  }
  return TokenBatch::from_rows(rows);
}

size_t MaskedBatch::total_masked() const {
  size_t n = 0;
  for (const auto& m : masked_pos) n += m.size();
  return n;
}

MaskedBatch make_masked_batch(const std::vector<std::vector<int32_t>>& seqs,
                              const std::vector<int32_t>& users, double p, int max_len, Rng& rng) {
  if (p <= 0.0 || p >= 1.0) throw DataError("mask proportion must be in (0,1)");
  MaskedBatch b;
  b.users = users.empty() ? std::vector<int32_t>(seqs.size(), -1) : users;
  if (b.users.size() != seqs.size()) throw DataError("users/sequences size mismatch");
  std::vector<std::vector<int32_t>> rows(seqs.size());
  b.masked_pos.resize(seqs.size());
  b.labels.resize(seqs.size());
  for (size_t r = 0; r < seqs.size(); ++r) {
    if (seqs[r].empty()) throw DataError("cannot mask an empty sequence");
    std::vector<int32_t> items = truncate_recent(seqs[r], max_len - 2);
    std::vector<size_t> chosen;
    for (size_t i = 0; i < items.size(); ++i)
      if (uniform01(rng) < p) chosen.push_back(i);
    if (chosen.empty()) chosen.push_back(uniform_index(rng, items.size()));
    rows[r].reserve(items.size() + 2);
    rows[r].push_back(kClsId);
    rows[r].insert(rows[r].end(), items.begin(), items.end());
    rows[r].push_back(kSepId);
    for (size_t i : chosen) {
      b.masked_pos[r].push_back(static_cast<int32_t>(i + 1));  // +1 for CLS
      b.labels[r].push_back(items[i]);
      rows[r][i + 1] = kMaskId;
    }
  }
  b.tokens = TokenBatch::from_rows(rows);
  return b;
}

MaskedBatch finetune_target_mask(const std::vector<std::vector<int32_t>>& prefixes,
                                 const std::vector<int32_t>& targets,
                                 const std::vector<int32_t>& users, int max_len) {
  if (prefixes.size() != targets.size()) throw DataError("prefixes/targets size mismatch");
  MaskedBatch b;
  b.users = users.empty() ? std::vector<int32_t>(prefixes.size(), -1) : users;
  std::vector<std::vector<int32_t>> rows(prefixes.size());
  b.masked_pos.resize(prefixes.size());
  b.labels.resize(prefixes.size());
  for (size_t r = 0; r < prefixes.size(); ++r) {
    if (prefixes[r].empty()) throw DataError("cannot build a target mask from an empty prefix");
    std::vector<int32_t> items = truncate_recent(prefixes[r], max_len - 3);
    rows[r].reserve(items.size() + 3);
    rows[r].push_back(kClsId);
    rows[r].insert(rows[r].end(), items.begin(), items.end());
    rows[r].push_back(kMaskId);
    rows[r].push_back(kSepId);
    b.masked_pos[r].push_back(static_cast<int32_t>(items.size() + 1));
    b.labels[r].push_back(targets[r]);
  }
  b.tokens = TokenBatch::from_rows(rows);
  return b;
}

double mip_loss(const Mat& hidden, const MaskedBatch& batch, const MipHead& head,
                const Mat& item_emb, Mat* probs_cache) {
  const size_t nm = batch.total_masked();
  if (nm == 0) throw DataError("mip_loss: batch has no masked positions");
  const Mat& w = head.tied ? item_emb : head.w_untied;
  const Eigen::Index v = w.rows();

  Mat probs(nm, v);
  double loss = 0;
  size_t out_row = 0;
  for (int r = 0; r < batch.tokens.rows; ++r) {
    for (size_t j = 0; j < batch.masked_pos[r].size(); ++j) {
      const Eigen::Index hrow =
          static_cast<Eigen::Index>(r) * batch.tokens.width + batch.masked_pos[r][j];
      Vec logits = w * hidden.row(hrow).transpose() + head.bias;
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = kNumSpecialTokens; i < v; ++i) mx = std::max(mx, logits(i));
      double zsum = 0;
      for (Eigen::Index i = 0; i < v; ++i) {
        double e = i < kNumSpecialTokens ? 0.0 : std::exp(logits(i) - mx);
        probs(out_row, i) = e;
        zsum += e;
      }
      probs.row(out_row) /= zsum;
      loss += -std::log(std::max(probs(out_row, batch.labels[r][j]), 1e-300));
      ++out_row;
    }
  }
  if (probs_cache) *probs_cache = std::move(probs);
  return loss / static_cast<double>(nm);
}

void mip_backward(const Mat& hidden, const MaskedBatch& batch, const MipHead& head,
                  const Mat& item_emb, const Mat& probs, double scale, Mat& d_hidden, Vec& d_bias,
                  Mat& d_w) {
  const size_t nm = batch.total_masked();
  const Mat& w = head.tied ? item_emb : head.w_untied;
  const double inv = scale / static_cast<double>(nm);
  size_t out_row = 0;
  for (int r = 0; r < batch.tokens.rows; ++r) {
    for (size_t j = 0; j < batch.masked_pos[r].size(); ++j) {
      const Eigen::Index hrow =
          static_cast<Eigen::Index>(r) * batch.tokens.width + batch.masked_pos[r][j];
      Vec d_logits = probs.row(out_row).transpose() * inv;
      d_logits(batch.labels[r][j]) -= inv;
      for (int i = 0; i < kNumSpecialTokens; ++i) d_logits(i) = 0.0;
      d_bias += d_logits;
      d_hidden.row(hrow) += d_logits.transpose() * w;
      d_w += d_logits * hidden.row(hrow);
      ++out_row;
    }
  }
}

Mat max_pool_user_repr(const Mat& hidden, const TokenBatch& batch, Eigen::MatrixXi* argmax) {
  const Eigen::Index d = hidden.cols();
  Mat repr(batch.rows, d);
  if (argmax) argmax->resize(batch.rows, d);
  for (int r = 0; r < batch.rows; ++r) {
    if (batch.lengths[r] < 1) throw DataError("max pool over empty row");
    for (Eigen::Index c = 0; c < d; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      int best_t = 0;
      for (int t = 0; t < batch.lengths[r]; ++t) {
        double v = hidden(static_cast<Eigen::Index>(r) * batch.width + t, c);
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
      repr(r, c) = best;
      if (argmax) (*argmax)(r, c) = best_t;
    }
  }
  return repr;
}

void max_pool_backward(const Mat& d_repr, const Eigen::MatrixXi& argmax, const TokenBatch& batch,
                       Mat& d_hidden) {
  for (int r = 0; r < batch.rows; ++r)
    for (Eigen::Index c = 0; c < d_repr.cols(); ++c)
      d_hidden(static_cast<Eigen::Index>(r) * batch.width + argmax(r, c), c) += d_repr(r, c);
}

Mat cls_repr(const Mat& hidden, const TokenBatch& batch) {
  Mat repr(batch.rows, hidden.cols());
  for (int r = 0; r < batch.rows; ++r)
    repr.row(r) = hidden.row(static_cast<Eigen::Index>(r) * batch.width);
  return repr;
}

void cls_repr_backward(const Mat& d_repr, const TokenBatch& batch, Mat& d_hidden) {
  for (int r = 0; r < batch.rows; ++r)
    d_hidden.row(static_cast<Eigen::Index>(r) * batch.width) += d_repr.row(r);
}

double huber(double pred, double target) {
  const double e = std::abs(pred - target);
  return e < 1.0 ? 0.5 * e * e : e - 0.5;
}

double huber_grad(double pred, double target) {
  const double e = pred - target;
  if (std::abs(e) < 1.0) return e;
  return e > 0 ? 1.0 : -1.0;
}

Standardizer Standardizer::fit(const AttributeTable& attrs, const AttributeSchema& schema,
                               const std::vector<uint8_t>& is_eval_user) {
  const size_t na = schema.numeric_names.size();
  Standardizer s;
  s.mean = Vec::Zero(na);
  s.stddev = Vec::Ones(na);
  for (size_t a = 0; a < na; ++a) {
    double sum = 0, sumsq = 0;
    int64_t n = 0;
    for (size_t u = 0; u < attrs.numeric_present.size(); ++u) {
      if (u < is_eval_user.size() && is_eval_user[u]) continue;
      if (!attrs.numeric_present[u][a]) continue;
      sum += attrs.numeric_values[u][a];
      sumsq += attrs.numeric_values[u][a] * attrs.numeric_values[u][a];
      ++n;
    }
    if (n > 0) {
      s.mean(a) = sum / n;
      double var = std::max(0.0, sumsq / n - s.mean(a) * s.mean(a));
      s.stddev(a) = std::max(std::sqrt(var), 1e-8);
    }
  }
  return s;
}

double uap_loss(const Mat& reprs, const std::vector<int32_t>& users, const AttributeTable& attrs,
                const AttributeSchema& schema, const Standardizer& stand, const UapHead& head,
                UapCache* cache) {
  if (head.num_w.size() != schema.numeric_names.size() ||
      head.disc_w.size() != schema.discrete_names.size())
    throw DataError("uap head does not match the attribute schema");
  if (static_cast<size_t>(reprs.rows()) != users.size())
    throw DataError("uap: reprs/users size mismatch");

  double total = 0;
  if (cache) {
    cache->num_rows.assign(head.num_w.size(), {});
    cache->num_err.assign(head.num_w.size(), Vec());
    cache->disc_rows.assign(head.disc_w.size(), {});
    cache->disc_probs.assign(head.disc_w.size(), Mat());
    cache->disc_labels.assign(head.disc_w.size(), {});
  }

  for (size_t a = 0; a < head.num_w.size(); ++a) {
    std::vector<int> rows;
    for (size_t r = 0; r < users.size(); ++r)
      if (users[r] >= 0 && attrs.has_numeric(users[r], a)) rows.push_back(static_cast<int>(r));
    if (rows.empty()) continue;
    Vec err(rows.size());
    double lsum = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
      double pred = head.num_w[a].dot(reprs.row(rows[i])) + head.num_b[a];
      double zt = stand.z(attrs.numeric_values[users[rows[i]]][a], a);
      err(i) = pred - zt;
      lsum += huber(pred, zt);
    }
    total += lsum / rows.size();
    if (cache) {
      cache->num_rows[a] = std::move(rows);
      cache->num_err[a] = std::move(err);
    }
  }

  for (size_t a = 0; a < head.disc_w.size(); ++a) {
    std::vector<int> rows;
    for (size_t r = 0; r < users.size(); ++r)
      if (users[r] >= 0 && attrs.has_discrete(users[r], a)) rows.push_back(static_cast<int>(r));
    if (rows.empty()) continue;
    const Eigen::Index c = head.disc_w[a].rows();
    Mat probs(rows.size(), c);
    std::vector<int32_t> labels(rows.size());
    double lsum = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
      Vec logits = head.disc_w[a] * reprs.row(rows[i]).transpose() + head.disc_b[a];
      double mx = logits.maxCoeff();
      Vec e = (logits.array() - mx).exp();
      probs.row(i) = (e / e.sum()).transpose();
      labels[i] = attrs.discrete_values[users[rows[i]]][a];
      if (labels[i] < 0 || labels[i] >= c) throw DataError("discrete value outside cardinality");
      lsum += -std::log(std::max(probs(i, labels[i]), 1e-300));
    }
    total += lsum / rows.size();
    if (cache) {
      cache->disc_rows[a] = std::move(rows);
      cache->disc_probs[a] = std::move(probs);
      cache->disc_labels[a] = std::move(labels);
    }
  }
  return total;
}

void uap_backward(const Mat& reprs, const std::vector<int32_t>& users, const UapHead& head,
                  const UapCache& cache, double scale, Mat& d_reprs, UapGrads& grads) {
  (void)users;
  for (size_t a = 0; a < head.num_w.size(); ++a) {
    const auto& rows = cache.num_rows[a];
    if (rows.empty()) continue;
    const double inv = scale / rows.size();
    for (size_t i = 0; i < rows.size(); ++i) {
      double e = cache.num_err[a](i);
      double g = (std::abs(e) < 1.0 ? e : (e > 0 ? 1.0 : -1.0)) * inv;
      grads.num_w[a] += g * reprs.row(rows[i]).transpose();
      grads.num_b[a] += g;
      d_reprs.row(rows[i]) += g * head.num_w[a].transpose();
    }
  }
  for (size_t a = 0; a < head.disc_w.size(); ++a) {
    const auto& rows = cache.disc_rows[a];
    if (rows.empty()) continue;
    const double inv = scale / rows.size();
    for (size_t i = 0; i < rows.size(); ++i) {
      Vec d_logits = cache.disc_probs[a].row(i).transpose() * inv;
      d_logits(cache.disc_labels[a][i]) -= inv;
      grads.disc_w[a] += d_logits * reprs.row(rows[i]);
      grads.disc_b[a] += d_logits;
      d_reprs.row(rows[i]) += d_logits.transpose() * head.disc_w[a];
    }
  }
}

double srd_similarity(const Vec& q, const Vec& c, const SrdHead& head) {
  return -(head.w.dot((q - c).cwiseAbs2()) + head.b);
}

double srd_loss(const Mat& query_reprs, const Mat& cand_reprs,
                const std::vector<std::vector<uint8_t>>& neg_mask, const SrdHead& head,
                uint64_t* skipped, SrdCache* cache) {
  const int B = static_cast<int>(query_reprs.rows());
  if (B < 2) throw DataError("srd_loss needs a batch of at least 2 pairs");
  if (cand_reprs.rows() != B || static_cast<int>(neg_mask.size()) != B)
    throw DataError("srd batch shape mismatch");

  Mat sim(B, B);
  for (int j = 0; j < B; ++j)
    for (int i = 0; i < B; ++i)
      sim(j, i) = srd_similarity(query_reprs.row(j).transpose(), cand_reprs.row(i).transpose(), head);

  Mat softmax = Mat::Zero(B, B);
  std::vector<uint8_t> active(B, 0);
  double loss = 0;
  int n_active = 0;
  uint64_t n_skip = 0;
  for (int j = 0; j < B; ++j) {
    bool has_neg = false;
    for (int i = 0; i < B && !has_neg; ++i) has_neg = i != j && neg_mask[j][i];
    if (!has_neg) {
      ++n_skip;
      continue;
    }
    active[j] = 1;
    ++n_active;
    double mx = sim(j, j);
    for (int i = 0; i < B; ++i)
      if (i != j && neg_mask[j][i]) mx = std::max(mx, sim(j, i));
    double z = 0;
    for (int i = 0; i < B; ++i) {
      if (i == j || neg_mask[j][i]) {
        softmax(j, i) = std::exp(sim(j, i) - mx);
        z += softmax(j, i);
      }
    }
    softmax.row(j) /= z;
    loss += -std::log(std::max(softmax(j, j), 1e-300));
  }
  if (n_active == 0) throw DataError("srd_loss: every query was skipped");
  if (skipped) *skipped = n_skip;
  if (cache) {
    cache->sim = std::move(sim);
    cache->softmax = std::move(softmax);
    cache->active_query = std::move(active);
    cache->n_active = n_active;
  }
  return loss / n_active;
}

void srd_backward(const Mat& query_reprs, const Mat& cand_reprs, const SrdHead& head,
                  const SrdCache& cache, double scale, Mat& d_query, Mat& d_cand, SrdGrads& grads) {
  const int B = static_cast<int>(query_reprs.rows());
  const double inv = scale / cache.n_active;
  for (int j = 0; j < B; ++j) {
    if (!cache.active_query[j]) continue;
    for (int i = 0; i < B; ++i) {
      double p = cache.softmax(j, i);
      if (p == 0.0 && i != j) continue;
      double d_sim = (p - (i == j ? 1.0 : 0.0)) * inv;
      if (d_sim == 0.0) continue;
      Vec diff = query_reprs.row(j).transpose() - cand_reprs.row(i).transpose();
      // sim = -(w . diff^2 + b)
      grads.w += -d_sim * diff.cwiseAbs2();
      grads.b += -d_sim;
      Vec d_diff = -2.0 * d_sim * head.w.cwiseProduct(diff);
      d_query.row(j) += d_diff.transpose();
      d_cand.row(i) -= d_diff.transpose();
    }
  }
}

std::vector<double> numeric_ranges(const AttributeTable& attrs, const AttributeSchema& schema) {
  std::vector<double> range(schema.numeric_names.size(), 0.0);
  for (size_t a = 0; a < range.size(); ++a) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (size_t u = 0; u < attrs.numeric_present.size(); ++u) {
      if (!attrs.numeric_present[u][a]) continue;
      lo = std::min(lo, attrs.numeric_values[u][a]);
      hi = std::max(hi, attrs.numeric_values[u][a]);
    }
    range[a] = hi > lo ? hi - lo : 0.0;
  }
  return range;
}

bool profiles_similar(int32_t u, int32_t v, const AttributeTable& attrs,
                      const AttributeSchema& schema, const std::vector<double>& numeric_range,
                      double range_fraction) {
  bool any_shared = false;
  for (size_t a = 0; a < schema.discrete_names.size(); ++a) {
    if (!attrs.has_discrete(u, a) || !attrs.has_discrete(v, a)) continue;
    any_shared = true;
    if (attrs.discrete_values[u][a] != attrs.discrete_values[v][a]) return false;
  }
  for (size_t a = 0; a < schema.numeric_names.size(); ++a) {
    if (!attrs.has_numeric(u, a) || !attrs.has_numeric(v, a)) continue;
    any_shared = true;
    double tol = range_fraction * numeric_range[a];
    if (std::abs(attrs.numeric_values[u][a] - attrs.numeric_values[v][a]) > tol) return false;
  }
  return any_shared;
}

std::vector<std::vector<uint8_t>> build_srd_negative_mask(
    const std::vector<int32_t>& query_users, const std::vector<int32_t>& cand_users,
    const SocialGraph& graph, const AttributeTable& attrs, const AttributeSchema& schema,
    const std::vector<double>& num_range, double range_fraction) {
  const size_t B = query_users.size();
  if (cand_users.size() != B) throw DataError("srd mask: query/candidate size mismatch");
  std::vector<std::vector<uint8_t>> mask(B, std::vector<uint8_t>(B, 0));
  for (size_t j = 0; j < B; ++j) {
    auto two_hop = graph.two_hop_neighbors(query_users[j]);
    for (size_t i = 0; i < B; ++i) {
      if (i == j) continue;  // the positive, never a negative
      int32_t c = cand_users[i];
      if (c == query_users[j]) continue;
      if (std::binary_search(two_hop.begin(), two_hop.end(), c)) continue;
      if (profiles_similar(query_users[j], c, attrs, schema, num_range, range_fraction)) continue;
      mask[j][i] = 1;
    }
  }
  return mask;
}

double joint_loss(double l_mip, double l_uap, double l_srd, double lambda1, double lambda2,
                  double lambda3) {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw DataError("loss weights must be >= 0");
  return lambda1 * l_mip + lambda2 * l_uap + lambda3 * l_srd;
}

}  // namespace uprec
