#include "uprec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "uprec/dataio.hpp"
#include "uprec/objectives.hpp"

namespace uprec {

namespace {

constexpr int kEvalChunk = 256;

double score_item(const ModelParams& params, const Vec& h, int32_t item) {
  const Mat& w = params.mip.tied ? params.encoder.item_emb : params.mip.w_untied;
  return w.row(item).dot(h) + params.mip.bias(item);
}

}  // namespace

int rank_of_target(double target_score, const std::vector<double>& negative_scores) {
  int rank = 1;
  for (double s : negative_scores)
    if (s >= target_score) ++rank;
  return rank;
}

MetricsReport rank_metrics(const std::vector<int>& ranks) {
  if (ranks.empty()) throw DataError("rank_metrics: no trials");
  MetricsReport m;
  m.n_trials = ranks.size();
  for (int r : ranks) {
    if (r < 1) throw DataError("rank_metrics: rank below 1");
    double gain = 1.0 / std::log2(static_cast<double>(r) + 1.0);
    m.hr1 += r <= 1;
    m.hr5 += r <= 5;
    m.hr10 += r <= 10;
    m.ndcg5 += r <= 5 ? gain : 0.0;
    m.ndcg10 += r <= 10 ? gain : 0.0;
    m.mrr += 1.0 / static_cast<double>(r);
  }
  double n = static_cast<double>(m.n_trials);
  m.hr1 /= n;
  m.hr5 /= n;
  m.hr10 /= n;
  m.ndcg5 /= n;
  m.ndcg10 /= n;
  m.mrr /= n;
  return m;
}

MetricsReport eval_seqrec(ModelParams& params, const DatasetBundle& bundle, bool use_test,
                          int n_neg, uint64_t seed) {
  const InteractionDataset& ds = bundle.ds;
  std::vector<int32_t> eligible;
  for (int32_t u = 0; u < ds.n_users(); ++u)
    if (!ds.eval_user(u) && bundle.split.has_eval(u)) eligible.push_back(u);
  if (eligible.empty()) throw DataError("eval_seqrec: no evaluable users");

  std::vector<int> ranks;
  ranks.reserve(eligible.size());
  for (size_t start = 0; start < eligible.size(); start += kEvalChunk) {
    size_t stop = std::min(start + kEvalChunk, eligible.size());
    std::vector<std::vector<int32_t>> prefixes;
    std::vector<int32_t> targets, users;
    for (size_t i = start; i < stop; ++i) {
      int32_t u = eligible[i];
      std::vector<int32_t> prefix = ds.train_prefix(u);
      if (use_test) prefix.push_back(bundle.split.valid_target[u]);
      prefixes.push_back(std::move(prefix));
      targets.push_back(use_test ? bundle.split.test_target[u] : bundle.split.valid_target[u]);
      users.push_back(u);
    }
    MaskedBatch batch = finetune_target_mask(prefixes, targets, users, params.enc_cfg.max_len);
    Mat hidden = encode(batch.tokens, params.encoder, params.enc_cfg, false, nullptr, nullptr);
    for (size_t i = start; i < stop; ++i) {
      int r = static_cast<int>(i - start);
      int32_t u = eligible[i];
      Vec h = hidden.row(r * batch.tokens.width + batch.masked_pos[r][0]).transpose();
      Rng rng = derive_rng(seed, static_cast<uint64_t>(u));
      std::unordered_set<int32_t> history(ds.sequences[u].begin(), ds.sequences[u].end());
      std::vector<int32_t> negs =
          sample_eval_negatives(targets[r], ds.popularity, n_neg, history, rng);
      std::vector<double> neg_scores;
      neg_scores.reserve(negs.size());
      for (int32_t item : negs) neg_scores.push_back(score_item(params, h, item));
      ranks.push_back(rank_of_target(score_item(params, h, targets[r]), neg_scores));
    }
  }
  return rank_metrics(ranks);
}

Mat all_user_reprs(ModelParams& params, const DatasetBundle& bundle) {
  const InteractionDataset& ds = bundle.ds;
  Mat reprs = Mat::Zero(ds.n_users(), params.enc_cfg.hidden_dim);
  std::vector<int32_t> pending;
  for (int32_t u = 0; u < ds.n_users(); ++u)
    if (!ds.sequences[u].empty()) pending.push_back(u);
  for (size_t start = 0; start < pending.size(); start += kEvalChunk) {
    size_t stop = std::min(start + kEvalChunk, pending.size());
    std::vector<std::vector<int32_t>> seqs;
    for (size_t i = start; i < stop; ++i) seqs.push_back(bundle.ds.sequences[pending[i]]);
    TokenBatch batch = wrap_with_specials(seqs, params.enc_cfg.max_len);
    Mat hidden = encode(batch, params.encoder, params.enc_cfg, false, nullptr, nullptr);
    Mat pooled = max_pool_user_repr(hidden, batch, nullptr);
    for (size_t i = start; i < stop; ++i) reprs.row(pending[i]) = pooled.row(i - start);
  }
  return reprs;
}

namespace {

// One evaluation trial per held-out edge: a seeded direction flip plus 99
// distinct uniform non-friend negatives. Shared by the model evaluation and
// the overlap baseline so both see identical trials.
struct SrdTrial {
  int32_t query;
  int32_t positive;
  std::vector<int32_t> negatives;
};

std::vector<SrdTrial> srd_trials(const DatasetBundle& bundle, int n_neg, uint64_t seed) {
  auto edges = bundle.eval_edges();
  if (edges.empty()) throw DataError("eval_srd: no held-out eval edges in bundle");
  int32_t n_users = bundle.ds.n_users();
  std::vector<SrdTrial> trials;
  trials.reserve(edges.size());
  for (size_t e = 0; e < edges.size(); ++e) {
    Rng rng = derive_rng(seed, 0x5d000000ULL + e);
    auto [a, b] = edges[e];
    bool flip = uniform01(rng) < 0.5;
    SrdTrial t;
    t.query = flip ? b : a;
    t.positive = flip ? a : b;
    const auto& friends = bundle.graph.neighbors(t.query);
    int64_t eligible = static_cast<int64_t>(n_users) - 1 - static_cast<int64_t>(friends.size());
    if (eligible < n_neg) throw DataError("eval_srd: fewer than n_neg eligible negatives");
    std::unordered_set<int32_t> taken;
    while (static_cast<int>(t.negatives.size()) < n_neg) {
      int32_t c = static_cast<int32_t>(uniform_index(rng, static_cast<size_t>(n_users)));
      if (c == t.query) continue;
      if (std::binary_search(friends.begin(), friends.end(), c)) continue;
      if (!taken.insert(c).second) continue;
      t.negatives.push_back(c);
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace

double eval_srd(ModelParams& params, const DatasetBundle& bundle, int n_neg, uint64_t seed) {
  std::vector<SrdTrial> trials = srd_trials(bundle, n_neg, seed);
  Mat reprs = all_user_reprs(params, bundle);
  uint64_t correct = 0;
  for (const SrdTrial& t : trials) {
    Vec q = reprs.row(t.query).transpose();
    double pos = srd_similarity(q, reprs.row(t.positive).transpose(), params.srd);
    bool win = true;
    for (int32_t c : t.negatives) {
      if (srd_similarity(q, reprs.row(c).transpose(), params.srd) >= pos) {
        win = false;
        break;
      }
    }
    correct += win;
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

int sim_baseline_choice(const std::vector<int32_t>& query_seq,
                        const std::vector<std::vector<int32_t>>& candidate_seqs) {
  if (candidate_seqs.empty()) throw DataError("sim_baseline: no candidates");
  std::unordered_set<int32_t> q(query_seq.begin(), query_seq.end());
  int best = 0;
  size_t best_overlap = 0;
  bool first = true;
  for (size_t c = 0; c < candidate_seqs.size(); ++c) {
    std::unordered_set<int32_t> seen;
    size_t overlap = 0;
    for (int32_t item : candidate_seqs[c])
      if (q.count(item) && seen.insert(item).second) ++overlap;
    if (first || overlap > best_overlap) {
      best = static_cast<int>(c);
      best_overlap = overlap;
      first = false;
    }
  }
  return best;
}

double eval_srd_sim_baseline(const DatasetBundle& bundle, int n_neg, uint64_t seed) {
  std::vector<SrdTrial> trials = srd_trials(bundle, n_neg, seed);
  uint64_t correct = 0;
  for (const SrdTrial& t : trials) {
    std::vector<std::vector<int32_t>> cands;
    for (int32_t c : t.negatives) cands.push_back(bundle.ds.sequences[c]);
    // Positive goes last so an overlap tie counts against the baseline, the
    // same pessimism applied to the model's strict-win rule.
    cands.push_back(bundle.ds.sequences[t.positive]);
    int choice = sim_baseline_choice(bundle.ds.sequences[t.query], cands);
    correct += choice == static_cast<int>(cands.size()) - 1;
  }
  return static_cast<double>(correct) / static_cast<double>(trials.size());
}

ProfileReport eval_profile(ModelParams& params, const DatasetBundle& bundle,
                           const std::string& task) {
  int num_idx = bundle.schema.find_numeric(task);
  int disc_idx = bundle.schema.find_discrete(task);
  if (num_idx < 0 && disc_idx < 0) throw DataError("eval_profile: unknown attribute " + task);

  const InteractionDataset& ds = bundle.ds;
  std::vector<int32_t> users;
  for (int32_t u = 0; u < ds.n_users(); ++u) {
    if (!ds.eval_user(u) || ds.sequences[u].empty()) continue;
    bool present = num_idx >= 0 ? bundle.attrs.has_numeric(u, num_idx)
                                : bundle.attrs.has_discrete(u, disc_idx);
    if (present) users.push_back(u);
  }
  if (users.empty()) throw DataError("eval_profile: no eval users with attribute " + task);

  ProfileReport rep;
  rep.is_numeric = num_idx >= 0;
  rep.n_users = users.size();
  for (size_t start = 0; start < users.size(); start += kEvalChunk) {
    size_t stop = std::min(start + kEvalChunk, users.size());
    std::vector<std::vector<int32_t>> seqs;
    for (size_t i = start; i < stop; ++i) seqs.push_back(ds.sequences[users[i]]);
    TokenBatch batch = wrap_with_specials(seqs, params.enc_cfg.max_len);
    Mat hidden = encode(batch, params.encoder, params.enc_cfg, false, nullptr, nullptr);
    Mat cls = cls_repr(hidden, batch);
    for (size_t i = start; i < stop; ++i) {
      int32_t u = users[i];
      Vec h = cls.row(i - start).transpose();
      if (rep.is_numeric) {
        double pred_z = params.uap.num_w[num_idx].dot(h) + params.uap.num_b[num_idx];
        double target = bundle.attrs.numeric_values[u][num_idx];
        double target_z = params.stand.z(target, num_idx);
        double err_z = pred_z - target_z;
        rep.mse_z += err_z * err_z;
        double err_raw = params.stand.un_z(pred_z, num_idx) - target;
        rep.mse_raw += err_raw * err_raw;
      } else {
        Vec logits = params.uap.disc_w[disc_idx] * h + params.uap.disc_b[disc_idx];
        int argmax = 0;
        logits.maxCoeff(&argmax);
        rep.accuracy += argmax == bundle.attrs.discrete_values[u][disc_idx];
      }
    }
  }
  double n = static_cast<double>(rep.n_users);
  rep.mse_z /= n;
  rep.mse_raw /= n;
  rep.accuracy /= n;
  return rep;
}

}  // namespace uprec
