#include "uprec/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "uprec/evaluator.hpp"

namespace uprec {

namespace {

using json = nlohmann::json;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<int32_t> training_user_pool(const InteractionDataset& ds, size_t min_prefix_len) {
  std::vector<int32_t> pool;
  for (int32_t u = 0; u < ds.n_users(); ++u)
    if (!ds.eval_user(u) && ds.train_prefix(u).size() >= min_prefix_len) pool.push_back(u);
  if (pool.empty()) throw DataError("no trainable users in dataset");
  return pool;
}

json config_json(const PretrainConfig& c) {
  return json{{"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"lambda3", c.lambda3},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"iterations_per_epoch", c.iterations_per_epoch},
              {"num_epochs", c.num_epochs},
              {"checkpoint_every", c.checkpoint_every},
              {"mask_proportion", c.mask_proportion},
              {"seed", c.seed},
              {"enable_uap", c.enable_uap},
              {"enable_srd", c.enable_srd},
              {"srd_masked_inputs", c.srd_masked_inputs},
              {"profile_range_fraction", c.profile_range_fraction},
              {"clip_norm", c.clip_norm}};
}

void write_sidecar(const std::string& bin_path, const json& meta) {
  std::string side = bin_path.substr(0, bin_path.size() - 4) + ".json";
  std::ofstream out(side);
  out << meta.dump(2) << "\n";
  if (!out.good()) throw DataError("failed to write " + side);
}

}  // namespace

void PretrainConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw DataError("negative task weight");
  if (learning_rate <= 0) throw DataError("learning_rate must be positive");
  if (batch_size < 1) throw DataError("batch_size must be at least 1");
  if (iterations_per_epoch < 1) throw DataError("iterations_per_epoch must be at least 1");
  if (num_epochs < 0) throw DataError("num_epochs must be non-negative");
  if (checkpoint_every < 1) throw DataError("checkpoint_every must be at least 1");
  if (mask_proportion <= 0 || mask_proportion >= 1) throw DataError("mask_proportion in (0,1)");
}

void FinetuneConfig::validate() const {
  if (learning_rate <= 0) throw DataError("learning_rate must be positive");
  if (batch_size < 1) throw DataError("batch_size must be at least 1");
  if (iterations_per_epoch < 1) throw DataError("iterations_per_epoch must be at least 1");
  if (num_epochs < 0) throw DataError("num_epochs must be non-negative");
  if (eval_n_neg < 1) throw DataError("eval_n_neg must be at least 1");
}

MaskedBatch draw_masked_batch(const InteractionDataset& ds, const std::vector<int32_t>& pool,
                              int batch_size, double mask_p, int max_len, Rng& rng) {
  if (pool.empty()) throw DataError("draw_masked_batch: empty user pool");
  std::vector<std::vector<int32_t>> seqs;
  std::vector<int32_t> users;
  seqs.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    int32_t u = pool[uniform_index(rng, pool.size())];
    users.push_back(u);
    seqs.push_back(ds.train_prefix(u));
  }
  return make_masked_batch(seqs, users, mask_p, max_len, rng);
}

SrdBatch draw_srd_batch(const DatasetBundle& bundle,
                        const std::vector<std::pair<int32_t, int32_t>>& edges,
                        const std::vector<double>& numeric_range, double range_fraction,
                        int batch_size, double mask_p, bool masked_inputs, int max_len, Rng& rng) {
  if (edges.empty()) throw DataError("draw_srd_batch: no pre-training edges");
  SrdBatch b;
  std::vector<std::vector<int32_t>> q_seqs, c_seqs;
  int failures = 0;
  while (static_cast<int>(b.query_users.size()) < batch_size) {
    auto [x, y] = edges[uniform_index(rng, edges.size())];
    if (uniform01(rng) < 0.5) std::swap(x, y);
    std::vector<int32_t> qs = bundle.ds.train_prefix(x);
    std::vector<int32_t> cs = bundle.ds.train_prefix(y);
    if (qs.empty() || cs.empty()) {
      if (++failures > 10 * batch_size) throw DataError("draw_srd_batch: edges lack usable sequences");
      continue;
    }
    b.query_users.push_back(x);
    b.cand_users.push_back(y);
    q_seqs.push_back(std::move(qs));
    c_seqs.push_back(std::move(cs));
  }
  if (masked_inputs) {
    b.query_tokens = make_masked_batch(q_seqs, b.query_users, mask_p, max_len, rng).tokens;
    b.cand_tokens = make_masked_batch(c_seqs, b.cand_users, mask_p, max_len, rng).tokens;
  } else {
    b.query_tokens = wrap_with_specials(q_seqs, max_len);
    b.cand_tokens = wrap_with_specials(c_seqs, max_len);
  }
  b.neg_mask = build_srd_negative_mask(b.query_users, b.cand_users, bundle.graph, bundle.attrs,
                                       bundle.schema, numeric_range, range_fraction);
  return b;
}

StepLosses joint_forward_backward(ModelParams& params, const MaskedBatch& mb, const SrdBatch* sb,
                                  const AttributeTable& attrs, double lambda1, double lambda2,
                                  double lambda3, bool train, Rng* rng, ModelGrads& grads) {
  StepLosses out;
  const EncoderConfig& cfg = params.enc_cfg;
  Mat& d_mip_w = params.mip.tied ? grads.encoder.item_emb : grads.mip.w_untied;

  ForwardCache cache;
  Mat hidden = encode(mb.tokens, params.encoder, cfg, train, rng, &cache);
  Mat probs;
  out.mip = mip_loss(hidden, mb, params.mip, params.encoder.item_emb, &probs);

  Mat d_hidden = Mat::Zero(hidden.rows(), hidden.cols());
  if (lambda1 > 0)
    mip_backward(hidden, mb, params.mip, params.encoder.item_emb, probs, lambda1, d_hidden,
                 grads.mip.bias, d_mip_w);

  if (lambda2 > 0) {
    Eigen::MatrixXi argmax;
    Mat reprs = max_pool_user_repr(hidden, mb.tokens, &argmax);
    UapCache uc;
    out.uap = uap_loss(reprs, mb.users, attrs, params.schema, params.stand, params.uap, &uc);
    Mat d_reprs = Mat::Zero(reprs.rows(), reprs.cols());
    uap_backward(reprs, mb.users, params.uap, uc, lambda2, d_reprs, grads.uap);
    max_pool_backward(d_reprs, argmax, mb.tokens, d_hidden);
  }
  encoder_backward(d_hidden, cache, params.encoder, cfg, grads.encoder);

  if (sb && lambda3 > 0) {
    ForwardCache qc, cc;
    Mat hq = encode(sb->query_tokens, params.encoder, cfg, train, rng, &qc);
    Mat hc = encode(sb->cand_tokens, params.encoder, cfg, train, rng, &cc);
    Eigen::MatrixXi q_am, c_am;
    Mat q_reprs = max_pool_user_repr(hq, sb->query_tokens, &q_am);
    Mat c_reprs = max_pool_user_repr(hc, sb->cand_tokens, &c_am);
    SrdCache sc;
    out.srd = srd_loss(q_reprs, c_reprs, sb->neg_mask, params.srd, &out.srd_skipped, &sc);
    Mat dq = Mat::Zero(q_reprs.rows(), q_reprs.cols());
    Mat dc = Mat::Zero(c_reprs.rows(), c_reprs.cols());
    srd_backward(q_reprs, c_reprs, params.srd, sc, lambda3, dq, dc, grads.srd);
    Mat dhq = Mat::Zero(hq.rows(), hq.cols());
    Mat dhc = Mat::Zero(hc.rows(), hc.cols());
    max_pool_backward(dq, q_am, sb->query_tokens, dhq);
    max_pool_backward(dc, c_am, sb->cand_tokens, dhc);
    encoder_backward(dhq, qc, params.encoder, cfg, grads.encoder);
    encoder_backward(dhc, cc, params.encoder, cfg, grads.encoder);
  }

  out.total = joint_loss(out.mip, out.uap, out.srd, lambda1, lambda2, lambda3);
  return out;
}

PretrainResult pretrain(const DatasetBundle& bundle, const EncoderConfig& enc_cfg,
                        const PretrainConfig& cfg, const std::string& out_dir, std::ostream* log,
                        const std::string& resume_from) {
  cfg.validate();
  enc_cfg.validate();
  if (enc_cfg.vocab_size != bundle.ds.vocab_size())
    throw DataError("encoder vocab_size does not match dataset");
  std::filesystem::create_directories(out_dir);

  const bool use_uap = cfg.enable_uap && cfg.lambda2 > 0;
  const bool use_srd = cfg.enable_srd && cfg.lambda3 > 0;
  const double l2 = use_uap ? cfg.lambda2 : 0.0;
  const double l3 = use_srd ? cfg.lambda3 : 0.0;

  std::vector<int32_t> pool = training_user_pool(bundle.ds, 1);
  std::vector<std::pair<int32_t, int32_t>> srd_edges;
  std::vector<double> num_range;
  if (use_srd) {
    srd_edges = bundle.pretrain_edges();
    if (srd_edges.empty()) throw DataError("pretrain: relation task enabled but no edges");
    num_range = numeric_ranges(bundle.attrs, bundle.schema);
  }

  ModelParams params;
  AdamState opt;
  Rng train_rng = derive_rng(cfg.seed, 0x7e41);
  int start_epoch = 0;
  if (resume_from.empty()) {
    Rng init_rng = derive_rng(cfg.seed, 0x1417);
    params = ModelParams::init(enc_cfg, bundle.schema, init_rng);
    params.stand = Standardizer::fit(bundle.attrs, bundle.schema, bundle.ds.is_eval_user);
    opt = AdamState::init(params);
  } else {
    Checkpoint ckpt = load_checkpoint(resume_from);
    if (!ckpt.opt) throw DataError("resume checkpoint lacks optimizer state");
    params = std::move(ckpt.params);
    opt = std::move(*ckpt.opt);
    train_rng = rng_state_from_string(ckpt.rng_state);
    start_epoch = static_cast<int>(ckpt.epoch);
  }

  PretrainResult result;
  std::string last_ckpt = resume_from;
  auto save_at = [&](int epoch, double mean_loss) {
    std::string path = out_dir + "/ckpt_" + std::to_string(epoch) + ".bin";
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.opt = opt;
    ckpt.epoch = epoch;
    ckpt.rng_state = rng_state_to_string(train_rng);
    json meta = {{"epoch", epoch}, {"mean_loss", mean_loss}, {"config", config_json(cfg)}};
    ckpt.metadata_json = meta.dump();
    save_checkpoint(path, ckpt);
    write_sidecar(path, meta);
    result.checkpoint_paths.push_back(path);
    last_ckpt = path;
  };

  for (int epoch = start_epoch + 1; epoch <= cfg.num_epochs; ++epoch) {
    double loss_sum = 0;
    for (int iter = 1; iter <= cfg.iterations_per_epoch; ++iter) {
      double t0 = now_ms();
      MaskedBatch mb = draw_masked_batch(bundle.ds, pool, cfg.batch_size, cfg.mask_proportion,
                                         enc_cfg.max_len, train_rng);
      SrdBatch sb;
      if (use_srd)
        sb = draw_srd_batch(bundle, srd_edges, num_range, cfg.profile_range_fraction,
                            cfg.batch_size, cfg.mask_proportion, cfg.srd_masked_inputs,
                            enc_cfg.max_len, train_rng);

      ModelGrads grads = ModelGrads::zeros(params);
      StepLosses losses = joint_forward_backward(params, mb, use_srd ? &sb : nullptr, bundle.attrs,
                                                 cfg.lambda1, l2, l3, true, &train_rng, grads);
      if (!std::isfinite(losses.total))
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " iteration " +
                              std::to_string(iter) +
                              (last_ckpt.empty() ? "" : "; last good checkpoint: " + last_ckpt));
      if (cfg.clip_norm > 0) clip_grad_norm(grads, cfg.clip_norm);
      adam_step(params, grads, opt, cfg.learning_rate);
      loss_sum += losses.total;

      if (log) {
        json line = {{"epoch", epoch},        {"iter", iter},
                     {"l_mip", losses.mip},   {"l_uap", losses.uap},
                     {"l_srd", losses.srd},   {"l_total", losses.total},
                     {"wall_ms", now_ms() - t0}};
        *log << line.dump() << "\n";
      }
    }
    double mean_loss = loss_sum / cfg.iterations_per_epoch;
    result.epoch_mean_loss.push_back(mean_loss);
    if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.num_epochs) save_at(epoch, mean_loss);
  }

  if (result.checkpoint_paths.empty() && resume_from.empty()) {
    // Zero-epoch run still produces an artifact so downstream stages have
    // something to load.
    save_at(0, 0.0);
  }
  result.final_checkpoint = last_ckpt;
  return result;
}

FinetuneResult finetune_seqrec(const Checkpoint& start, const DatasetBundle& bundle,
                               const FinetuneConfig& cfg, std::ostream* log) {
  cfg.validate();
  ModelParams params = start.params;
  const EncoderConfig& enc_cfg = params.enc_cfg;
  std::vector<int32_t> pool = training_user_pool(bundle.ds, 2);
  Rng rng = derive_rng(cfg.seed, 0xf17e);
  AdamState opt = AdamState::init(params);

  FinetuneResult result;
  result.best.params = params;
  result.best.epoch = 0;
  result.best.metadata_json = start.metadata_json;
  result.best_epoch = 0;
  result.best_hr1 = eval_seqrec(params, bundle, false, cfg.eval_n_neg, cfg.seed).hr1;

  for (int epoch = 1; epoch <= cfg.num_epochs; ++epoch) {
    double loss_sum = 0;
    for (int iter = 1; iter <= cfg.iterations_per_epoch; ++iter) {
      double t0 = now_ms();
      std::vector<std::vector<int32_t>> prefixes;
      std::vector<int32_t> targets, users;
      for (int i = 0; i < cfg.batch_size; ++i) {
        int32_t u = pool[uniform_index(rng, pool.size())];
        std::vector<int32_t> prefix = bundle.ds.train_prefix(u);
        targets.push_back(prefix.back());
        prefix.pop_back();
        prefixes.push_back(std::move(prefix));
        users.push_back(u);
      }
      MaskedBatch mb = finetune_target_mask(prefixes, targets, users, enc_cfg.max_len);
      ModelGrads grads = ModelGrads::zeros(params);
      StepLosses losses =
          joint_forward_backward(params, mb, nullptr, bundle.attrs, 1.0, 0.0, 0.0, true, &rng, grads);
      if (!std::isfinite(losses.total))
        throw DivergenceError("fine-tuning diverged at epoch " + std::to_string(epoch) +
                              " iteration " + std::to_string(iter));
      if (cfg.clip_norm > 0) clip_grad_norm(grads, cfg.clip_norm);
      adam_step(params, grads, opt, cfg.learning_rate);
      loss_sum += losses.total;
      if (log) {
        json line = {{"phase", "finetune_seqrec"},
                     {"epoch", epoch},
                     {"iter", iter},
                     {"loss", losses.total},
                     {"wall_ms", now_ms() - t0}};
        *log << line.dump() << "\n";
      }
    }
    double hr1 = eval_seqrec(params, bundle, false, cfg.eval_n_neg, cfg.seed).hr1;
    result.valid_hr1_by_epoch.push_back(hr1);
    if (log) {
      json line = {{"phase", "finetune_seqrec"},
                   {"epoch", epoch},
                   {"mean_loss", loss_sum / cfg.iterations_per_epoch},
                   {"valid_hr1", hr1}};
      *log << line.dump() << "\n";
    }
    if (hr1 > result.best_hr1) {
      result.best_hr1 = hr1;
      result.best_epoch = epoch;
      result.best.params = params;
    }
  }
  result.best.epoch = result.best_epoch;
  return result;
}

Checkpoint finetune_profile(const Checkpoint& start, const DatasetBundle& bundle,
                            const std::string& task, const FinetuneConfig& cfg, std::ostream* log) {
  cfg.validate();
  ModelParams params = start.params;
  const EncoderConfig& enc_cfg = params.enc_cfg;
  const int d = enc_cfg.hidden_dim;
  int num_idx = bundle.schema.find_numeric(task);
  int disc_idx = bundle.schema.find_discrete(task);
  if (num_idx < 0 && disc_idx < 0) throw DataError("finetune_profile: unknown attribute " + task);
  const bool numeric = num_idx >= 0;

  // The pre-trained head was fitted to max-pooled representations; the
  // profile task reads CLS, so its head starts fresh.
  Rng head_rng = derive_rng(cfg.seed, 0x9ead);
  if (numeric) {
    for (int i = 0; i < d; ++i) params.uap.num_w[num_idx](i) = truncated_normal(head_rng, 0.02);
    params.uap.num_b[num_idx] = 0.0;
  } else {
    Mat& w = params.uap.disc_w[disc_idx];
    for (int i = 0; i < w.size(); ++i) w.data()[i] = truncated_normal(head_rng, 0.02);
    params.uap.disc_b[disc_idx].setZero();
  }

  std::vector<int32_t> pool;
  for (int32_t u = 0; u < bundle.ds.n_users(); ++u) {
    if (bundle.ds.eval_user(u) || bundle.ds.sequences[u].empty()) continue;
    bool present = numeric ? bundle.attrs.has_numeric(u, num_idx)
                           : bundle.attrs.has_discrete(u, disc_idx);
    if (present) pool.push_back(u);
  }
  if (pool.empty()) throw DataError("finetune_profile: no training users with attribute " + task);

  Rng rng = derive_rng(cfg.seed, 0x9f0f);
  AdamState opt = AdamState::init(params);
  for (int epoch = 1; epoch <= cfg.num_epochs; ++epoch) {
    for (int iter = 1; iter <= cfg.iterations_per_epoch; ++iter) {
      double t0 = now_ms();
      std::vector<int32_t> users;
      std::vector<std::vector<int32_t>> seqs;
      for (int i = 0; i < cfg.batch_size; ++i) {
        int32_t u = pool[uniform_index(rng, pool.size())];
        users.push_back(u);
        seqs.push_back(bundle.ds.sequences[u]);
      }
      TokenBatch batch = wrap_with_specials(seqs, enc_cfg.max_len);
      ForwardCache cache;
      Mat hidden = encode(batch, params.encoder, enc_cfg, true, &rng, &cache);
      Mat cls = cls_repr(hidden, batch);

      double loss = 0;
      Mat d_cls = Mat::Zero(cls.rows(), cls.cols());
      ModelGrads grads = ModelGrads::zeros(params);
      const double inv = 1.0 / cfg.batch_size;
      if (numeric) {
        const Vec& w = params.uap.num_w[num_idx];
        for (int r = 0; r < cls.rows(); ++r) {
          double target_z =
              params.stand.z(bundle.attrs.numeric_values[users[r]][num_idx], num_idx);
          double pred = w.dot(cls.row(r).transpose()) + params.uap.num_b[num_idx];
          loss += huber(pred, target_z) * inv;
          double g = huber_grad(pred, target_z) * inv;
          grads.uap.num_w[num_idx] += g * cls.row(r).transpose();
          grads.uap.num_b[num_idx] += g;
          d_cls.row(r) += g * w.transpose();
        }
      } else {
        const Mat& w = params.uap.disc_w[disc_idx];
        for (int r = 0; r < cls.rows(); ++r) {
          int32_t label = bundle.attrs.discrete_values[users[r]][disc_idx];
          Vec logits = w * cls.row(r).transpose() + params.uap.disc_b[disc_idx];
          Vec p = (logits.array() - logits.maxCoeff()).exp();
          p /= p.sum();
          loss += -std::log(std::max(p(label), 1e-300)) * inv;
          Vec d_logits = p * inv;
          d_logits(label) -= inv;
          grads.uap.disc_w[disc_idx] += d_logits * cls.row(r);
          grads.uap.disc_b[disc_idx] += d_logits;
          d_cls.row(r) += (w.transpose() * d_logits).transpose();
        }
      }
      if (!std::isfinite(loss))
        throw DivergenceError("profile fine-tuning diverged at epoch " + std::to_string(epoch));

      Mat d_hidden = Mat::Zero(hidden.rows(), hidden.cols());
      cls_repr_backward(d_cls, batch, d_hidden);
      encoder_backward(d_hidden, cache, params.encoder, enc_cfg, grads.encoder);
      if (cfg.clip_norm > 0) clip_grad_norm(grads, cfg.clip_norm);
      adam_step(params, grads, opt, cfg.learning_rate);
      if (log) {
        json line = {{"phase", "finetune_profile"},
                     {"task", task},
                     {"epoch", epoch},
                     {"iter", iter},
                     {"loss", loss},
                     {"wall_ms", now_ms() - t0}};
        *log << line.dump() << "\n";
      }
    }
  }

  Checkpoint out;
  out.params = std::move(params);
  out.epoch = cfg.num_epochs;
  json meta = {{"phase", "finetune_profile"}, {"task", task}, {"epochs", cfg.num_epochs}};
  out.metadata_json = meta.dump();
  return out;
}

}  // namespace uprec
