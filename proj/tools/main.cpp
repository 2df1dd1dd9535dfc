#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "uprec/checkpoint.hpp"
#include "uprec/dataio.hpp"
#include "uprec/evaluator.hpp"
#include "uprec/serialize.hpp"
#include "uprec/synth.hpp"
#include "uprec/trainer.hpp"

namespace {

using json = nlohmann::json;
using namespace uprec;

std::string iso_utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

uint64_t auto_seed() {
  std::random_device rd;
  return (static_cast<uint64_t>(rd()) << 32) ^ rd();
}

// Every run writes exactly one manifest, on success and on failure alike.
class Manifest {
 public:
  Manifest(const std::string& command, std::string path) : path_(std::move(path)) {
    j_["command"] = command;
    j_["started_utc"] = iso_utc_now();
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }

  void set_config(const json& cfg) { j_["config"] = cfg; }
  void set_seed(uint64_t seed) { j_["seed"] = seed; }
  void set(const std::string& key, const json& v) { j_[key] = v; }

  void add_input(const std::string& file) {
    j_["inputs"][file] = hex64(fnv1a64_file(file));
  }
  void add_output(const std::string& file) { j_["outputs"].push_back(file); }

  void finish() { write("success", ""); }
  void fail(const std::string& message) { write("error", message); }

 private:
  void write(const std::string& status, const std::string& message) {
    j_["status"] = status;
    if (!message.empty()) j_["message"] = message;
    j_["finished_utc"] = iso_utc_now();
    std::filesystem::path p(path_);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path_);
    out << j_.dump(2) << "\n";
  }

  json j_;
  std::string path_;
};

template <typename Fn>
void with_manifest(Manifest& man, Fn&& fn) {
  try {
    fn();
    man.finish();
  } catch (const std::exception& e) {
    man.fail(e.what());
    throw;
  }
}

void print_stats(const DatasetBundle& b) {
  std::cout << "#Users: " << b.ds.n_users() << "  #Items: " << b.ds.n_items()
            << "  #Rels: " << b.graph.n_edges() << "  #Interactions: " << b.ds.n_interactions()
            << "\n";
}

json stats_json(const DatasetBundle& b) {
  return json{{"n_users", b.ds.n_users()},
              {"n_items", b.ds.n_items()},
              {"n_rels", b.graph.n_edges()},
              {"n_interactions", b.ds.n_interactions()}};
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path);
}

DatasetBundle load_bundle(const std::string& path) {
  require_file(path);
  return load_dataset(path);
}

// Schema and vocabulary compatibility between a checkpoint and a dataset.
void check_compat(const Checkpoint& ckpt, const DatasetBundle& b) {
  if (ckpt.params.enc_cfg.vocab_size != b.ds.vocab_size())
    throw DataError("checkpoint vocabulary size " +
                    std::to_string(ckpt.params.enc_cfg.vocab_size) + " does not match dataset " +
                    std::to_string(b.ds.vocab_size()));
  if (ckpt.params.schema.numeric_names != b.schema.numeric_names ||
      ckpt.params.schema.discrete_names != b.schema.discrete_names)
    throw DataError("checkpoint attribute schema does not match dataset");
}

std::string ablation_name(double lambda2, double lambda3) {
  if (lambda2 == 0 && lambda3 == 0) return "w/o All";
  if (lambda3 == 0) return "w/o Rel";
  if (lambda2 == 0) return "w/o Pro";
  return "full";
}

// Collected configuration problems are reported together as one usage error.
void report_all(const std::vector<std::string>& errs) {
  if (errs.empty()) return;
  std::string msg;
  for (const auto& e : errs) msg += (msg.empty() ? "" : "\n") + e;
  throw CLI::ValidationError(msg);
}

struct PreprocessArgs {
  std::string format;
  std::string reviews, users_file;
  std::string interactions, edges_file, attributes_file;
  std::string cutoff;
  int kcore = 5;
  double eval_user_fraction = 0.1;
  double eval_edge_fraction = 0.1;
  uint64_t seed = 0;
  std::string out;
};

void run_preprocess(const PreprocessArgs& a) {
  std::vector<std::string> errs;
  if (a.format == "yelp") {
    if (a.reviews.empty()) errs.push_back("--reviews is required for --format yelp");
    if (a.users_file.empty()) errs.push_back("--users is required for --format yelp");
  } else {
    if (a.interactions.empty()) errs.push_back("--interactions is required for --format tsv");
  }
  if (a.kcore < 1) errs.push_back("--kcore must be at least 1");
  if (a.eval_user_fraction < 0 || a.eval_user_fraction >= 1)
    errs.push_back("--eval-user-fraction must lie in [0,1)");
  if (a.eval_edge_fraction < 0 || a.eval_edge_fraction >= 1)
    errs.push_back("--eval-edge-fraction must lie in [0,1)");
  report_all(errs);

  Manifest man("preprocess", a.out + ".manifest.json");
  man.set_seed(a.seed);
  man.set_config(json{{"format", a.format},
                      {"cutoff", a.cutoff},
                      {"kcore", a.kcore},
                      {"eval_user_fraction", a.eval_user_fraction},
                      {"eval_edge_fraction", a.eval_edge_fraction}});
  with_manifest(man, [&] {
    std::vector<RawRecord> records;
    std::vector<std::pair<std::string, std::string>> edges;
    RawAttributes attrs;
    uint64_t skipped = 0;
    if (a.format == "yelp") {
      require_file(a.reviews);
      require_file(a.users_file);
      man.add_input(a.reviews);
      man.add_input(a.users_file);
      YelpLoadResult y = load_yelp(a.reviews, a.users_file);
      records = std::move(y.records);
      edges = std::move(y.edges);
      attrs = std::move(y.attrs);
      skipped = y.skipped_reviews + y.skipped_users;
    } else {
      require_file(a.interactions);
      man.add_input(a.interactions);
      records = load_interactions_tsv(a.interactions, &skipped);
      if (!a.edges_file.empty()) {
        require_file(a.edges_file);
        man.add_input(a.edges_file);
        edges = load_edges_tsv(a.edges_file, &skipped);
      }
      if (!a.attributes_file.empty()) {
        require_file(a.attributes_file);
        man.add_input(a.attributes_file);
        attrs = load_attributes_tsv(a.attributes_file, &skipped);
      }
    }
    if (!a.cutoff.empty()) {
      int64_t cut = parse_date(a.cutoff);
      records.erase(std::remove_if(records.begin(), records.end(),
                                   [&](const RawRecord& r) { return r.timestamp < cut; }),
                    records.end());
    }
    records = kcore_filter(std::move(records), a.kcore);
    auto eval_users = partition_eval_users(records, a.eval_user_fraction, a.seed);

    DatasetBundle b;
    b.ds = build_dataset(records, std::nullopt, eval_users);
    b.graph = build_graph(edges, b.ds);
    build_attributes(attrs, b.ds, b.schema, b.attrs);
    b.split = split_leave_one_out(b.ds);
    b.is_eval_edge = partition_eval_edges(b.graph, a.eval_edge_fraction, a.seed);
    save_dataset(a.out, b);

    print_stats(b);
    man.set("stats", stats_json(b));
    man.set("skipped_lines", skipped);
    man.add_output(a.out);
  });
}

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  Manifest man("synth", a.out + ".manifest.json");
  man.set_seed(a.cfg.seed);
  man.set_config(json{{"n_users", a.cfg.n_users},
                      {"n_items", a.cfg.n_items},
                      {"n_clusters", a.cfg.n_clusters},
                      {"seq_len_min", a.cfg.seq_len_min},
                      {"seq_len_max", a.cfg.seq_len_max},
                      {"intra_cluster_item_prob", a.cfg.intra_cluster_item_prob},
                      {"friend_intra_prob", a.cfg.friend_intra_prob},
                      {"attribute_noise", a.cfg.attribute_noise},
                      {"avg_degree", a.cfg.avg_degree},
                      {"homophily_pool", a.cfg.homophily_pool},
                      {"eval_user_fraction", a.cfg.eval_user_fraction},
                      {"eval_edge_fraction", a.cfg.eval_edge_fraction}});
  with_manifest(man, [&] {
    SynthData sd = generate_synth(a.cfg);
    save_dataset(a.out, sd.bundle);
    print_stats(sd.bundle);
    man.set("stats", stats_json(sd.bundle));
    man.add_output(a.out);
  });
}

struct PretrainArgs {
  std::string data, out, resume;
  EncoderConfig enc;
  PretrainConfig cfg;
};

void run_pretrain(const PretrainArgs& a) {
  std::vector<std::string> errs;
  if (a.cfg.lambda1 < 0 || a.cfg.lambda2 < 0 || a.cfg.lambda3 < 0)
    errs.push_back("task weights must be non-negative");
  if (a.cfg.learning_rate <= 0) errs.push_back("--lr must be positive");
  if (a.cfg.batch_size < 1) errs.push_back("--batch-size must be at least 1");
  if (a.cfg.iterations_per_epoch < 1) errs.push_back("--iters-per-epoch must be at least 1");
  if (a.cfg.num_epochs < 0) errs.push_back("--epochs must be non-negative");
  if (a.cfg.checkpoint_every < 1) errs.push_back("--checkpoint-every must be at least 1");
  if (a.cfg.mask_proportion <= 0 || a.cfg.mask_proportion >= 1)
    errs.push_back("--mask-prob must lie in (0,1)");
  if (a.enc.num_layers < 1) errs.push_back("--layers must be at least 1");
  if (a.enc.hidden_dim < 1 || a.enc.num_heads < 1 ||
      a.enc.hidden_dim % std::max(a.enc.num_heads, 1) != 0)
    errs.push_back("--hidden must be a positive multiple of --heads");
  if (a.enc.max_len < 3) errs.push_back("--max-len must be at least 3");
  if (a.enc.dropout_rate < 0 || a.enc.dropout_rate >= 1)
    errs.push_back("--dropout must lie in [0,1)");
  report_all(errs);

  Manifest man("pretrain", a.out + "/manifest.json");
  man.set_seed(a.cfg.seed);
  man.set("ablation", ablation_name(a.cfg.enable_uap ? a.cfg.lambda2 : 0.0,
                                    a.cfg.enable_srd ? a.cfg.lambda3 : 0.0));
  man.set_config(json{{"lambda1", a.cfg.lambda1},
                      {"lambda2", a.cfg.lambda2},
                      {"lambda3", a.cfg.lambda3},
                      {"learning_rate", a.cfg.learning_rate},
                      {"batch_size", a.cfg.batch_size},
                      {"iterations_per_epoch", a.cfg.iterations_per_epoch},
                      {"num_epochs", a.cfg.num_epochs},
                      {"checkpoint_every", a.cfg.checkpoint_every},
                      {"mask_proportion", a.cfg.mask_proportion},
                      {"enable_uap", a.cfg.enable_uap},
                      {"enable_srd", a.cfg.enable_srd},
                      {"srd_masked_inputs", a.cfg.srd_masked_inputs},
                      {"clip_norm", a.cfg.clip_norm},
                      {"layers", a.enc.num_layers},
                      {"heads", a.enc.num_heads},
                      {"hidden", a.enc.hidden_dim},
                      {"max_len", a.enc.max_len},
                      {"dropout", a.enc.dropout_rate}});
  with_manifest(man, [&] {
    DatasetBundle b = load_bundle(a.data);
    man.add_input(a.data);
    if (!a.resume.empty()) {
      require_file(a.resume);
      man.add_input(a.resume);
    }
    EncoderConfig enc = a.enc;
    enc.vocab_size = b.ds.vocab_size();
    std::filesystem::create_directories(a.out);
    std::ofstream log(a.out + "/train_log.jsonl");
    PretrainResult res = pretrain(b, enc, a.cfg, a.out, &log, a.resume);
    for (const auto& p : res.checkpoint_paths) man.add_output(p);
    man.set("final_checkpoint", res.final_checkpoint);
    man.set("epoch_mean_loss", res.epoch_mean_loss);
    man.add_output(a.out + "/train_log.jsonl");
    std::cout << json{{"final_checkpoint", res.final_checkpoint},
                      {"epochs", a.cfg.num_epochs},
                      {"final_mean_loss",
                       res.epoch_mean_loss.empty() ? 0.0 : res.epoch_mean_loss.back()}}
                     .dump()
              << "\n";
  });
}

struct FinetuneArgs {
  std::string task = "seqrec";
  std::string attribute;
  std::string data, from, out;
  FinetuneConfig cfg;
};

void run_finetune(const FinetuneArgs& a) {
  std::vector<std::string> errs;
  if (a.task == "profile" && a.attribute.empty())
    errs.push_back("--attribute is required for --task profile");
  if (a.cfg.learning_rate <= 0) errs.push_back("--lr must be positive");
  if (a.cfg.batch_size < 1) errs.push_back("--batch-size must be at least 1");
  if (a.cfg.iterations_per_epoch < 1) errs.push_back("--iters-per-epoch must be at least 1");
  if (a.cfg.num_epochs < 0) errs.push_back("--epochs must be non-negative");
  if (a.cfg.eval_n_neg < 1) errs.push_back("--eval-negatives must be at least 1");
  report_all(errs);

  Manifest man("finetune", a.out + "/manifest.json");
  man.set_seed(a.cfg.seed);
  man.set_config(json{{"task", a.task},
                      {"attribute", a.attribute},
                      {"learning_rate", a.cfg.learning_rate},
                      {"batch_size", a.cfg.batch_size},
                      {"iterations_per_epoch", a.cfg.iterations_per_epoch},
                      {"num_epochs", a.cfg.num_epochs},
                      {"eval_n_neg", a.cfg.eval_n_neg},
                      {"clip_norm", a.cfg.clip_norm}});
  with_manifest(man, [&] {
    DatasetBundle b = load_bundle(a.data);
    man.add_input(a.data);
    require_file(a.from);
    man.add_input(a.from);
    Checkpoint start = load_checkpoint(a.from);
    check_compat(start, b);
    std::filesystem::create_directories(a.out);
    std::ofstream log(a.out + "/train_log.jsonl");
    std::string best_path = a.out + "/best.bin";
    json summary;
    if (a.task == "seqrec") {
      FinetuneResult res = finetune_seqrec(start, b, a.cfg, &log);
      res.best.metadata_json = json{{"phase", "finetune_seqrec"},
                                    {"best_epoch", res.best_epoch},
                                    {"valid_hr1", res.best_hr1}}
                                   .dump();
      save_checkpoint(best_path, res.best);
      summary = json{{"best_epoch", res.best_epoch},
                     {"valid_hr1", res.best_hr1},
                     {"valid_hr1_by_epoch", res.valid_hr1_by_epoch}};
    } else {
      Checkpoint tuned = finetune_profile(start, b, a.attribute, a.cfg, &log);
      save_checkpoint(best_path, tuned);
      ProfileReport rep = eval_profile(tuned.params, b, a.attribute);
      summary = json{{"attribute", a.attribute}, {"n_eval_users", rep.n_users}};
      if (rep.is_numeric)
        summary["eval_mse_z"] = rep.mse_z;
      else
        summary["eval_accuracy"] = rep.accuracy;
    }
    man.add_output(best_path);
    man.add_output(a.out + "/train_log.jsonl");
    man.set("summary", summary);
    summary["best_checkpoint"] = best_path;
    std::cout << summary.dump() << "\n";
  });
}

struct EvaluateArgs {
  std::string task = "seqrec";
  std::string attribute;
  std::string data, checkpoint, report;
  std::string split = "test";
  int negatives = 99;
  uint64_t seed = 0;
};

void run_evaluate(const EvaluateArgs& a) {
  std::vector<std::string> errs;
  if (a.task == "profile" && a.attribute.empty())
    errs.push_back("--attribute is required for --task profile");
  if (a.negatives < 1) errs.push_back("--negatives must be at least 1");
  report_all(errs);

  std::string man_path =
      a.report.empty() ? a.checkpoint + ".eval_manifest.json" : a.report + ".manifest.json";
  Manifest man("evaluate", man_path);
  man.set_seed(a.seed);
  man.set_config(json{{"task", a.task},
                      {"attribute", a.attribute},
                      {"split", a.split},
                      {"negatives", a.negatives}});
  with_manifest(man, [&] {
    DatasetBundle b = load_bundle(a.data);
    man.add_input(a.data);
    require_file(a.checkpoint);
    man.add_input(a.checkpoint);
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    check_compat(ckpt, b);

    json report{{"task", a.task},
                {"data", a.data},
                {"checkpoint", a.checkpoint},
                {"checkpoint_id", checkpoint_id(a.checkpoint)},
                {"seed", a.seed}};
    if (a.task == "seqrec") {
      MetricsReport m = eval_seqrec(ckpt.params, b, a.split == "test", a.negatives, a.seed);
      report["split"] = a.split;
      report["n_negatives"] = a.negatives;
      report["n_trials"] = m.n_trials;
      report["metrics"] = json{{"hr1", m.hr1},       {"hr5", m.hr5},
                               {"hr10", m.hr10},     {"ndcg5", m.ndcg5},
                               {"ndcg10", m.ndcg10}, {"mrr", m.mrr}};
    } else if (a.task == "srd") {
      double acc = eval_srd(ckpt.params, b, a.negatives, a.seed);
      double sim = eval_srd_sim_baseline(b, a.negatives, a.seed);
      report["n_negatives"] = a.negatives;
      report["n_trials"] = b.eval_edges().size();
      report["accuracy"] = acc;
      report["sim_baseline"] = sim;
      report["chance"] = 1.0 / (a.negatives + 1);
    } else {
      ProfileReport p = eval_profile(ckpt.params, b, a.attribute);
      report["attribute"] = a.attribute;
      report["n_users"] = p.n_users;
      if (p.is_numeric) {
        report["mse_z"] = p.mse_z;
        report["mse_raw"] = p.mse_raw;
      } else {
        report["accuracy"] = p.accuracy;
      }
    }
    std::cout << report.dump() << "\n";
    if (!a.report.empty()) {
      std::filesystem::path p(a.report);
      if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
      std::ofstream out(a.report);
      out << report.dump() << "\n";
      if (!out.good()) throw DataError("failed to write " + a.report);
      man.add_output(a.report);
    }
  });
}

struct SweepArgs {
  std::string data, checkpoints, out;
  FinetuneConfig cfg;
  int negatives = 99;
};

void run_sweep(const SweepArgs& a) {
  Manifest man("sweep", a.out + "/manifest.json");
  man.set_seed(a.cfg.seed);
  man.set_config(json{{"learning_rate", a.cfg.learning_rate},
                      {"batch_size", a.cfg.batch_size},
                      {"iterations_per_epoch", a.cfg.iterations_per_epoch},
                      {"num_epochs", a.cfg.num_epochs},
                      {"eval_n_neg", a.cfg.eval_n_neg},
                      {"negatives", a.negatives}});
  with_manifest(man, [&] {
    DatasetBundle b = load_bundle(a.data);
    man.add_input(a.data);

    // Fine-tune every saved pre-training checkpoint and pick by valid HR@1.
    std::regex pat("ckpt_([0-9]+)\\.bin");
    std::vector<std::pair<int, std::string>> ckpts;
    if (!std::filesystem::is_directory(a.checkpoints))
      throw DataError("no such directory: " + a.checkpoints);
    for (const auto& ent : std::filesystem::directory_iterator(a.checkpoints)) {
      std::smatch m;
      std::string name = ent.path().filename().string();
      if (std::regex_match(name, m, pat)) ckpts.emplace_back(std::stoi(m[1]), ent.path().string());
    }
    if (ckpts.empty()) throw DataError("no checkpoints matching ckpt_*.bin in " + a.checkpoints);
    std::sort(ckpts.begin(), ckpts.end());

    std::filesystem::create_directories(a.out);
    std::ofstream rows(a.out + "/sweep.jsonl");
    double best_valid = -1;
    json best_row;
    Checkpoint best_model;
    for (const auto& [epoch, path] : ckpts) {
      man.add_input(path);
      Checkpoint start = load_checkpoint(path);
      check_compat(start, b);
      FinetuneResult res = finetune_seqrec(start, b, a.cfg, nullptr);
      MetricsReport test = eval_seqrec(res.best.params, b, true, a.negatives, a.cfg.seed);
      json row{{"checkpoint", path},
               {"pretrain_epoch", epoch},
               {"finetune_best_epoch", res.best_epoch},
               {"valid_hr1", res.best_hr1},
               {"test_hr10", test.hr10},
               {"test_ndcg10", test.ndcg10},
               {"test_mrr", test.mrr}};
      rows << row.dump() << "\n";
      std::cout << row.dump() << "\n";
      if (res.best_hr1 > best_valid) {
        best_valid = res.best_hr1;
        best_row = row;
        best_model = std::move(res.best);
      }
    }
    std::string best_path = a.out + "/best.bin";
    save_checkpoint(best_path, best_model);
    man.add_output(a.out + "/sweep.jsonl");
    man.add_output(best_path);
    man.set("best", best_row);
    std::cout << json{{"best", best_row}}.dump() << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"User-aware pre-training for sequential recommendation"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker bound (current implementation is single-threaded)")
      ->check(CLI::PositiveNumber);

  uint64_t seed_default = auto_seed();

  PreprocessArgs pp;
  pp.seed = seed_default;
  CLI::App* c_pp = app.add_subcommand("preprocess", "Build a dataset artifact from raw records");
  c_pp->set_config("--config");
  c_pp->add_option("--format", pp.format, "Input format")
      ->required()
      ->check(CLI::IsMember({"yelp", "tsv"}));
  c_pp->add_option("--reviews", pp.reviews, "Review JSONL (yelp format)");
  c_pp->add_option("--users", pp.users_file, "User JSONL with friends and attributes (yelp)");
  c_pp->add_option("--interactions", pp.interactions, "user<TAB>item<TAB>timestamp file (tsv)");
  c_pp->add_option("--edges", pp.edges_file, "user<TAB>user relation file (tsv)");
  c_pp->add_option("--attributes", pp.attributes_file, "Attribute table file (tsv)");
  c_pp->add_option("--cutoff", pp.cutoff, "Drop records before this date (YYYY-MM-DD)");
  c_pp->add_option("--kcore", pp.kcore, "Iterative k-core threshold")->capture_default_str();
  c_pp->add_option("--eval-user-fraction", pp.eval_user_fraction,
                   "Held-out user fraction for profile/relation eval")->capture_default_str();
  c_pp->add_option("--eval-edge-fraction", pp.eval_edge_fraction,
                   "Held-out edge fraction for relation eval")->capture_default_str();
  c_pp->add_option("--seed", pp.seed, "Partition seed (auto-chosen and recorded if omitted)");
  c_pp->add_option("--out", pp.out, "Output dataset artifact")->required();

  SynthArgs sy;
  sy.cfg.seed = seed_default;
  CLI::App* c_sy = app.add_subcommand("synth", "Generate a clustered synthetic dataset");
  c_sy->set_config("--config");
  c_sy->add_option("--users", sy.cfg.n_users, "Number of users")->capture_default_str();
  c_sy->add_option("--items", sy.cfg.n_items, "Number of items")->capture_default_str();
  c_sy->add_option("--clusters", sy.cfg.n_clusters, "Number of interest clusters")->capture_default_str();
  c_sy->add_option("--seq-min", sy.cfg.seq_len_min, "Minimum sequence length")->capture_default_str();
  c_sy->add_option("--seq-max", sy.cfg.seq_len_max, "Maximum sequence length")->capture_default_str();
  c_sy->add_option("--intra-item-prob", sy.cfg.intra_cluster_item_prob,
                   "P(item from own cluster)")->capture_default_str();
  c_sy->add_option("--friend-intra-prob", sy.cfg.friend_intra_prob,
                   "P(friendship within cluster)")->capture_default_str();
  c_sy->add_option("--attr-noise", sy.cfg.attribute_noise, "Attribute corruption rate")->capture_default_str();
  c_sy->add_option("--avg-degree", sy.cfg.avg_degree, "Mean friends per user")->capture_default_str();
  c_sy->add_option("--homophily-pool", sy.cfg.homophily_pool,
                   "Candidates considered per intra-cluster friendship")->capture_default_str();
  c_sy->add_option("--eval-user-fraction", sy.cfg.eval_user_fraction, "Held-out user fraction")
      ->capture_default_str();
  c_sy->add_option("--eval-edge-fraction", sy.cfg.eval_edge_fraction, "Held-out edge fraction")
      ->capture_default_str();
  c_sy->add_option("--seed", sy.cfg.seed, "Generator seed (auto-chosen and recorded if omitted)");
  c_sy->add_option("--out", sy.out, "Output dataset artifact")->required();

  PretrainArgs pt;
  pt.cfg.seed = seed_default;
  CLI::App* c_pt = app.add_subcommand("pretrain", "Jointly pre-train on a dataset artifact");
  c_pt->set_config("--config");
  c_pt->add_option("--data", pt.data, "Dataset artifact")->required();
  c_pt->add_option("--out", pt.out, "Output directory")->required();
  c_pt->add_option("--resume", pt.resume, "Checkpoint to resume from");
  c_pt->add_option("--layers", pt.enc.num_layers, "Transformer layers")->capture_default_str();
  c_pt->add_option("--heads", pt.enc.num_heads, "Attention heads")->capture_default_str();
  c_pt->add_option("--hidden", pt.enc.hidden_dim, "Hidden dimension")->capture_default_str();
  c_pt->add_option("--max-len", pt.enc.max_len, "Maximum wrapped sequence length")->capture_default_str();
  c_pt->add_option("--dropout", pt.enc.dropout_rate, "Dropout rate")->capture_default_str();
  c_pt->add_option("--lambda1", pt.cfg.lambda1, "Mask-item task weight")->capture_default_str();
  c_pt->add_option("--lambda2", pt.cfg.lambda2, "Attribute task weight")->capture_default_str();
  c_pt->add_option("--lambda3", pt.cfg.lambda3, "Relation task weight")->capture_default_str();
  c_pt->add_option("--lr", pt.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  c_pt->add_option("--batch-size", pt.cfg.batch_size, "Sequences per step")->capture_default_str();
  c_pt->add_option("--iters-per-epoch", pt.cfg.iterations_per_epoch, "Steps per epoch")->capture_default_str();
  c_pt->add_option("--epochs", pt.cfg.num_epochs, "Training epochs")->capture_default_str();
  c_pt->add_option("--checkpoint-every", pt.cfg.checkpoint_every, "Checkpoint interval")->capture_default_str();
  c_pt->add_option("--mask-prob", pt.cfg.mask_proportion, "Masking proportion")->capture_default_str();
  c_pt->add_option("--clip-norm", pt.cfg.clip_norm, "Gradient clip norm (0 disables)")->capture_default_str();
  c_pt->add_flag("--no-uap", [&pt](int64_t) { pt.cfg.enable_uap = false; },
                 "Disable the attribute task");
  c_pt->add_flag("--no-srd", [&pt](int64_t) { pt.cfg.enable_srd = false; },
                 "Disable the relation task");
  c_pt->add_flag("--srd-unmasked", [&pt](int64_t) { pt.cfg.srd_masked_inputs = false; },
                 "Feed unmasked sequences to the relation task");
  c_pt->add_option("--seed", pt.cfg.seed, "Training seed (auto-chosen and recorded if omitted)");

  FinetuneArgs ft;
  ft.cfg.seed = seed_default;
  CLI::App* c_ft = app.add_subcommand("finetune", "Fine-tune a pre-trained checkpoint");
  c_ft->set_config("--config");
  c_ft->add_option("--task", ft.task, "Target task")->capture_default_str()
      ->check(CLI::IsMember({"seqrec", "profile"}));
  c_ft->add_option("--attribute", ft.attribute, "Attribute name for --task profile");
  c_ft->add_option("--data", ft.data, "Dataset artifact")->required();
  c_ft->add_option("--from", ft.from, "Starting checkpoint")->required();
  c_ft->add_option("--out", ft.out, "Output directory")->required();
  c_ft->add_option("--lr", ft.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  c_ft->add_option("--batch-size", ft.cfg.batch_size, "Sequences per step")->capture_default_str();
  c_ft->add_option("--iters-per-epoch", ft.cfg.iterations_per_epoch, "Steps per epoch")->capture_default_str();
  c_ft->add_option("--epochs", ft.cfg.num_epochs, "Fine-tuning epochs")->capture_default_str();
  c_ft->add_option("--eval-negatives", ft.cfg.eval_n_neg, "Negatives per validation trial")->capture_default_str();
  c_ft->add_option("--clip-norm", ft.cfg.clip_norm, "Gradient clip norm (0 disables)")->capture_default_str();
  c_ft->add_option("--seed", ft.cfg.seed, "Training seed (auto-chosen and recorded if omitted)");

  EvaluateArgs ev;
  ev.seed = seed_default;
  CLI::App* c_ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  c_ev->set_config("--config");
  c_ev->add_option("--task", ev.task, "Evaluation task")->capture_default_str()
      ->check(CLI::IsMember({"seqrec", "srd", "profile"}));
  c_ev->add_option("--attribute", ev.attribute, "Attribute name for --task profile");
  c_ev->add_option("--data", ev.data, "Dataset artifact")->required();
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate")->required();
  c_ev->add_option("--split", ev.split, "Targets to rank (seqrec)")->capture_default_str()
      ->check(CLI::IsMember({"valid", "test"}));
  c_ev->add_option("--negatives", ev.negatives, "Sampled negatives per trial")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "Sampling seed (auto-chosen and recorded if omitted)");
  c_ev->add_option("--report", ev.report, "Write the JSON report here as well as stdout");

  SweepArgs sw;
  sw.cfg.seed = seed_default;
  CLI::App* c_sw = app.add_subcommand(
      "sweep", "Fine-tune every pre-training checkpoint and pick by valid HR@1");
  c_sw->set_config("--config");
  c_sw->add_option("--data", sw.data, "Dataset artifact")->required();
  c_sw->add_option("--checkpoints", sw.checkpoints, "Directory holding ckpt_*.bin")->required();
  c_sw->add_option("--out", sw.out, "Output directory")->required();
  c_sw->add_option("--lr", sw.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  c_sw->add_option("--batch-size", sw.cfg.batch_size, "Sequences per step")->capture_default_str();
  c_sw->add_option("--iters-per-epoch", sw.cfg.iterations_per_epoch, "Steps per epoch")->capture_default_str();
  c_sw->add_option("--epochs", sw.cfg.num_epochs, "Fine-tuning epochs per checkpoint")->capture_default_str();
  c_sw->add_option("--eval-negatives", sw.cfg.eval_n_neg, "Negatives per validation trial")->capture_default_str();
  c_sw->add_option("--negatives", sw.negatives, "Negatives for the final test metrics")->capture_default_str();
  c_sw->add_option("--seed", sw.cfg.seed, "Seed (auto-chosen and recorded if omitted)");

  try {
    app.parse(argc, argv);
    if (*c_pp) run_preprocess(pp);
    if (*c_sy) run_synth(sy);
    if (*c_pt) run_pretrain(pt);
    if (*c_ft) run_finetune(ft);
    if (*c_ev) run_evaluate(ev);
    if (*c_sw) run_sweep(sw);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
