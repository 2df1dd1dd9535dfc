#include <doctest.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "uprec/data.hpp"
#include "uprec/serialize.hpp"

using namespace uprec;
using json = nlohmann::json;

namespace {

struct TempDir {
  std::string path;
  TempDir() {
    char buf[] = "/tmp/uprec_cli_XXXXXX";
    REQUIRE(mkdtemp(buf) != nullptr);
    path = buf;
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string cli_path() {
  const char* p = std::getenv("UPREC_CLI_PATH");
  REQUIRE(p != nullptr);
  return p;
}

std::string fixture_dir() {
  const char* p = std::getenv("UPREC_FIXTURE_DIR");
  REQUIRE(p != nullptr);
  return p;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  std::string base = "/tmp/uprec_cli_io_" + std::to_string(getpid()) + "_" +
                     std::to_string(counter++);
  std::string cmd = cli_path() + " " + args + " > " + base + ".out 2> " + base + ".err";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  for (const char* ext : {".out", ".err"}) {
    std::ifstream in(base + ext);
    std::stringstream ss;
    ss << in.rdbuf();
    (ext[1] == 'o' ? r.out : r.err) = ss.str();
    std::filesystem::remove(base + ext);
  }
  return r;
}

std::string synth_args(const std::string& out, uint64_t seed) {
  return "synth --users 120 --items 60 --clusters 6 --seq-min 8 --seq-max 12 --seed " +
         std::to_string(seed) + " --out " + out;
}

}  // namespace

TEST_CASE("synth command emits artifact, stats line, and manifest") {
  TempDir dir;
  std::string data = dir.path + "/data.bin";
  RunResult r = run_cli(synth_args(data, 5));
  REQUIRE(r.exit_code == 0);
  CHECK(std::filesystem::exists(data));
  CHECK(r.out.find("#Users: ") != std::string::npos);
  CHECK(r.out.find("#Items: ") != std::string::npos);
  CHECK(r.out.find("#Rels: ") != std::string::npos);
  CHECK(r.out.find("#Interactions: ") != std::string::npos);

  std::ifstream min(data + ".manifest.json");
  REQUIRE(min.good());
  json man = json::parse(min);
  CHECK(man["command"] == "synth");
  CHECK(man["status"] == "success");
  CHECK(man["seed"] == 5);
  CHECK(man["outputs"][0] == data);
  CHECK(!man["started_utc"].get<std::string>().empty());

  // The artifact loads and is internally consistent.
  DatasetBundle b = load_dataset(data);
  CHECK(b.ds.n_users() > 0);
  CHECK(b.graph.n_edges() > 0);

  SUBCASE("same seed reproduces the artifact byte for byte") {
    std::string again = dir.path + "/again.bin";
    REQUIRE(run_cli(synth_args(again, 5)).exit_code == 0);
    CHECK(fnv1a64_file(data) == fnv1a64_file(again));
  }
}

TEST_CASE("preprocess command on the committed fixture") {
  TempDir dir;
  std::string data = dir.path + "/yelp.bin";
  std::string args = "preprocess --format yelp --reviews " + fixture_dir() +
                     "/yelp_reviews.jsonl --users " + fixture_dir() +
                     "/yelp_users.jsonl --kcore 5 --seed 9 --out " + data;
  RunResult r = run_cli(args);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("#Users: ") != std::string::npos);
  DatasetBundle b = load_dataset(data);
  CHECK(b.ds.n_users() > 0);

  SUBCASE("rerun produces an identical artifact") {
    std::string again = dir.path + "/again.bin";
    std::string args2 = "preprocess --format yelp --reviews " + fixture_dir() +
                        "/yelp_reviews.jsonl --users " + fixture_dir() +
                        "/yelp_users.jsonl --kcore 5 --seed 9 --out " + again;
    REQUIRE(run_cli(args2).exit_code == 0);
    CHECK(fnv1a64_file(data) == fnv1a64_file(again));
  }

  SUBCASE("missing input exits 2 and names the path") {
    RunResult bad = run_cli("preprocess --format yelp --reviews /nope/gone.jsonl --users " +
                            fixture_dir() + "/yelp_users.jsonl --out " + dir.path + "/x.bin");
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("/nope/gone.jsonl") != std::string::npos);
  }
}

TEST_CASE("usage errors exit 1") {
  TempDir dir;
  SUBCASE("unknown flag") {
    RunResult r = run_cli("synth --definitely-not-a-flag 3 --out " + dir.path + "/x.bin");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("--definitely-not-a-flag") != std::string::npos);
  }
  SUBCASE("missing subcommand") {
    CHECK(run_cli("").exit_code == 1);
  }
  SUBCASE("config validation problems are reported together") {
    RunResult r = run_cli("pretrain --data " + dir.path + "/missing.bin --out " + dir.path +
                          "/o --lr -1 --batch-size 0");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("--lr") != std::string::npos);
    CHECK(r.err.find("--batch-size") != std::string::npos);
  }
  SUBCASE("help exits 0") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("pretrain --help").exit_code == 0);
  }
}

TEST_CASE("pretrain, finetune, evaluate round trip") {
  TempDir dir;
  std::string data = dir.path + "/data.bin";
  REQUIRE(run_cli(synth_args(data, 11)).exit_code == 0);

  std::string common = " --layers 1 --heads 2 --hidden 16 --max-len 14 --dropout 0.1"
                       " --epochs 2 --iters-per-epoch 3 --batch-size 8 --checkpoint-every 1"
                       " --seed 3";
  RunResult pre = run_cli("pretrain --data " + data + " --out " + dir.path + "/pre" + common);
  REQUIRE(pre.exit_code == 0);
  CHECK(std::filesystem::exists(dir.path + "/pre/ckpt_2.bin"));
  CHECK(std::filesystem::exists(dir.path + "/pre/train_log.jsonl"));

  // Every training log line parses as JSON.
  std::ifstream log(dir.path + "/pre/train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    json j = json::parse(line);
    CHECK(j.contains("l_total"));
    ++lines;
  }
  CHECK(lines == 6);

  json man = json::parse(std::ifstream(dir.path + "/pre/manifest.json"));
  CHECK(man["ablation"] == "full");
  CHECK(man["inputs"].size() == 1);

  SUBCASE("ablated run is named in the manifest and matches MIP-only") {
    RunResult ab = run_cli("pretrain --data " + data + " --out " + dir.path +
                           "/ablate --lambda2 0 --lambda3 0" + common);
    REQUIRE(ab.exit_code == 0);
    json aman = json::parse(std::ifstream(dir.path + "/ablate/manifest.json"));
    CHECK(aman["ablation"] == "w/o All");
  }

  SUBCASE("finetune then evaluate yields a full metrics report") {
    RunResult ft = run_cli("finetune --task seqrec --data " + data + " --from " + dir.path +
                           "/pre/ckpt_2.bin --out " + dir.path +
                           "/ft --epochs 1 --iters-per-epoch 3 --batch-size 8"
                           " --eval-negatives 15 --seed 4");
    REQUIRE(ft.exit_code == 0);
    REQUIRE(std::filesystem::exists(dir.path + "/ft/best.bin"));

    std::string report = dir.path + "/report.json";
    RunResult ev = run_cli("evaluate --task seqrec --data " + data + " --checkpoint " +
                           dir.path + "/ft/best.bin --split test --negatives 15 --seed 4"
                           " --report " + report);
    REQUIRE(ev.exit_code == 0);
    json rep = json::parse(std::ifstream(report));
    for (const char* k : {"hr1", "hr5", "hr10", "ndcg5", "ndcg10", "mrr"}) {
      REQUIRE(rep["metrics"].contains(k));
      double v = rep["metrics"][k].get<double>();
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(rep["n_trials"].get<int>() > 0);
    CHECK(rep["checkpoint_id"].get<std::string>().size() == 16);
    // Stdout carries the same single-line record.
    CHECK(ev.out.find("\"checkpoint_id\"") != std::string::npos);
  }

  SUBCASE("srd and profile evaluation run from a pretrain checkpoint") {
    RunResult srd = run_cli("evaluate --task srd --data " + data + " --checkpoint " + dir.path +
                            "/pre/ckpt_2.bin --negatives 20 --seed 5");
    REQUIRE(srd.exit_code == 0);
    json s = json::parse(srd.out);
    CHECK(s["accuracy"].get<double>() >= 0.0);
    CHECK(s["sim_baseline"].get<double>() >= 0.0);
    CHECK(s["chance"].get<double>() == doctest::Approx(1.0 / 21));

    RunResult prof = run_cli("evaluate --task profile --attribute group --data " + data +
                             " --checkpoint " + dir.path + "/pre/ckpt_2.bin --seed 5");
    REQUIRE(prof.exit_code == 0);
    json p = json::parse(prof.out);
    CHECK(p["accuracy"].get<double>() >= 0.0);
    CHECK(p["n_users"].get<int>() > 0);
  }

  SUBCASE("sweep fine-tunes every checkpoint and picks a winner") {
    RunResult sw = run_cli("sweep --data " + data + " --checkpoints " + dir.path +
                           "/pre --out " + dir.path +
                           "/sweep --epochs 1 --iters-per-epoch 2 --batch-size 8"
                           " --eval-negatives 15 --negatives 15 --seed 6");
    REQUIRE(sw.exit_code == 0);
    CHECK(std::filesystem::exists(dir.path + "/sweep/best.bin"));
    std::ifstream rows(dir.path + "/sweep/sweep.jsonl");
    int n = 0;
    while (std::getline(rows, line)) {
      json j = json::parse(line);
      CHECK(j.contains("valid_hr1"));
      CHECK(j.contains("test_ndcg10"));
      ++n;
    }
    CHECK(n == 2);  // ckpt_1 and ckpt_2
  }

  SUBCASE("evaluate with a mismatched dataset exits 2") {
    std::string other = dir.path + "/other.bin";
    REQUIRE(run_cli("synth --users 80 --items 40 --clusters 4 --seq-min 6 --seq-max 10"
                    " --seed 12 --out " + other).exit_code == 0);
    RunResult ev = run_cli("evaluate --task seqrec --data " + other + " --checkpoint " +
                           dir.path + "/pre/ckpt_2.bin --negatives 10 --seed 1");
    CHECK(ev.exit_code == 2);
  }
}
