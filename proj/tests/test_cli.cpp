#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "json.hpp"
#include "test_util.hpp"
#include "tkgd/cli.hpp"
#include "tkgd/config.hpp"
#include "tkgd/models.hpp"

using namespace tkgd;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "tkgd");
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string field(const std::string& text, const std::string& key) {
  const auto at = text.find(key + "=");
  if (at == std::string::npos) return {};
  const auto start = at + key.size() + 1;
  return text.substr(start, text.find_first_of(" \n", start) - start);
}

std::string without_timestamp(const fs::path& metrics) {
  auto j = nlohmann::ordered_json::parse(testutil::read_file(metrics));
  j.erase("timestamp");
  return j.dump();
}

struct Workspace {
  testutil::TempDir tmp;
  fs::path data = tmp.path() / "data";
  fs::path runs = tmp.path() / "runs";
  std::string teacher;
  std::string synth_out;

  Workspace() {
    const auto r = run({"synth-data", "--dir", data.string(), "--synth-entities", "30", "--synth-relations", "2",
                        "--synth-times", "4", "--synth-clusters", "3", "--synth-facts-per-slot", "6"});
    REQUIRE(r.code == 0);
    synth_out = r.out;
    const auto t = run({"train-teacher", "--dir", data.string(), "--out", runs.string(), "--teacher-dim", "6",
                        "--teacher-epochs", "2", "--batch-size", "32"});
    REQUIRE_MESSAGE(t.code == 0, t.err);
    teacher = (fs::path(field(t.out, "run_dir")) / "teacher.ckpt").string();
  }

  std::vector<std::string> distill_args(std::vector<std::string> extra) const {
    std::vector<std::string> a = {"distill",       "--dir",         data.string(), "--out",     runs.string(),
                                  "--teacher",     teacher,         "--student-dim", "3",       "--batch-size",
                                  "32",            "--epochs",      "2",         "--provider", "stub:8"};
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"transmogrify"}).code == kExitUsage);
  const auto r = run({"distill", "--no-such-flag", "1"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.starts_with("usage error: "));
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  CHECK(run({"evaluate", "--workers"}).code == kExitUsage);
}

TEST_CASE("config conflicts exit 3") {
  testutil::TempDir tmp;
  const auto r = run({"distill", "--epochs", "10", "--stage1-epochs", "3", "--stage2-epochs", "3", "--teacher", "x"});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.starts_with("validation error: "));
  CHECK(run({"distill", "--alpha", "2", "--teacher", "x"}).code == kExitValidation);
  CHECK(run({"distill", "--lr", "fast", "--teacher", "x"}).code == kExitValidation);
  CHECK(run({"distill", "--epochs", "20000", "--teacher", "x"}).code == kExitValidation);
  CHECK(run({"distill", "--method", "teacherless", "--teacher", "x"}).code == kExitValidation);
  CHECK(run({"distill", "--dir", tmp.path().string()}).code == kExitValidation);
  CHECK(run({"evaluate", "--split", "train"}).code == kExitValidation);
  testutil::write_file(tmp.path() / "bad.cfg", "alpah=0.3\n");
  CHECK(run({"distill", "--config", (tmp.path() / "bad.cfg").string()}).code == kExitValidation);
}

TEST_CASE("runtime failures exit 1") {
  testutil::TempDir tmp;
  const auto r = run({"ingest", "--dir", (tmp.path() / "nowhere").string(), "--out", tmp.path().string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.starts_with("error: "));
}

TEST_CASE("help lists every flag with its default") {
  const auto top = run({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"ingest", "train-teacher", "distill", "evaluate", "synth-data"})
    CHECK(top.out.find(sub) != std::string::npos);

  const auto h = run({"distill", "--help"});
  CHECK(h.code == 0);
  for (const auto& key : {"alpha", "beta", "temperature", "stage1-epochs", "student-dim", "provider", "method",
                          "batch-size", "config"})
    CHECK_MESSAGE(h.out.find(std::string("--") + key) != std::string::npos, key);
  CHECK(h.out.find("1024") != std::string::npos);
  CHECK(h.out.find("ours") != std::string::npos);
  CHECK(h.out.find("0.5") != std::string::npos);

  for (const char* sub : {"ingest", "train-teacher", "evaluate", "synth-data"}) {
    const auto s = run({sub, "--help"});
    CHECK(s.code == 0);
    CHECK(s.out.find("--config") != std::string::npos);
  }
  CHECK(run({"train-teacher", "--help"}).out.find("400") != std::string::npos);
}

TEST_CASE("config files and flags") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.path() / "run.cfg", "# comment\nalpha = 0.25\nseed=9\n");
  RunConfig cfg;
  cfg.merge_file(tmp.path() / "run.cfg");
  CHECK(cfg.real("alpha") == 0.25);
  CHECK(cfg.integer("seed") == 9);
  CHECK(cfg.real("beta") == 0.1);
  cfg.set("seed", "10");
  CHECK(cfg.integer("seed") == 10);
  CHECK(cfg.dump().find("alpha=0.25\n") != std::string::npos);
  RunConfig other;
  CHECK(other.hash() != cfg.hash());
  CHECK(other.hash().size() == 16);
  CHECK_THROWS_AS(cfg.set("nope", "1"), ConfigError);
  RunConfig stages;
  stages.set("epochs", "7");
  CHECK(stages.distill().stage1_epochs == 3);
  CHECK(stages.distill().stage2_epochs == 4);
  stages.set("stage2_epochs", "1");
  CHECK(stages.distill().stage1_epochs == 6);
  CHECK(stages.distill().stage2_epochs == 1);
}

TEST_CASE("synthetic pipeline") {
  Workspace ws;
  CHECK(fs::exists(ws.data / "train.txt"));
  CHECK(fs::exists(ws.data / "synth_config.txt"));
  REQUIRE(fs::exists(ws.teacher));
  const fs::path teacher_dir = fs::path(ws.teacher).parent_path();
  for (const char* f : {"config.txt", "train_log.jsonl", "metrics.json", "metrics_raw.json", "metrics.csv"})
    CHECK_MESSAGE(fs::exists(teacher_dir / f), f);
  CHECK(fs::path(teacher_dir).filename().string().starts_with("train-teacher-"));

  SUBCASE("no epochs keeps the initial student") {
    const auto r = run(ws.distill_args({"--method", "none", "--epochs", "0"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const fs::path dir = field(r.out, "run_dir");
    CHECK(testutil::read_file(dir / "student.ckpt") == testutil::read_file(dir / "student_init.ckpt"));
    CHECK(testutil::read_file(dir / "train_log.jsonl").empty());
  }

  SUBCASE("training log records") {
    const auto r = run(ws.distill_args({"--method", "ours", "--epochs", "3", "--valid-every", "2"}));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const fs::path dir = field(r.out, "run_dir");
    std::istringstream log(testutil::read_file(dir / "train_log.jsonl"));
    std::string line;
    std::vector<nlohmann::json> recs;
    while (std::getline(log, line)) recs.push_back(nlohmann::json::parse(line));
    REQUIRE(recs.size() == 3);
    for (const char* k : {"epoch", "stage", "l1", "l2", "l3_llm", "total", "valid_mrr"})
      CHECK_MESSAGE(recs[0].contains(k), k);
    CHECK(recs[0]["stage"] == 1);
    CHECK(recs[2]["stage"] == 2);
    CHECK(recs[0]["valid_mrr"].is_null());
    CHECK(recs[1]["valid_mrr"].is_number());
    CHECK(recs[2]["valid_mrr"].is_number());
    CHECK(recs[2]["l2"].get<double>() > 0.0);
    const std::string config = testutil::read_file(dir / "config.txt");
    CHECK(config.find("method=ours\n") != std::string::npos);
    CHECK(config.find("student_dim=3\n") != std::string::npos);
    CHECK(config.find("temperature=7\n") != std::string::npos);
    CHECK(load_checkpoint(dir / "student.ckpt").dim == 3);
  }

  SUBCASE("reruns are deterministic and never overwrite") {
    const auto args = ws.distill_args({"--method", "fitnet", "--seed", "5"});
    const auto a = run(args);
    const auto b = run(args);
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const fs::path da = field(a.out, "run_dir"), db = field(b.out, "run_dir");
    CHECK(da != db);
    CHECK(without_timestamp(da / "metrics.json") == without_timestamp(db / "metrics.json"));
    CHECK(testutil::read_file(da / "student.ckpt") == testutil::read_file(db / "student.ckpt"));
    const auto c = run(ws.distill_args({"--method", "fitnet", "--seed", "6"}));
    CHECK(without_timestamp(da / "metrics.json") != without_timestamp(fs::path(field(c.out, "run_dir")) / "metrics.json"));
  }

  SUBCASE("evaluate reproduces the stored metrics") {
    const auto r = run(ws.distill_args({"--method", "bkd"}));
    REQUIRE(r.code == 0);
    const fs::path dir = field(r.out, "run_dir");
    const auto e = run({"evaluate", "--dir", ws.data.string(), "--out", ws.runs.string(), "--checkpoint",
                        (dir / "student.ckpt").string(), "--method", "bkd"});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    auto printed = nlohmann::json::parse(e.out);
    auto stored = nlohmann::json::parse(testutil::read_file(dir / "metrics.json"));
    for (const char* k : {"mr", "mrr", "hits1", "hits3", "hits10", "query_count", "setting", "model"})
      CHECK_MESSAGE(printed[k] == stored[k], k);
    CHECK(printed["method"] == "bkd");
  }

  SUBCASE("mismatched teacher") {
    const auto r = run(ws.distill_args({"--model", "ttranse"}));
    CHECK(r.code == kExitValidation);
  }

  SUBCASE("ingest counts") {
    const auto r = run({"ingest", "--dir", ws.data.string(), "--out", ws.runs.string(), "--dataset", "synthetic"});
    REQUIRE(r.code == 0);
    for (const char* k : {"entities", "relations", "times", "train", "valid", "test"})
      CHECK_MESSAGE(field(r.out, k) == field(ws.synth_out, k), k);
    CHECK(std::stoi(field(r.out, "entities")) <= 30);
    CHECK(field(r.out, "relations") == "2");
    CHECK(field(r.out, "times") == "4");
    CHECK(r.out.find("reference=") == std::string::npos);
    const auto y = run({"ingest", "--dir", ws.data.string(), "--out", ws.runs.string(), "--dataset", "yago11k"});
    REQUIRE(y.code == 0);
    CHECK(field(y.out, "reference") == "mismatch");
  }
}

TEST_CASE("installed binary exit codes") {
  const std::string bin = TKGD_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status("--help") == 0);
  CHECK(status("distill --help") == 0);
  CHECK(status("frobnicate") == 2);
  CHECK(status("distill --epochs 4 --stage1-epochs 1 --stage2-epochs 1 --teacher x") == 3);
}
