#include "tkgd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>

#include "tkgd/config.hpp"
#include "tkgd/distill.hpp"
#include "tkgd/eval.hpp"

namespace tkgd {

namespace fs = std::filesystem;

namespace {

struct Table1Row {
  std::size_t entities, relations, train, valid, test;
};

const std::map<std::string, Table1Row>& reference_counts() {
  static const std::map<std::string, Table1Row> rows = {
      {"yago11k", {10623, 10, 161540, 19523, 20026}},
      {"wikidata12k", {12544, 24, 539286, 67538, 63110}},
  };
  return rows;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string utc_stamp(const char* fmt) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), fmt, &tm);
  return buf;
}

fs::path make_run_dir(const fs::path& root, const std::string& command) {
  fs::create_directories(root);
  const std::string base = command + "-" + utc_stamp("%Y%m%dT%H%M%SZ");
  for (int n = 1;; ++n) {
    fs::path dir = root / (n == 1 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path dataset_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.str("dir");
  const fs::path nested = dir / cfg.str("dataset");
  if (fs::exists(nested / "train.txt")) return nested;
  return dir;
}

Dataset load_dataset(const RunConfig& cfg) { return parse_dataset(dataset_dir(cfg), cfg.parse_options()); }

class TrainLog {
public:
  explicit TrainLog(const fs::path& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void operator()(const EpochRecord& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["stage"] = r.stage;
    j["l1"] = r.loss.l1;
    j["l2"] = r.loss.l2;
    j["l3_llm"] = r.loss.l3_llm;
    j["l3_rel"] = r.loss.l3_rel;
    j["total"] = r.loss.total;
    j["valid_mrr"] = r.valid_mrr ? nlohmann::ordered_json(*r.valid_mrr) : nlohmann::ordered_json(nullptr);
    out_ << j.dump() << '\n';
    out_.flush();
  }

private:
  std::ofstream out_;
};

void write_metrics(const fs::path& dir, const Evaluation& ev, const MetricsMeta& meta) {
  write_text(dir / "metrics.json", metrics_json(ev.filtered, meta) + "\n");
  write_text(dir / "metrics_raw.json", metrics_json(ev.raw, meta) + "\n");
  write_text(dir / "metrics.csv",
             metrics_csv_header() + "\n" + metrics_csv_row(ev.raw, meta) + "\n" + metrics_csv_row(ev.filtered, meta) + "\n");
}

MetricsMeta meta_for(const RunConfig& cfg, const std::string& model, const std::string& method) {
  return {model, method, cfg.str("dataset"), static_cast<std::uint64_t>(cfg.integer("seed")), cfg.hash(),
          utc_stamp("%Y-%m-%dT%H:%M:%SZ")};
}

void print_summary(std::ostream& out, const fs::path& dir, const MetricsReport& filtered) {
  out << "run_dir=" << dir.string() << " filtered_mrr=" << filtered.mrr * 100.0 << " hits10=" << filtered.hits10 * 100.0
      << "\n";
}

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_dataset(cfg);
  const fs::path dir = make_run_dir(cfg.str("out"), "ingest");
  write_text(dir / "config.txt", cfg.dump());
  write_vocab(dir, data.vocab);
  const auto& f = data.facts;
  out << "dataset=" << cfg.str("dataset") << " entities=" << data.vocab.num_entities()
      << " relations=" << data.vocab.num_relations() << " times=" << data.vocab.num_times()
      << " train=" << f.train.size() << " valid=" << f.valid.size() << " test=" << f.test.size();
  if (auto it = reference_counts().find(lower(cfg.str("dataset"))); it != reference_counts().end()) {
    const Table1Row& r = it->second;
    const bool match = r.entities == data.vocab.num_entities() && r.relations == data.vocab.num_relations() &&
                       r.train == f.train.size() && r.valid == f.valid.size() && r.test == f.test.size();
    out << " reference=" << (match ? "match" : "mismatch");
  }
  out << "\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  SyntheticSpec spec;
  spec.num_entities = cfg.count("synth_entities");
  spec.num_relations = cfg.count("synth_relations");
  spec.num_times = cfg.count("synth_times");
  spec.num_clusters = cfg.count("synth_clusters");
  spec.facts_per_slot = cfg.count("synth_facts_per_slot");
  spec.seed = static_cast<std::uint64_t>(cfg.integer("synth_seed"));
  if (spec.num_entities < 2 || spec.num_relations == 0 || spec.num_times == 0 || spec.num_clusters == 0 ||
      spec.num_clusters > spec.num_entities)
    throw ConfigError("synthetic sizes must be positive with clusters <= entities");
  const Dataset data = generate_synthetic(spec);
  const fs::path dir = cfg.str("dir");
  fs::create_directories(dir);
  write_dataset(dir, data);
  write_text(dir / "synth_config.txt", cfg.dump());
  // Counts as a reader of the files sees them: unused entities are not listed.
  const Dataset written = parse_dataset(dir, ParseOptions{});
  out << "dir=" << dir.string() << " entities=" << written.vocab.num_entities()
      << " relations=" << written.vocab.num_relations() << " times=" << written.vocab.num_times()
      << " train=" << written.facts.train.size() << " valid=" << written.facts.valid.size()
      << " test=" << written.facts.test.size() << "\n";
  return kExitOk;
}

int cmd_train_teacher(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_dataset(cfg);
  const ModelKind kind = parse_model_kind(cfg.str("model"));
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  const fs::path dir = make_run_dir(cfg.str("out"), "train-teacher");
  write_text(dir / "config.txt", cfg.dump());
  Rng rng(seed);
  ModelParams teacher = ModelParams::init(kind, data.vocab.num_entities(), data.vocab.num_relations(),
                                          data.vocab.num_times(), cfg.count("teacher_dim"), rng);
  TrainLog log(dir / "train_log.jsonl");
  pretrain(teacher, data, cfg.count("teacher_epochs"), cfg.train_options(), seed, std::ref(log));
  save_checkpoint(dir / "teacher.ckpt", teacher);
  const ModelScorer scorer(teacher);
  const Evaluation ev = evaluate(scorer, data.facts, Split::kTest, static_cast<int>(cfg.count("workers")));
  write_metrics(dir, ev, meta_for(cfg, to_string(kind), "teacher"));
  print_summary(out, dir, ev.filtered);
  return kExitOk;
}

int cmd_distill(const RunConfig& cfg, std::ostream& out) {
  if (cfg.str("teacher").empty()) throw ConfigError("distill needs --teacher <checkpoint>");
  const Dataset data = load_dataset(cfg);
  const ModelParams teacher = load_checkpoint(cfg.str("teacher"));
  const ModelKind kind = parse_model_kind(cfg.str("model"));
  if (teacher.kind != kind) throw ConfigError("teacher checkpoint is " + to_string(teacher.kind) + ", --model is " + to_string(kind));
  if (teacher.entity.rows() != data.vocab.num_entities() || teacher.relation.rows() != data.vocab.num_relations() ||
      teacher.time.rows() != data.vocab.num_times())
    throw std::runtime_error("teacher checkpoint does not match the dataset vocabulary");
  const DistillConfig dc = cfg.distill();
  const auto seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  std::unique_ptr<SemanticProvider> provider;
  if (dc.method == Method::kOurs) provider = make_provider(cfg.str("provider"), &data.vocab);

  const fs::path dir = make_run_dir(cfg.str("out"), "distill");
  write_text(dir / "config.txt", cfg.dump());
  Rng rng(student_init_seed(seed));
  ModelParams student = ModelParams::init(kind, data.vocab.num_entities(), data.vocab.num_relations(),
                                          data.vocab.num_times(), cfg.count("student_dim"), rng);
  save_checkpoint(dir / "student_init.ckpt", student);
  TrainLog log(dir / "train_log.jsonl");
  DistillResult result = two_stage_distill(teacher, std::move(student), provider.get(), data, dc, cfg.train_options(),
                                           seed, std::ref(log), dir / "student_abort.ckpt");
  save_checkpoint(dir / "student.ckpt", result.student);
  const ModelScorer scorer(result.student);
  const Evaluation ev = evaluate(scorer, data.facts, Split::kTest, static_cast<int>(cfg.count("workers")));
  write_metrics(dir, ev, meta_for(cfg, to_string(kind), to_string(dc.method)));
  print_summary(out, dir, ev.filtered);
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.str("checkpoint").empty()) throw ConfigError("evaluate needs --checkpoint <file>");
  const Dataset data = load_dataset(cfg);
  const ModelParams model = load_checkpoint(cfg.str("checkpoint"));
  if (model.entity.rows() != data.vocab.num_entities() || model.relation.rows() != data.vocab.num_relations() ||
      model.time.rows() != data.vocab.num_times())
    throw std::runtime_error("checkpoint does not match the dataset vocabulary");
  const fs::path dir = make_run_dir(cfg.str("out"), "evaluate");
  write_text(dir / "config.txt", cfg.dump());
  const ModelScorer scorer(model);
  const Split split = cfg.str("split") == "valid" ? Split::kValid : Split::kTest;
  const Evaluation ev = evaluate(scorer, data.facts, split, static_cast<int>(cfg.count("workers")));
  const MetricsMeta meta = meta_for(cfg, to_string(model.kind), cfg.str("method"));
  write_metrics(dir, ev, meta);
  out << metrics_json(ev.filtered, meta) << "\n";
  return kExitOk;
}

const std::vector<std::string> kDataKeys = {"dataset", "dir", "format", "granularity", "keep_interval_end"};
const std::vector<std::string> kTrainKeys = {"model", "batch_size", "negatives", "lr", "seed",
                                             "workers", "valid_every", "valid_max_facts", "out"};

struct Subcommand {
  std::string name;
  std::string description;
  std::vector<std::string> keys;
  int (*run)(const RunConfig&, std::ostream&);
};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<Subcommand> subcommands() {
  return {
      {"ingest", "Parse a dataset, check it and print its counts", concat({kDataKeys, {"out"}}), cmd_ingest},
      {"synth-data", "Write the seeded synthetic temporal graph to --dir",
       {"dir", "synth_entities", "synth_relations", "synth_times", "synth_clusters", "synth_facts_per_slot",
        "synth_seed"},
       cmd_synth},
      {"train-teacher", "Pretrain and checkpoint the teacher model",
       concat({kDataKeys, kTrainKeys, {"teacher_dim", "teacher_epochs"}}), cmd_train_teacher},
      {"distill", "Distill the teacher into a compact student",
       concat({kDataKeys, kTrainKeys,
               {"teacher", "student_dim", "epochs", "stage1_epochs", "stage2_epochs", "method", "objective", "alpha",
                "beta", "delta", "temperature", "hint_weight", "rkd_group", "provider"}}),
       cmd_distill},
      {"evaluate", "Evaluate a checkpoint with time-aware ranking metrics",
       concat({kDataKeys, {"checkpoint", "split", "method", "seed", "workers", "out"}}), cmd_evaluate},
  };
}

std::string flag_name(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal knowledge graph embedding, distillation and evaluation", "tkgd"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::map<std::string, std::string> defaults;
  for (const auto& k : config_keys()) defaults[k.name] = k.default_value;
  std::map<std::string, std::string> help;
  for (const auto& k : config_keys()) help[k.name] = k.help;

  const auto cmds = subcommands();
  struct Bound {
    CLI::App* app;
    std::map<std::string, std::pair<CLI::Option*, std::string>> values;
    std::string config_file;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& c : cmds) {
    auto b = std::make_unique<Bound>();
    b->app = app.add_subcommand(c.name, c.description);
    b->app->add_option("--config", b->config_file, "flat key=value config file; flags override it");
    for (const auto& key : c.keys) {
      auto& slot = b->values[key];
      slot.first = b->app->add_option(flag_name(key), slot.second, help[key])
                       ->default_str(defaults[key])
                       ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    bound.push_back(std::move(b));
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    Bound& b = *bound[i];
    if (!b.app->parsed()) continue;
    try {
      RunConfig cfg;
      if (!b.config_file.empty()) cfg.merge_file(b.config_file);
      for (const auto& [key, slot] : b.values)
        if (slot.first->count() > 0) cfg.set(key, slot.second);
      cfg.validate();
      return cmds[i].run(cfg, out);
    } catch (const ConfigError& e) {
      err << "validation error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace tkgd
