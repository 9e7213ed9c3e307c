#include "tkgd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tkgd {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"dataset", "synthetic", "dataset name recorded in metrics"},
      {"dir", "data", "dataset directory holding train.txt/valid.txt/test.txt"},
      {"format", "auto", "column format: auto, four-column, five-column"},
      {"granularity", "year", "time binning: year or raw"},
      {"keep_interval_end", "false", "keep the interval end column of five-column data"},
      {"model", "tadistmult", "model family: ttranse or tadistmult"},
      {"teacher_dim", "400", "teacher embedding dimension"},
      {"student_dim", "25", "student embedding dimension"},
      {"batch_size", "1024", "training batch size"},
      {"negatives", "10", "sampled corruptions per positive"},
      {"teacher_epochs", "100", "teacher pretraining epochs"},
      {"epochs", "100", "student epochs, split evenly between stages unless stage epochs are set"},
      {"stage1_epochs", "", "stage-one epochs (default: epochs / 2)"},
      {"stage2_epochs", "", "stage-two epochs (default: epochs - stage1_epochs)"},
      {"lr", "0.1", "Adagrad learning rate"},
      {"seed", "42", "random seed"},
      {"method", "ours", "distillation method: ours, bkd, fitnet, rkd, none"},
      {"objective", "llm-weighted", "stage-two objective: llm-weighted or relation-supervised"},
      {"alpha", "0.5", "soft/hard balance of L1 and weight of the Huber term"},
      {"beta", "0.1", "weight of the semantic-teacher MSE term"},
      {"delta", "1.0", "Huber threshold"},
      {"temperature", "7", "distillation temperature"},
      {"hint_weight", "1.0", "weight of the FitNet / RKD term"},
      {"rkd_group", "16", "entities per RKD distance/angle group"},
      {"provider", "stub", "semantic provider: stub, stub:<dim>, file:<path>, remote, remote:<url>"},
      {"teacher", "", "teacher checkpoint (distill)"},
      {"checkpoint", "", "checkpoint to evaluate (evaluate)"},
      {"split", "test", "split to evaluate: valid or test"},
      {"out", "runs", "output root; each run gets its own timestamped directory"},
      {"workers", "1", "OpenMP threads for gradients and evaluation"},
      {"valid_every", "1", "validation MRR every N epochs (0: never)"},
      {"valid_max_facts", "0", "cap on validation facts per check (0: all)"},
      {"synth_entities", "200", "synthetic |E|"},
      {"synth_relations", "8", "synthetic |R|"},
      {"synth_times", "40", "synthetic |T|"},
      {"synth_clusters", "10", "synthetic entity clusters"},
      {"synth_facts_per_slot", "16", "synthetic facts per (relation, time)"},
      {"synth_seed", "7", "synthetic generator seed"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
  explicit_[key] = true;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = str(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  const std::string& v = str(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError(key + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  const std::string text = dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

DistillConfig RunConfig::distill() const {
  DistillConfig c;
  c.alpha = real("alpha");
  c.beta = real("beta");
  c.delta = real("delta");
  c.temperature = real("temperature");
  c.hint_weight = real("hint_weight");
  c.rkd_group = count("rkd_group");
  try {
    c.method = parse_method(str("method"));
    c.objective = parse_objective(str("objective"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::size_t epochs = count("epochs");
  const bool has1 = !str("stage1_epochs").empty(), has2 = !str("stage2_epochs").empty();
  c.stage1_epochs = has1 ? count("stage1_epochs") : (has2 ? epochs - std::min(epochs, count("stage2_epochs")) : epochs / 2);
  c.stage2_epochs = has2 ? count("stage2_epochs") : epochs - std::min(epochs, c.stage1_epochs);
  return c;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.batch_size = count("batch_size");
  o.negatives = count("negatives");
  o.learning_rate = real("lr");
  o.workers = static_cast<int>(count("workers"));
  o.valid_every = count("valid_every");
  o.valid_max_facts = count("valid_max_facts");
  return o;
}

ParseOptions RunConfig::parse_options() const {
  ParseOptions p;
  const auto& f = str("format");
  if (f == "auto")
    p.format = ColumnFormat::kAuto;
  else if (f == "four-column")
    p.format = ColumnFormat::kFourColumn;
  else if (f == "five-column")
    p.format = ColumnFormat::kFiveColumn;
  else
    throw ConfigError("format: expected auto, four-column or five-column");
  const auto& g = str("granularity");
  if (g == "year")
    p.granularity = TimeGranularity::kYear;
  else if (g == "raw")
    p.granularity = TimeGranularity::kRaw;
  else
    throw ConfigError("granularity: expected year or raw");
  const auto& k = str("keep_interval_end");
  if (k != "true" && k != "false") throw ConfigError("keep_interval_end: expected true or false");
  p.keep_interval_end = k == "true";
  return p;
}

void RunConfig::validate() const {
  try {
    parse_model_kind(str("model"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  parse_options();
  const DistillConfig d = distill();
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const bool has1 = !str("stage1_epochs").empty(), has2 = !str("stage2_epochs").empty();
  if (has1 && has2 && explicitly_set("epochs") && d.stage1_epochs + d.stage2_epochs != count("epochs"))
    throw ConfigError("epochs conflicts with stage1_epochs + stage2_epochs");
  if (d.stage1_epochs + d.stage2_epochs > kMaxEpochs || count("teacher_epochs") > kMaxEpochs)
    throw ConfigError("epochs may not exceed " + std::to_string(kMaxEpochs));
  if (count("teacher_dim") == 0 || count("student_dim") == 0) throw ConfigError("dimensions must be positive");
  if (count("batch_size") == 0 || count("negatives") == 0) throw ConfigError("batch_size and negatives must be positive");
  if (!(real("lr") > 0.0)) throw ConfigError("lr must be positive");
  if (count("workers") == 0) throw ConfigError("workers must be at least 1");
  if (str("split") != "valid" && str("split") != "test") throw ConfigError("split: expected valid or test");
}

}  // namespace tkgd
