#include "btrec/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "btrec/baselines.hpp"
#include "btrec/digest.hpp"
#include "btrec/error.hpp"
#include "btrec/eval.hpp"
#include "btrec/model_io.hpp"
#include "btrec/synthgen.hpp"

namespace btrec {

namespace fs = std::filesystem;

const std::vector<Setting>& settings() {
  static const std::vector<Setting> all = {
      {"run.seed", "seed", "", "global random seed (required by commands that draw randomness)"},
      {"run.threads", "threads", "1", "worker threads; never changes results"},
      {"run.out", "out", "", "output directory", false, true},
      {"run.data", "data", "", "ingested data directory", false, true},
      {"run.model_dir", "model-dir", "", "directory holding model.bin", false, true},
      {"ingest.checkins", "checkins", "", "check-in log", false, true},
      {"ingest.pois", "pois", "", "POI table (poi_id,name,theme[,lat,lon])", false, true},
      {"ingest.profiles", "profiles", "", "user profiles (user_id,home_city,home_country)", false, true},
      {"ingest.delimiter", "delimiter", ";", "check-in log delimiter"},
      {"ingest.min_pois", "min-pois", "3", "minimum distinct POIs per trajectory"},
      {"ingest.max_bad_fraction", "max-bad-fraction", "0.1", "tolerated share of malformed check-in rows"},
      {"split.fractions", "fractions", "0.7,0.2,0.1", "train,validation,test fractions"},
      {"model.name", "model", "btrec", "btrec | ppoibert | poibert-plain | markov | lz78 | cpt"},
      {"model.d_model", "d-model", "64", "embedding width"},
      {"model.n_heads", "heads", "2", "attention heads"},
      {"model.n_layers", "layers", "2", "encoder layers"},
      {"model.d_ff", "d-ff", "128", "feed-forward width"},
      {"model.max_len", "max-len", "128", "maximum sentence length in tokens"},
      {"model.dropout", "dropout", "0.1", "dropout rate"},
      {"model.learning_rate", "lr", "0.001", "learning rate"},
      {"model.batch_size", "batch-size", "16", "sentences per batch"},
      {"model.epochs", "epochs", "30", "training epochs (train command)"},
      {"model.optimizer", "optimizer", "adam", "adam | sgd"},
      {"model.mask_rate", "mask-rate", "0.15", "share of POI tokens selected for masking"},
      {"sweep.grid", "grid", "1,2,5,10,20,35,50,75,100", "epoch grid for model selection"},
      {"sweep.full_grid", "full-grid", "false", "use every epoch from 1 to 100", true},
      {"bootstrap.resamples", "resamples", "1000", "bootstrap resamples per POI"},
      {"bootstrap.level", "level", "0.8", "bootstrap quantile level"},
      {"recommend.src", "src", "", "source POI id"},
      {"recommend.dst", "dst", "", "destination POI id"},
      {"recommend.budget_min", "budget-min", "", "time budget in minutes"},
      {"recommend.user", "user", "", "querying user id (optional)"},
      {"recommend.faithful_loop", "faithful-loop", "false", "insert before testing the budget", true},
      {"eval.split", "split", "test", "test | validation"},
      {"eval.cold_start", "cold-start", "false", "hide the trajectory owner from the recommender", true},
      {"eval.models", "models", "btrec,ppoibert,poibert-plain,markov,lz78,cpt", "models run by bench"},
      {"synth.n_pois", "n-pois", "30", "synthetic POIs"},
      {"synth.n_categories", "n-categories", "6", "synthetic categories"},
      {"synth.n_users", "n-users", "50", "synthetic users"},
      {"synth.n_groups", "n-groups", "2", "synthetic user groups"},
      {"synth.trajs_per_user", "trajs-per-user", "8", "trajectories per synthetic user"},
      {"synth.len_min", "len-min", "3", "shortest synthetic trajectory"},
      {"synth.len_max", "len-max", "8", "longest synthetic trajectory"},
      {"synth.concentration", "concentration", "0.5", "Dirichlet concentration of group preferences"},
      {"synth.dwell_mean", "dwell-mean", "1800", "mean dwell per POI in seconds"},
      {"synth.disjoint", "disjoint", "false", "groups prefer disjoint categories", true},
  };
  return all;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth", "ingest", "split", "train",
                                                 "sweep", "recommend", "evaluate", "bench"};
  return names;
}

// --- RunConfig ----------------------------------------------------------------

RunConfig RunConfig::resolve(const std::map<std::string, std::string>& flags,
                             const std::optional<fs::path>& config_file) {
  RunConfig cfg;
  for (const auto& s : settings()) cfg.values_[s.key] = s.default_value;
  if (config_file) {
    if (!fs::exists(*config_file)) throw DataError("MissingFile", "cannot read " + config_file->string());
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(config_file->string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("config key '" + section + "' must sit in a section");
      for (const auto& [name, value] : body) {
        const std::string key = section + "." + name;
        if (!cfg.values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
        cfg.values_[key] = value.get_value<std::string>();
      }
    }
  }
  for (const auto& [key, value] : flags) {
    if (!cfg.values_.count(key)) throw ConfigError("unknown setting '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

bool RunConfig::has(const std::string& key) const {
  auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InternalError("UnknownSetting", "no setting " + key);
  return it->second;
}

void RunConfig::set(const std::string& key, std::string value) {
  if (!values_.count(key)) throw InternalError("UnknownSetting", "no setting " + key);
  values_[key] = std::move(value);
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " must be an integer, got '" + v + "'");
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " must be a number, got '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
  throw ConfigError(key + " must be true or false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  const std::string& v = get("run.seed");
  if (v.empty()) throw ConfigError("a seed is required (--seed or [run] seed)");
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used == v.size() && v.front() != '-') return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("seed must be a non-negative integer, got '" + v + "'");
}

fs::path RunConfig::path(const std::string& key) const {
  if (!has(key)) {
    for (const auto& s : settings()) {
      if (s.key == key) throw ConfigError("--" + s.flag + " is required");
    }
    throw ConfigError(key + " is required");
  }
  return fs::path(get(key));
}

std::string RunConfig::canonical() const {
  std::set<std::string> paths;
  for (const auto& s : settings()) {
    if (s.is_path) paths.insert(s.key);
  }
  std::string out;
  for (const auto& [k, v] : values_) {
    if (!paths.count(k)) out += k + "=" + v + "\n";
  }
  return out;
}

// --- models and data ------------------------------------------------------------

bool is_mlm_model(const std::string& name) {
  return name == "btrec" || name == "ppoibert" || name == "poibert-plain";
}

CorpusMode mode_for_model(const std::string& name) {
  if (name == "btrec") return CorpusMode::demographic;
  if (name == "ppoibert") return CorpusMode::personalized;
  if (name == "poibert-plain") return CorpusMode::plain;
  throw ConfigError("'" + name + "' is not a transformer model");
}

ModelConfig model_config_from(const RunConfig& cfg, int vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.max_len = cfg.get_int("model.max_len");
  mc.d_model = cfg.get_int("model.d_model");
  mc.n_heads = cfg.get_int("model.n_heads");
  mc.n_layers = cfg.get_int("model.n_layers");
  mc.d_ff = cfg.get_int("model.d_ff");
  mc.dropout_rate = cfg.get_double("model.dropout");
  mc.learning_rate = cfg.get_double("model.learning_rate");
  mc.batch_size = cfg.get_int("model.batch_size");
  mc.epochs = cfg.get_int("model.epochs");
  mc.seed = cfg.seed();
  const std::string& opt = cfg.get("model.optimizer");
  if (opt == "adam") {
    mc.optimizer = Optimizer::adam;
  } else if (opt == "sgd") {
    mc.optimizer = Optimizer::sgd;
  } else {
    throw ConfigError("optimizer must be adam or sgd, got '" + opt + "'");
  }
  mc.validate();
  return mc;
}

namespace {

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("MissingFile", "cannot read " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("WriteFailed", "cannot write " + p.string());
  return out;
}

std::array<double, 3> parse_fractions(const std::string& text) {
  std::array<double, 3> f{};
  std::stringstream ss(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) throw ConfigError("split fractions need exactly three values");
    try {
      f[n++] = std::stod(item);
    } catch (const std::exception&) {
      throw ConfigError("bad split fraction '" + item + "'");
    }
  }
  if (n != 3) throw ConfigError("split fractions need exactly three values");
  return f;
}

std::vector<PoiSequence> poi_sequences(const std::vector<Trajectory>& trajs) {
  std::vector<PoiSequence> out;
  for (const auto& t : trajs) out.push_back(t.poi_sequence());
  return out;
}

std::vector<PoiId> poi_universe(const PoiTable& pois) {
  std::vector<PoiId> out;
  for (const auto& [id, p] : pois) out.push_back(id);
  return out;
}

// Manifest with one section per command that wrote into the directory.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const std::string& name) { outputs_.push_back(name); }

  void write(const RunConfig& cfg) const {
    std::map<std::string, std::string> sections;
    const fs::path file = dir_ / "manifest.txt";
    if (fs::exists(file)) {
      std::ifstream in(file);
      std::string line, current;
      while (std::getline(in, line)) {
        if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
          current = line.substr(1, line.size() - 2);
          sections[current];
        } else if (!current.empty() && !line.empty()) {
          sections[current] += line + "\n";
        }
      }
    }
    std::string body;
    body += "tool=btrec " + std::string(kToolVersion) + "\n";
    body += "seed=" + (cfg.has("run.seed") ? cfg.get("run.seed") : std::string("none")) + "\n";
    body += "config_sha256=" + sha256_hex(cfg.canonical()) + "\n";
    for (const auto& p : inputs_) body += "input " + p.filename().string() + " " + file_sha256(p) + "\n";
    for (const auto& name : outputs_) body += "output " + name + " " + file_sha256(dir_ / name) + "\n";
    sections[command_] = body;
    auto out = open_out(file);
    for (const auto& [name, text] : sections) out << '[' << name << "]\n" << text << '\n';
  }

 private:
  fs::path dir_;
  std::string command_;
  std::vector<fs::path> inputs_;
  std::vector<std::string> outputs_;
};

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions opt;
  opt.masking.mask_rate = cfg.get_double("model.mask_rate");
  if (!(opt.masking.mask_rate > 0.0 && opt.masking.mask_rate <= 1.0)) {
    throw ConfigError("mask rate must be in (0, 1]");
  }
  opt.threads = cfg.get_int("run.threads");
  return opt;
}

std::vector<int> sweep_grid(const RunConfig& cfg) {
  if (cfg.get_bool("sweep.full_grid")) {
    std::vector<int> grid(100);
    for (int i = 0; i < 100; ++i) grid[static_cast<std::size_t>(i)] = i + 1;
    return grid;
  }
  return parse_epoch_grid(cfg.get("sweep.grid"));
}

const std::vector<Trajectory>& split_trajectories(const Dataset& data, const std::string& split) {
  if (split == "test") return data.test;
  if (split == "validation") return data.validation;
  if (split == "train") return data.train;
  throw ConfigError("split must be train, validation or test, got '" + split + "'");
}

RecommendOptions recommend_options(const RunConfig& cfg) {
  RecommendOptions o;
  o.faithful_loop = cfg.get_bool("recommend.faithful_loop");
  return o;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_model_dir(const fs::path& out, const TrainedModel& t, const DurationTable& durations, Manifest& m) {
  save_model(out / "model.bin", t.params, t.vocab);
  {
    auto f = open_out(out / "vocab.tsv");
    t.vocab.write(f);
  }
  {
    auto f = open_out(out / "corpus.txt");
    write_corpus(f, t.corpus, t.vocab);
  }
  {
    auto f = open_out(out / "durations.tsv");
    write_durations(f, durations);
  }
  {
    auto f = open_out(out / "loss.tsv");
    f << "epoch\tloss\n";
    for (std::size_t i = 0; i < t.loss_trace.size(); ++i) f << i + 1 << '\t' << fmt(t.loss_trace[i], "%.9g") << '\n';
  }
  for (const char* name : {"model.bin", "vocab.tsv", "corpus.txt", "durations.tsv", "loss.tsv"}) m.output(name);
}

void add_dataset_inputs(Manifest& m, const fs::path& dir, bool with_split) {
  for (const char* name : {"trajectories.tsv", "pois.csv", "profiles.csv"}) m.input(dir / name);
  if (with_split) m.input(dir / "split.tsv");
}

// --- commands -------------------------------------------------------------------

SynthConfig synth_config(const RunConfig& cfg) {
  SynthConfig sc;
  sc.n_pois = cfg.get_int("synth.n_pois");
  sc.n_categories = cfg.get_int("synth.n_categories");
  sc.n_users = cfg.get_int("synth.n_users");
  sc.n_user_groups = cfg.get_int("synth.n_groups");
  sc.trajs_per_user = cfg.get_int("synth.trajs_per_user");
  sc.traj_len_range = {cfg.get_int("synth.len_min"), cfg.get_int("synth.len_max")};
  sc.preference_concentration = cfg.get_double("synth.concentration");
  sc.dwell_mean_per_poi = cfg.get_double("synth.dwell_mean");
  sc.disjoint_group_preferences = cfg.get_bool("synth.disjoint");
  sc.seed = cfg.seed();
  return sc;
}

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const SynthConfig sc = synth_config(cfg);
  const fs::path out = cfg.path("run.out");
  const SynthWorld world = generate_world(sc);
  write_world(world, out);
  Manifest m(out, "synth");
  for (const char* name : {"checkins.csv", "pois.csv", "profiles.csv"}) m.output(name);
  m.write(cfg);
  log << "synth: " << world.checkins.size() << " check-ins, " << world.profiles.size() << " users, "
      << world.pois.size() << " POIs -> " << out.string() << '\n';
}

void cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  const fs::path checkins_path = cfg.path("ingest.checkins");
  const fs::path out = cfg.path("run.out");
  ColumnSpec spec;
  const std::string& delim = cfg.get("ingest.delimiter");
  if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
  spec.delimiter = delim[0];
  spec.max_bad_fraction = cfg.get_double("ingest.max_bad_fraction");
  const int min_pois = cfg.get_int("ingest.min_pois");

  Manifest m(out, "ingest");
  CheckinParseResult parsed;
  {
    auto in = open_in(checkins_path);
    parsed = parse_checkins(in, spec);
  }
  m.input(checkins_path);
  PoiTable pois;
  if (cfg.has("ingest.pois")) {
    auto in = open_in(cfg.path("ingest.pois"));
    pois = parse_pois(in);
    m.input(cfg.path("ingest.pois"));
  } else {
    pois = pois_from_checkins(parsed.checkins);
  }
  ProfileTable profiles;
  if (cfg.has("ingest.profiles")) {
    auto in = open_in(cfg.path("ingest.profiles"));
    profiles = parse_profiles(in);
    m.input(cfg.path("ingest.profiles"));
  }
  const auto trajs = filter_trajectories(build_trajectories(parsed.checkins, pois), min_pois);
  if (trajs.empty()) throw EmptyDataset();

  fs::create_directories(out);
  {
    auto f = open_out(out / "trajectories.tsv");
    write_trajectories(f, trajs);
  }
  {
    auto f = open_out(out / "pois.csv");
    write_pois(f, pois);
  }
  {
    auto f = open_out(out / "profiles.csv");
    write_profiles(f, profiles);
  }
  for (const char* name : {"trajectories.tsv", "pois.csv", "profiles.csv"}) m.output(name);
  m.write(cfg);
  log << "ingest: " << parsed.checkins.size() << " check-ins (" << parsed.bad_rows.size() << " bad rows), "
      << trajs.size() << " trajectories -> " << out.string() << '\n';
}

void cmd_split(const RunConfig& cfg, std::ostream& log) {
  const fs::path data = cfg.path("run.data");
  const fs::path out = cfg.has("run.out") ? cfg.path("run.out") : data;
  std::vector<Trajectory> trajs;
  {
    auto in = open_in(data / "trajectories.tsv");
    trajs = read_trajectories(in);
  }
  const DatasetSplit split = split_dataset(trajs, parse_fractions(cfg.get("split.fractions")));
  fs::create_directories(out);
  {
    auto f = open_out(out / "split.tsv");
    write_split_manifest(f, split);
  }
  Manifest m(out, "split");
  m.input(data / "trajectories.tsv");
  m.output("split.tsv");
  m.write(cfg);
  log << "split: " << split.train.size() << " train, " << split.validation.size() << " validation, "
      << split.test.size() << " test\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& log, bool sweep) {
  const fs::path data_dir = cfg.path("run.data");
  const fs::path out = cfg.path("run.out");
  const Dataset data = load_dataset(data_dir, true);
  const DurationTable durations = durations_for(data, cfg);
  const TrainedModel t = train_model(data, cfg, durations, sweep);
  fs::create_directories(out);
  Manifest m(out, sweep ? "sweep" : "train");
  add_dataset_inputs(m, data_dir, true);
  write_model_dir(out, t, durations, m);
  if (sweep) {
    auto f = open_out(out / "sweep.csv");
    f << "epochs,avg_f1,loss\n";
    for (const auto& p : t.sweep) {
      f << p.epochs << ',' << fmt(p.avg_f1) << ',' << fmt(p.loss_trace.back(), "%.9g") << '\n';
    }
    m.output("sweep.csv");
  }
  m.write(cfg);
  log << (sweep ? "sweep: " : "train: ") << cfg.get("model.name") << ", " << t.params.config.epochs
      << " epochs, final loss " << (t.loss_trace.empty() ? 0.0 : t.loss_trace.back()) << " -> " << out.string()
      << '\n';
}

Predictor load_predictor(const RunConfig& cfg, const Dataset& data, const DurationTable& durations,
                         std::shared_ptr<ModelBundle>& holder) {
  const std::string name = cfg.get("model.name");
  if (!is_mlm_model(name)) return baseline_predictor(name, data, durations);
  const fs::path model_path = cfg.path("run.model_dir") / "model.bin";
  holder = std::make_shared<ModelBundle>(load_model(model_path));
  if (holder->vocab.mode() != mode_for_model(name)) {
    throw ConfigError("model file was trained in " + std::string(to_string(holder->vocab.mode())) +
                      " mode, which does not match --model " + name);
  }
  return mlm_predictor(holder->params, holder->vocab, data, durations, recommend_options(cfg));
}

void cmd_recommend(const RunConfig& cfg, std::ostream& out) {
  const Dataset data = load_dataset(cfg.path("run.data"), true);
  const DurationTable durations = durations_for(data, cfg);
  ItineraryQuery q;
  for (const char* key : {"recommend.src", "recommend.dst", "recommend.budget_min"}) {
    if (!cfg.has(key)) cfg.path(key);
  }
  q.source = cfg.get_int("recommend.src");
  q.dest = cfg.get_int("recommend.dst");
  q.time_budget = cfg.get_double("recommend.budget_min") * 60.0;
  if (q.time_budget < 0.0) throw ConfigError("budget must be non-negative");
  for (PoiId p : {q.source, q.dest}) {
    if (!data.pois.count(p)) throw UnknownPoi(p);
  }
  if (cfg.has("recommend.user")) q.known_user = cfg.get("recommend.user");
  std::shared_ptr<ModelBundle> holder;
  const Predictor predictor = load_predictor(cfg, data, durations, holder);
  const Itinerary it = predictor(q);
  const std::string line = itinerary_json(q, it, cfg.get("model.name"));
  out << line << '\n';
  if (cfg.has("run.out")) {
    const fs::path dir = cfg.path("run.out");
    fs::create_directories(dir);
    {
      auto f = open_out(dir / "recommendation.jsonl");
      f << line << '\n';
    }
    Manifest m(dir, "recommend");
    add_dataset_inputs(m, cfg.path("run.data"), true);
    if (holder) m.input(cfg.path("run.model_dir") / "model.bin");
    m.output("recommendation.jsonl");
    m.write(cfg);
  }
}

// The audit log lives next to the reports; the test split may be scored once
// per model file (or baseline configuration).
void audit_test_use(const fs::path& dir, const std::string& key) {
  const fs::path file = dir / "test_audit.log";
  TestSplitAudit audit;
  if (fs::exists(file)) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) audit.touch(line);
    }
  }
  audit.touch(key);
  std::ofstream app(file, std::ios::app | std::ios::binary);
  app << key << '\n';
}

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const fs::path data_dir = cfg.path("run.data");
  const fs::path out = cfg.path("run.out");
  const Dataset data = load_dataset(data_dir, true);
  const DurationTable durations = durations_for(data, cfg);
  const std::string split = cfg.get("eval.split");
  const auto cases = make_cases(split_trajectories(data, split), cfg.get_bool("eval.cold_start"));
  std::shared_ptr<ModelBundle> holder;
  const Predictor predictor = load_predictor(cfg, data, durations, holder);
  const std::string name = cfg.get("model.name");

  fs::create_directories(out);
  if (split == "test") {
    const std::string key = holder ? name + " " + file_sha256(cfg.path("run.model_dir") / "model.bin")
                                   : name + " " + sha256_hex(cfg.canonical());
    audit_test_use(out, key);
  }
  const EvalReport report = evaluate(predictor, cases, name, split, cfg.get_int("run.threads"));
  {
    auto f = open_out(out / "report.jsonl");
    write_report_jsonl(f, report);
  }
  {
    auto f = open_out(out / "report.csv");
    write_report_csv(f, {report});
  }
  Manifest m(out, "evaluate");
  add_dataset_inputs(m, data_dir, true);
  if (holder) m.input(cfg.path("run.model_dir") / "model.bin");
  m.output("report.jsonl");
  m.output("report.csv");
  m.write(cfg);
  write_report_csv(log, {report});
}

void cmd_bench(const RunConfig& cfg, std::ostream& log) {
  using clock = std::chrono::steady_clock;
  const fs::path out = cfg.path("run.out");
  const SynthConfig sc = synth_config(cfg);
  const SynthWorld world = generate_world(sc);
  write_world(world, out / "world");

  const Dataset data = dataset_from(world.pois, world.profiles,
                                    filter_trajectories(build_trajectories(world.checkins, world.pois),
                                                        cfg.get_int("ingest.min_pois")),
                                    parse_fractions(cfg.get("split.fractions")));
  const DurationTable durations = durations_for(data, cfg);
  const auto test_cases = make_cases(data.test, cfg.get_bool("eval.cold_start"));
  const int threads = cfg.get_int("run.threads");

  std::vector<std::string> models;
  {
    std::stringstream ss(cfg.get("eval.models"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) models.push_back(item);
    }
  }
  TestSplitAudit audit;
  std::vector<EvalReport> reports;
  std::ostringstream sweep_csv;
  sweep_csv << "model,epochs,avg_f1,loss\n";
  for (const auto& name : models) {
    const auto start = clock::now();
    RunConfig mcfg = cfg;
    mcfg.set("model.name", name);
    audit.touch(name);
    if (is_mlm_model(name)) {
      const TrainedModel t = train_model(data, mcfg, durations, true);
      for (const auto& p : t.sweep) {
        sweep_csv << name << ',' << p.epochs << ',' << fmt(p.avg_f1) << ',' << fmt(p.loss_trace.back(), "%.9g")
                  << '\n';
      }
      reports.push_back(evaluate(mlm_predictor(t.params, t.vocab, data, durations, recommend_options(cfg)),
                                 test_cases, name, "test", threads));
    } else {
      reports.push_back(evaluate(baseline_predictor(name, data, durations), test_cases, name, "test", threads));
    }
    const double secs = std::chrono::duration<double>(clock::now() - start).count();
    log << "bench: " << name << " avg_f1=" << fmt(reports.back().average.f1) << " (" << fmt(secs, "%.1f")
        << " s)\n";
  }
  {
    auto f = open_out(out / "report.csv");
    write_report_csv(f, reports);
  }
  {
    auto f = open_out(out / "report.jsonl");
    for (const auto& r : reports) write_report_jsonl(f, r);
  }
  {
    auto f = open_out(out / "sweep.csv");
    f << sweep_csv.str();
  }
  Manifest m(out, "bench");
  for (const char* name : {"report.csv", "report.jsonl", "sweep.csv"}) m.output(name);
  m.write(cfg);
  write_report_csv(log, reports);
}

}  // namespace

Predictor mlm_predictor(const ModelParams& params, const Vocab& vocab, const Dataset& data,
                        const DurationTable& durations, const RecommendOptions& options) {
  auto rec = std::make_shared<Recommender>(params, vocab, data.pois, data.profiles, durations);
  return [rec, options](const ItineraryQuery& q) { return rec->recommend(q, options); };
}

Predictor baseline_predictor(const std::string& name, const Dataset& data, const DurationTable& durations) {
  std::shared_ptr<NextSymbolModel> model = make_baseline(name);
  model->train(poi_sequences(data.train));
  const auto universe = poi_universe(data.pois);
  return [model, &durations, universe](const ItineraryQuery& q) {
    return extend_to_itinerary(*model, q, durations, universe);
  };
}

// Trains (or sweeps when `sweep` is set) the transformer named by model.name.
TrainedModel train_model(const Dataset& data, const RunConfig& cfg, const DurationTable& durations, bool sweep) {
  const std::string name = cfg.get("model.name");
  const CorpusMode mode = mode_for_model(name);
  if (data.train.empty()) throw DataError("EmptyDataset", "training split is empty");
  TrainedModel t{build_vocab(data.train, data.pois, data.profiles, mode), {}, {}, {}, {}};
  ModelConfig mc = model_config_from(cfg, static_cast<int>(t.vocab.size()));
  t.corpus = build_corpus(data.train, data.profiles, data.pois, t.vocab, static_cast<std::size_t>(mc.max_len));
  const TrainOptions opts = train_options(cfg);
  if (!sweep) {
    auto r = train(init_model(mc), t.corpus, t.vocab, opts);
    t.params = std::move(r.params);
    t.loss_trace = std::move(r.loss_trace);
    return t;
  }
  if (data.validation.empty()) throw DataError("EmptyDataset", "validation split is empty");
  const auto cases = make_cases(data.validation, cfg.get_bool("eval.cold_start"));
  const int threads = cfg.get_int("run.threads");
  const auto rec_opts = recommend_options(cfg);
  const Vocab& vocab = t.vocab;
  auto score = [&](const ModelParams& p) {
    return evaluate(mlm_predictor(p, vocab, data, durations, rec_opts), cases, name, "validation", threads)
        .average.f1;
  };
  auto r = sweep_epochs(init_model(mc), t.corpus, t.vocab, sweep_grid(cfg), score, opts);
  t.params = std::move(r.best);
  t.sweep = std::move(r.trace);
  t.loss_trace = t.sweep.empty() ? std::vector<double>{} : t.sweep.back().loss_trace;
  t.loss_trace.resize(static_cast<std::size_t>(t.params.config.epochs));
  return t;
}

Dataset load_dataset(const fs::path& dir, bool with_split) {
  Dataset d;
  {
    auto in = open_in(dir / "trajectories.tsv");
    d.trajectories = read_trajectories(in);
  }
  {
    auto in = open_in(dir / "pois.csv");
    d.pois = parse_pois(in);
  }
  if (fs::exists(dir / "profiles.csv")) {
    auto in = open_in(dir / "profiles.csv");
    d.profiles = parse_profiles(in);
  }
  for (const auto& t : d.trajectories) {
    for (const auto& v : t.visits) {
      if (!d.pois.count(v.poi_id)) throw UnknownPoi(v.poi_id);
    }
  }
  if (with_split) {
    auto in = open_in(dir / "split.tsv");
    d.split = read_split_manifest(in);
    d.train = select_trajectories(d.trajectories, d.split.train);
    d.validation = select_trajectories(d.trajectories, d.split.validation);
    d.test = select_trajectories(d.trajectories, d.split.test);
  }
  return d;
}

Dataset dataset_from(PoiTable pois, ProfileTable profiles, std::vector<Trajectory> trajectories,
                     std::array<double, 3> fractions) {
  Dataset d;
  d.pois = std::move(pois);
  d.profiles = std::move(profiles);
  d.trajectories = std::move(trajectories);
  d.split = split_dataset(d.trajectories, fractions);
  d.train = select_trajectories(d.trajectories, d.split.train);
  d.validation = select_trajectories(d.trajectories, d.split.validation);
  d.test = select_trajectories(d.trajectories, d.split.test);
  return d;
}

DurationTable durations_for(const Dataset& data, const RunConfig& cfg) {
  BootstrapOptions b;
  b.resamples = cfg.get_int("bootstrap.resamples");
  b.level = cfg.get_double("bootstrap.level");
  b.seed = cfg.seed();
  const auto& source = data.train.empty() ? data.trajectories : data.train;
  return estimate_duration(dwell_samples(source), poi_universe(data.pois), b);
}

void run_command(const std::string& command, const RunConfig& cfg, std::ostream& out) {
  if (command == "synth") return cmd_synth(cfg, out);
  if (command == "ingest") return cmd_ingest(cfg, out);
  if (command == "split") return cmd_split(cfg, out);
  if (command == "train") return cmd_train(cfg, out, false);
  if (command == "sweep") return cmd_train(cfg, out, true);
  if (command == "recommend") return cmd_recommend(cfg, out);
  if (command == "evaluate") return cmd_evaluate(cfg, out);
  if (command == "bench") return cmd_bench(cfg, out);
  throw UsageError("unknown command '" + command + "'");
}

}  // namespace btrec
