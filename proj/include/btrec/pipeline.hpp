#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "btrec/corpus.hpp"
#include "btrec/eval.hpp"
#include "btrec/ingest.hpp"
#include "btrec/mlm.hpp"
#include "btrec/recommender.hpp"

namespace btrec {

inline constexpr const char* kToolVersion = "1.0.0";

/// One configurable value. `key` is "section.name" in the config file; the
/// command-line flag is --<flag>.
struct Setting {
  std::string key;
  std::string flag;
  std::string default_value;
  std::string help;
  bool is_switch = false;  // flag without a value
  bool is_path = false;    // excluded from the config digest
};

const std::vector<Setting>& settings();

/// Resolved configuration: flag value, else config-file value, else default.
class RunConfig {
 public:
  /// `flags` maps setting keys to command-line values. Unknown keys in the
  /// file raise ConfigError.
  static RunConfig resolve(const std::map<std::string, std::string>& flags,
                           const std::optional<std::filesystem::path>& config_file = std::nullopt);

  bool has(const std::string& key) const;  // non-empty value
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t seed() const;  // throws ConfigError when unset

  std::filesystem::path path(const std::string& key) const;  // throws ConfigError when unset
  void set(const std::string& key, std::string value);

  /// Sorted "key=value" lines of every non-path setting.
  std::string canonical() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Model names accepted by --model.
bool is_mlm_model(const std::string& name);
CorpusMode mode_for_model(const std::string& name);
ModelConfig model_config_from(const RunConfig& cfg, int vocab_size);

/// Everything a command reads from an ingested data directory.
struct Dataset {
  PoiTable pois;
  ProfileTable profiles;
  std::vector<Trajectory> trajectories;
  DatasetSplit split;
  std::vector<Trajectory> train, validation, test;
};

/// Reads trajectories.tsv, pois.csv, profiles.csv and (if `with_split`)
/// split.tsv from `dir`.
Dataset load_dataset(const std::filesystem::path& dir, bool with_split);

/// Splits `trajectories` and fills every part of a Dataset.
Dataset dataset_from(PoiTable pois, ProfileTable profiles, std::vector<Trajectory> trajectories,
                     std::array<double, 3> fractions = {0.70, 0.20, 0.10});

/// Bootstrap durations from the training split (all trajectories when the
/// split is empty) over every POI of the dataset.
DurationTable durations_for(const Dataset& data, const RunConfig& cfg);

struct TrainedModel {
  Vocab vocab;
  std::vector<Sentence> corpus;
  ModelParams params;
  std::vector<double> loss_trace;
  std::vector<SweepPoint> sweep;  // empty unless swept
};

/// Trains the transformer named by model.name on the training split, either
/// for model.epochs epochs or, with `sweep`, selecting the epoch count on
/// the validation split.
TrainedModel train_model(const Dataset& data, const RunConfig& cfg, const DurationTable& durations, bool sweep);

/// Predictors keep references to their arguments, which must outlive them.
Predictor mlm_predictor(const ModelParams& params, const Vocab& vocab, const Dataset& data,
                        const DurationTable& durations, const RecommendOptions& options);
/// Trains the named baseline on the training split.
Predictor baseline_predictor(const std::string& name, const Dataset& data, const DurationTable& durations);

/// Entry point of the command-line tool; `out` receives command output
/// (recommendations, summaries). Throws btrec::Error on failure.
void run_command(const std::string& command, const RunConfig& cfg, std::ostream& out);

const std::vector<std::string>& command_names();

}  // namespace btrec
