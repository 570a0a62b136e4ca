#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "btrec/ingest.hpp"
#include "btrec/mlm.hpp"
#include "btrec/recommender.hpp"

namespace btrec {

struct EvalCase {
  TrajId traj_id;
  ItineraryQuery query;
  std::set<PoiId> truth;
};

/// Query = (first POI, last POI, last check-in time - first check-in time)
/// with the trajectory owner as the known user; truth = every visited POI.
/// With `cold_start` the user is left unknown.
EvalCase make_case(const Trajectory& traj, bool cold_start = false);
std::vector<EvalCase> make_cases(const std::vector<Trajectory>& trajs, bool cold_start = false);

struct SetMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision/recall/F1 of two POI sets. Throws EmptyTruth.
SetMetrics set_metrics(const std::set<PoiId>& predicted, const std::set<PoiId>& truth);

struct CaseResult {
  TrajId traj_id;
  std::vector<PoiId> itinerary;
  std::set<PoiId> truth;
  SetMetrics metrics;
};

struct EvalReport {
  std::string model;
  std::string split;
  std::vector<CaseResult> cases;  // sorted by traj_id
  SetMetrics average;             // macro average over cases
};

using Predictor = std::function<Itinerary(const ItineraryQuery&)>;

/// Runs every case through `predictor` (optionally on several threads) and
/// averages the per-case metrics. The report does not depend on case order
/// or thread count. Failures are rethrown with the traj_id prefixed.
EvalReport evaluate(const Predictor& predictor, std::vector<EvalCase> cases, const std::string& model,
                    const std::string& split, int threads = 1);

/// Averages per-case metrics of `cases` (must be nonempty).
SetMetrics macro_average(const std::vector<CaseResult>& cases);

struct SweepPoint {
  int epochs = 0;
  double avg_f1 = 0.0;
  std::vector<double> loss_trace;  // per epoch up to this point
};

struct SweepResult {
  int best_epochs = 0;
  ModelParams best;
  std::vector<SweepPoint> trace;
};

/// Default model-selection grid.
std::vector<int> default_epoch_grid();
/// Parses "1,2,5" (ascending, positive).
std::vector<int> parse_epoch_grid(const std::string& text);

/// Trains once, continuing from grid point to grid point, scores the model
/// at every point with `validation_f1` and keeps the best (ties: fewer
/// epochs).
SweepResult sweep_epochs(ModelParams init, const std::vector<Sentence>& corpus, const Vocab& vocab,
                         const std::vector<int>& grid,
                         const std::function<double(const ModelParams&)>& validation_f1,
                         const TrainOptions& options = {});

/// Remembers which models have been scored on the test split; a second
/// request for the same model throws InternalError("TestSplitReused").
class TestSplitAudit {
 public:
  void touch(const std::string& model_key);
  const std::vector<std::string>& log() const { return log_; }

 private:
  std::set<std::string> seen_;
  std::vector<std::string> log_;
};

/// Per-case JSON lines followed by one summary line.
void write_report_jsonl(std::ostream& out, const EvalReport& report);
/// model,split,avg_precision,avg_recall,avg_f1,n_cases
void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports);

/// Combines per-dataset reports of one model: `macro` averages the dataset
/// averages, `pooled` averages over all cases together.
struct CombinedScores {
  SetMetrics macro;
  SetMetrics pooled;
  std::size_t n_cases = 0;
};
CombinedScores combine_datasets(const std::vector<EvalReport>& per_dataset);

}  // namespace btrec
