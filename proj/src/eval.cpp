#include "btrec/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "btrec/error.hpp"

namespace btrec {

EvalCase make_case(const Trajectory& traj, bool cold_start) {
  std::set<PoiId> truth;
  for (const auto& v : traj.visits) truth.insert(v.poi_id);
  if (truth.size() < 3) {
    throw DataError("TrajectoryTooShort", "trajectory " + traj.id.str() + " visits fewer than 3 POIs");
  }
  EvalCase c;
  c.traj_id = traj.id;
  c.query.source = traj.visits.front().poi_id;
  c.query.dest = traj.visits.back().poi_id;
  c.query.time_budget = static_cast<double>(traj.last_time() - traj.first_time());
  if (!cold_start) c.query.known_user = traj.user_id();
  c.truth = std::move(truth);
  return c;
}

std::vector<EvalCase> make_cases(const std::vector<Trajectory>& trajs, bool cold_start) {
  std::vector<EvalCase> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(make_case(t, cold_start));
  return out;
}

SetMetrics set_metrics(const std::set<PoiId>& predicted, const std::set<PoiId>& truth) {
  if (truth.empty()) throw EmptyTruth();
  if (predicted.empty()) throw DataError("EmptyPrediction", "predicted POI set is empty");
  std::size_t hit = 0;
  for (PoiId p : predicted) hit += truth.count(p);
  SetMetrics m;
  m.precision = static_cast<double>(hit) / static_cast<double>(predicted.size());
  m.recall = static_cast<double>(hit) / static_cast<double>(truth.size());
  m.f1 = hit == 0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

SetMetrics macro_average(const std::vector<CaseResult>& cases) {
  if (cases.empty()) throw DataError("NoCases", "nothing to average");
  SetMetrics avg;
  for (const auto& c : cases) {
    avg.precision += c.metrics.precision;
    avg.recall += c.metrics.recall;
    avg.f1 += c.metrics.f1;
  }
  const auto n = static_cast<double>(cases.size());
  avg.precision /= n;
  avg.recall /= n;
  avg.f1 /= n;
  return avg;
}

EvalReport evaluate(const Predictor& predictor, std::vector<EvalCase> cases, const std::string& model,
                    const std::string& split, int threads) {
  if (cases.empty()) throw DataError("NoCases", "no evaluation cases for split " + split);
  std::sort(cases.begin(), cases.end(), [](const EvalCase& a, const EvalCase& b) { return a.traj_id < b.traj_id; });

  std::vector<CaseResult> results(cases.size());
  auto run = [&](std::size_t i) {
    const EvalCase& c = cases[i];
    try {
      const Itinerary it = predictor(c.query);
      const std::set<PoiId> predicted(it.pois.begin(), it.pois.end());
      results[i] = CaseResult{c.traj_id, it.pois, c.truth, set_metrics(predicted, c.truth)};
    } catch (const Error& e) {
      throw Error(e.kind(), e.name(), "traj " + c.traj_id.str() + ": " + e.what());
    } catch (const std::exception& e) {
      throw InternalError("EvaluationFailed", "traj " + c.traj_id.str() + ": " + e.what());
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                        cases.size());
  if (n_threads == 1) {
    for (std::size_t i = 0; i < cases.size(); ++i) run(i);
  } else {
    // Workers record the first failure by case index so the reported error
    // does not depend on scheduling.
    std::vector<std::exception_ptr> errors(cases.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
          for (std::size_t i = t; i < cases.size(); i += n_threads) {
            try {
              run(i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalReport report;
  report.model = model;
  report.split = split;
  report.cases = std::move(results);
  report.average = macro_average(report.cases);
  return report;
}

std::vector<int> default_epoch_grid() { return {1, 2, 5, 10, 20, 35, 50, 75, 100}; }

std::vector<int> parse_epoch_grid(const std::string& text) {
  std::vector<int> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      grid.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad epoch grid entry '" + item + "'");
    }
  }
  if (grid.empty()) throw ConfigError("epoch grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 1 || (i > 0 && grid[i] <= grid[i - 1])) {
      throw ConfigError("epoch grid must be positive and strictly ascending");
    }
  }
  return grid;
}

SweepResult sweep_epochs(ModelParams init, const std::vector<Sentence>& corpus, const Vocab& vocab,
                         const std::vector<int>& grid,
                         const std::function<double(const ModelParams&)>& validation_f1,
                         const TrainOptions& options) {
  if (grid.empty()) throw ConfigError("epoch grid is empty");
  Trainer trainer(std::move(init), corpus, vocab, options);
  SweepResult result;
  double best_f1 = -1.0;
  for (int target : grid) {
    if (target <= trainer.epochs_done()) throw ConfigError("epoch grid must be strictly ascending");
    trainer.run_epochs(target - trainer.epochs_done());
    const double f1 = validation_f1(trainer.params());
    result.trace.push_back({target, f1, trainer.loss_trace()});
    if (f1 > best_f1) {
      best_f1 = f1;
      result.best_epochs = target;
      result.best = trainer.params();
    }
  }
  result.best.config.epochs = result.best_epochs;
  return result;
}

void TestSplitAudit::touch(const std::string& model_key) {
  if (!seen_.insert(model_key).second) {
    throw InternalError("TestSplitReused", "test split already used for model " + model_key);
  }
  log_.push_back(model_key);
}

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_report_jsonl(std::ostream& out, const EvalReport& report) {
  for (const auto& c : report.cases) {
    nlohmann::ordered_json j;
    j["traj_id"] = c.traj_id.str();
    j["itinerary"] = c.itinerary;
    j["truth"] = c.truth;
    j["precision"] = c.metrics.precision;
    j["recall"] = c.metrics.recall;
    j["f1"] = c.metrics.f1;
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json s;
  s["summary"] = true;
  s["model"] = report.model;
  s["split"] = report.split;
  s["avg_precision"] = report.average.precision;
  s["avg_recall"] = report.average.recall;
  s["avg_f1"] = report.average.f1;
  s["n_cases"] = report.cases.size();
  out << s.dump() << '\n';
}

void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "model,split,avg_precision,avg_recall,avg_f1,n_cases\n";
  for (const auto& r : reports) {
    out << r.model << ',' << r.split << ',' << fixed6(r.average.precision) << ',' << fixed6(r.average.recall) << ','
        << fixed6(r.average.f1) << ',' << r.cases.size() << '\n';
  }
}

CombinedScores combine_datasets(const std::vector<EvalReport>& per_dataset) {
  if (per_dataset.empty()) throw DataError("NoCases", "no dataset reports to combine");
  CombinedScores out;
  std::vector<CaseResult> all;
  for (const auto& r : per_dataset) {
    out.macro.precision += r.average.precision;
    out.macro.recall += r.average.recall;
    out.macro.f1 += r.average.f1;
    all.insert(all.end(), r.cases.begin(), r.cases.end());
  }
  const auto n = static_cast<double>(per_dataset.size());
  out.macro.precision /= n;
  out.macro.recall /= n;
  out.macro.f1 /= n;
  out.pooled = macro_average(all);
  out.n_cases = all.size();
  return out;
}

}  // namespace btrec
