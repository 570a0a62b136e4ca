#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "btrec/corpus.hpp"
#include "btrec/ingest.hpp"
#include "btrec/mlm.hpp"

namespace btrec {

inline constexpr double kDefaultDuration = 1800.0;

struct BootstrapOptions {
  int resamples = 1000;
  double level = 0.80;
  std::uint64_t seed = 1;
};

/// Per-POI dwell estimates in seconds.
struct DurationTable {
  std::map<PoiId, std::vector<double>> samples;
  std::map<PoiId, double> estimate;
  double fallback = kDefaultDuration;

  /// Estimate for `poi`, or the fallback when it was never estimated.
  double duration(PoiId poi) const;
};

/// Bootstrap estimate of each POI's dwell: the `level` quantile (linear
/// interpolation between order statistics) of the means of B resamples.
/// POIs with fewer than two samples, and every POI in `universe` without
/// samples, get the fallback: the median of all samples (1800 s if none).
///
/// Resampling protocol, per POI: state = derive_seed(seed, {poi}); each
/// resampled index is splitmix64(state) % n, drawn B x n times in order.
DurationTable estimate_duration(const std::map<PoiId, std::vector<double>>& samples,
                                const std::vector<PoiId>& universe, const BootstrapOptions& options = {});

void write_durations(std::ostream& out, const DurationTable& table);

struct ItineraryQuery {
  PoiId source = 0;
  PoiId dest = 0;
  double time_budget = 0.0;  // seconds
  std::optional<std::string> known_user;
};

struct Itinerary {
  std::vector<PoiId> pois;
  std::vector<double> durations;  // seconds, one per POI
  std::string reference_user;     // empty when the model has no user tokens
  std::size_t unmask_calls = 0;

  double total_duration() const;
};

struct RecommendOptions {
  /// Insert first and test the budget afterwards (may overshoot by one POI).
  bool faithful_loop = false;
};

struct Insertion {
  std::size_t gap = 0;  // insert before seq[gap]
  PoiId poi = 0;
  double score = 0.0;
};

/// Stateless decoder over a trained encoder. All references must outlive it.
class Recommender {
 public:
  Recommender(const ModelParams& params, const Vocab& vocab, const PoiTable& pois, const ProfileTable& profiles,
              const DurationTable& durations);

  const Vocab& vocab() const { return vocab_; }

  /// Query sentence for `user` over `seq` with a masked block before
  /// seq[gap] (gap in 1..seq.size()-1).
  std::vector<TokenId> query_sentence(const std::string& user, const std::vector<PoiId>& seq, std::size_t gap) const;

  /// Reference user for the query: the known user when it has a USER token,
  /// otherwise the training user whose two-endpoint query has the highest
  /// top candidate score (ties to the smaller user id). Empty in plain mode.
  /// `calls` is incremented once per unmask query issued.
  std::string select_reference_user(const ItineraryQuery& query, std::size_t* calls = nullptr) const;

  /// Best (gap, POI) over every gap of `seq` and every POI in `candidates`
  /// (ties: smaller gap, then smaller POI id). One unmask query per gap.
  std::optional<Insertion> insertion_step(const std::vector<PoiId>& seq, const std::string& user,
                                          const std::vector<PoiId>& candidates, std::size_t* calls = nullptr) const;

  Itinerary recommend(const ItineraryQuery& query, const RecommendOptions& options = {}) const;

 private:
  std::vector<PoiId> all_pois() const;
  TokenId category_of(PoiId poi) const;

  const ModelParams& params_;
  const Vocab& vocab_;
  const PoiTable& pois_;
  const ProfileTable& profiles_;
  const DurationTable& durations_;
  std::vector<std::string> users_;
};

/// One JSON object (no trailing newline) describing a query and its answer.
std::string itinerary_json(const ItineraryQuery& query, const Itinerary& itinerary, const std::string& model);

}  // namespace btrec
