#include "btrec/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

#include "btrec/error.hpp"
#include "btrec/random.hpp"

namespace btrec {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double bootstrap_quantile(const std::vector<double>& xs, std::uint64_t seed, int resamples, double level) {
  const std::size_t n = xs.size();
  std::uint64_t state = seed;
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += xs[splitmix64(state) % n];
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double h = static_cast<double>(resamples - 1) * level;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= means.size()) return means[lo];
  return means[lo] + (h - static_cast<double>(lo)) * (means[lo + 1] - means[lo]);
}

}  // namespace

double DurationTable::duration(PoiId poi) const {
  auto it = estimate.find(poi);
  return it == estimate.end() ? fallback : it->second;
}

DurationTable estimate_duration(const std::map<PoiId, std::vector<double>>& samples,
                                const std::vector<PoiId>& universe, const BootstrapOptions& options) {
  if (options.resamples < 1) throw ConfigError("bootstrap resamples must be at least 1");
  if (!(options.level > 0.0 && options.level < 1.0)) throw ConfigError("bootstrap level must be in (0, 1)");
  DurationTable table;
  table.samples = samples;
  std::vector<double> pooled;
  for (const auto& [poi, xs] : samples) pooled.insert(pooled.end(), xs.begin(), xs.end());
  table.fallback = pooled.empty() ? kDefaultDuration : median(pooled);
  if (!(table.fallback > 0.0)) table.fallback = kDefaultDuration;

  for (const auto& [poi, xs] : samples) {
    double est = table.fallback;
    if (xs.size() >= 2) {
      est = bootstrap_quantile(xs, derive_seed(options.seed, {static_cast<std::uint64_t>(poi)}),
                               options.resamples, options.level);
      if (!(est > 0.0)) est = table.fallback;
    }
    table.estimate[poi] = est;
  }
  for (PoiId poi : universe) table.estimate.emplace(poi, table.fallback);
  return table;
}

void write_durations(std::ostream& out, const DurationTable& table) {
  out << "poi_id\testimate_seconds\tn_samples\n";
  char buf[64];
  for (const auto& [poi, est] : table.estimate) {
    auto it = table.samples.find(poi);
    std::snprintf(buf, sizeof buf, "%.6f", est);
    out << poi << '\t' << buf << '\t' << (it == table.samples.end() ? 0 : it->second.size()) << '\n';
  }
}

double Itinerary::total_duration() const {
  double s = 0.0;
  for (double d : durations) s += d;
  return s;
}

Recommender::Recommender(const ModelParams& params, const Vocab& vocab, const PoiTable& pois,
                         const ProfileTable& profiles, const DurationTable& durations)
    : params_(params), vocab_(vocab), pois_(pois), profiles_(profiles), durations_(durations), users_(vocab.users()) {
  if (static_cast<std::size_t>(params.config.vocab_size) != vocab.size()) {
    throw ConfigError("model and vocabulary sizes differ");
  }
}

std::vector<PoiId> Recommender::all_pois() const {
  std::vector<PoiId> out;
  for (TokenId t : vocab_.poi_tokens()) out.push_back(*vocab_.poi_of(t));
  std::sort(out.begin(), out.end());
  return out;
}

TokenId Recommender::category_of(PoiId poi) const {
  auto it = pois_.find(poi);
  if (it == pois_.end()) throw UnknownPoi(poi);
  return vocab_.find(category_token(it->second.theme)).value_or(special::unk);
}

std::vector<TokenId> Recommender::query_sentence(const std::string& user, const std::vector<PoiId>& seq,
                                                 std::size_t gap) const {
  std::string home;
  if (vocab_.mode() == CorpusMode::demographic) {
    home = home_of(profiles_, user);
    if (!home.empty() && !vocab_.find(home_token(home))) home.clear();
  }
  std::vector<TokenId> ids{special::cls};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i == gap) append_block(ids, vocab_, user, home, special::mask, special::unk);
    append_block(ids, vocab_, user, home, vocab_.poi_id_token(seq[i]), category_of(seq[i]));
  }
  ids.push_back(special::sep);
  return ids;
}

std::string Recommender::select_reference_user(const ItineraryQuery& query, std::size_t* calls) const {
  if (vocab_.mode() == CorpusMode::plain) return {};
  if (query.known_user && vocab_.find(user_token(*query.known_user))) return *query.known_user;
  if (users_.empty()) throw DataError("NoTrainingUsers", "model vocabulary has no users to select from");

  std::vector<TokenId> candidates;
  for (PoiId p : all_pois()) {
    if (p != query.source && p != query.dest) candidates.push_back(vocab_.poi_id_token(p));
  }
  if (candidates.empty()) throw NoCandidatePois();

  std::string best_user;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& u : users_) {
    const auto sentence = query_sentence(u, {query.source, query.dest}, 1);
    const auto ranked = unmask(params_, sentence, candidates);
    if (calls) ++*calls;
    if (best_user.empty() || ranked.front().score > best) {
      best = ranked.front().score;
      best_user = u;
    }
  }
  return best_user;
}

std::optional<Insertion> Recommender::insertion_step(const std::vector<PoiId>& seq, const std::string& user,
                                                     const std::vector<PoiId>& candidates,
                                                     std::size_t* calls) const {
  if (seq.size() < 2) throw DataError("BadSequence", "insertion needs both endpoints in the sequence");
  std::vector<TokenId> tokens;
  for (PoiId p : candidates) {
    if (std::find(seq.begin(), seq.end(), p) == seq.end()) tokens.push_back(vocab_.poi_id_token(p));
  }
  if (tokens.empty()) return std::nullopt;

  std::optional<Insertion> best;
  for (std::size_t gap = 1; gap < seq.size(); ++gap) {
    const auto ranked = unmask(params_, query_sentence(user, seq, gap), tokens);
    if (calls) ++*calls;
    for (const auto& st : ranked) {
      const PoiId poi = *vocab_.poi_of(st.token);
      if (!best || st.score > best->score || (st.score == best->score && gap == best->gap && poi < best->poi)) {
        best = Insertion{gap, poi, st.score};
      }
    }
  }
  return best;
}

Itinerary Recommender::recommend(const ItineraryQuery& query, const RecommendOptions& options) const {
  if (query.time_budget < 0.0) throw ConfigError("time budget must be non-negative");
  vocab_.poi_id_token(query.source);
  vocab_.poi_id_token(query.dest);

  Itinerary it;
  std::vector<PoiId> seq{query.source, query.dest};
  const auto pois = all_pois();
  const bool any_candidate = std::any_of(pois.begin(), pois.end(), [&](PoiId p) {
    return p != query.source && p != query.dest;
  });
  if (any_candidate) {
    it.reference_user = select_reference_user(query, &it.unmask_calls);
  } else if (vocab_.mode() != CorpusMode::plain && query.known_user) {
    it.reference_user = *query.known_user;
  }

  const std::size_t block = block_size(vocab_.mode());
  const auto max_len = static_cast<std::size_t>(params_.config.max_len);
  double used = durations_.duration(query.source) + durations_.duration(query.dest);
  for (;;) {
    if ((seq.size() + 1) * block + 2 > max_len) break;
    std::vector<PoiId> candidates;
    for (PoiId p : pois) {
      if (std::find(seq.begin(), seq.end(), p) != seq.end()) continue;
      // Budget guard: only POIs that still fit may be proposed.
      if (!options.faithful_loop && used + durations_.duration(p) > query.time_budget) continue;
      candidates.push_back(p);
    }
    const auto step = insertion_step(seq, it.reference_user, candidates, &it.unmask_calls);
    if (!step) break;
    seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(step->gap), step->poi);
    used += durations_.duration(step->poi);
    if (options.faithful_loop && query.time_budget < used) break;
  }

  it.pois = seq;
  for (PoiId p : seq) it.durations.push_back(durations_.duration(p));
  return it;
}

std::string itinerary_json(const ItineraryQuery& query, const Itinerary& itinerary, const std::string& model) {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["source"] = query.source;
  j["dest"] = query.dest;
  j["budget_minutes"] = query.time_budget / 60.0;
  j["known_user"] = query.known_user ? nlohmann::ordered_json(*query.known_user) : nlohmann::ordered_json();
  j["reference_user"] = itinerary.reference_user;
  auto stops = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < itinerary.pois.size(); ++i) {
    stops.push_back({{"poi", itinerary.pois[i]}, {"minutes", itinerary.durations[i] / 60.0}});
  }
  j["itinerary"] = std::move(stops);
  j["total_minutes"] = itinerary.total_duration() / 60.0;
  j["unmask_calls"] = itinerary.unmask_calls;
  return j.dump();
}

}  // namespace btrec
