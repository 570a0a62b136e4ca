#include "btrec/baselines.hpp"

#include <algorithm>

#include "btrec/error.hpp"

namespace btrec {

namespace {

// Highest count among non-excluded keys; std::map order gives the smallest
// id on ties.
template <typename Map, typename CountOf>
std::optional<PoiId> best_allowed(const Map& m, const std::set<PoiId>& excluded, CountOf count_of) {
  std::optional<PoiId> best;
  std::size_t best_count = 0;
  for (const auto& entry : m) {
    if (excluded.count(entry.first)) continue;
    const std::size_t c = count_of(entry.second);
    if (!best || c > best_count) {
      best = entry.first;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

// --- Markov -----------------------------------------------------------------

void MarkovModel::train(const std::vector<PoiSequence>& sequences) {
  transitions_.clear();
  marginals_.clear();
  for (const auto& s : sequences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++marginals_[s[i]];
      if (i + 1 < s.size()) ++transitions_[s[i]][s[i + 1]];
    }
  }
}

std::size_t MarkovModel::count(PoiId from, PoiId to) const {
  auto it = transitions_.find(from);
  if (it == transitions_.end()) return 0;
  auto jt = it->second.find(to);
  return jt == it->second.end() ? 0 : jt->second;
}

std::optional<PoiId> MarkovModel::predict_next(std::span<const PoiId> context, const std::set<PoiId>& excluded) const {
  auto identity = [](std::size_t c) { return c; };
  if (!context.empty()) {
    auto it = transitions_.find(context.back());
    if (it != transitions_.end()) {
      if (auto next = best_allowed(it->second, excluded, identity)) return next;
    }
  }
  return best_allowed(marginals_, excluded, identity);
}

// --- LZ78 -------------------------------------------------------------------

void Lz78Model::train(const std::vector<PoiSequence>& sequences) {
  nodes_.assign(1, Node{});
  phrases_.clear();
  depth_ = 0;
  for (const auto& s : sequences) {
    std::size_t node = 0;
    PoiSequence phrase;
    for (PoiId sym : s) {
      phrase.push_back(sym);
      auto it = nodes_[node].children.find(sym);
      if (it != nodes_[node].children.end() && nodes_[it->second].count > 0) {
        node = it->second;
        ++nodes_[node].count;
        continue;
      }
      if (it != nodes_[node].children.end()) {
        // Zero-count placeholder: parse it as a fresh one-symbol phrase.
        nodes_[it->second].count = 1;
        phrases_.push_back(std::move(phrase));
        phrase.clear();
        node = 0;
        continue;
      }
      const std::size_t fresh = nodes_.size();
      nodes_.push_back(Node{{}, 1});
      nodes_[node].children.emplace(sym, fresh);
      if (node != 0 && !nodes_[0].children.count(sym)) {
        nodes_.push_back(Node{});
        nodes_[0].children.emplace(sym, nodes_.size() - 1);
      }
      depth_ = std::max(depth_, phrase.size());
      phrases_.push_back(std::move(phrase));
      phrase.clear();
      node = 0;
    }
  }
}

std::optional<PoiId> Lz78Model::predict_next(std::span<const PoiId> context, const std::set<PoiId>& excluded) const {
  auto count_of = [this](std::size_t idx) { return nodes_[idx].count; };
  for (std::size_t k = std::min(context.size(), depth_) + 1; k-- > 0;) {
    std::size_t node = 0;
    bool matched = true;
    for (std::size_t i = context.size() - k; i < context.size(); ++i) {
      auto it = nodes_[node].children.find(context[i]);
      if (it == nodes_[node].children.end()) {
        matched = false;
        break;
      }
      node = it->second;
    }
    if (!matched) continue;
    if (auto next = best_allowed(nodes_[node].children, excluded, count_of)) return next;
  }
  return std::nullopt;
}

// --- CPT --------------------------------------------------------------------

void CptModel::train(const std::vector<PoiSequence>& sequences) {
  nodes_.assign(1, Node{});
  lookup_.clear();
  inverted_.clear();
  for (const auto& s : sequences) {
    const std::size_t id = lookup_.size();
    std::size_t node = 0;
    for (PoiId sym : s) {
      auto it = nodes_[node].children.find(sym);
      if (it == nodes_[node].children.end()) {
        nodes_.push_back(Node{sym, node, {}});
        it = nodes_[node].children.emplace(sym, nodes_.size() - 1).first;
      }
      node = it->second;
      inverted_[sym].insert(id);
    }
    lookup_.push_back(node);
  }
}

PoiSequence CptModel::reconstruct(std::size_t seq_id) const {
  PoiSequence out;
  for (std::size_t node = lookup_.at(seq_id); node != 0; node = nodes_[node].parent) {
    out.push_back(nodes_[node].symbol);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::optional<PoiId> CptModel::predict_next(std::span<const PoiId> context, const std::set<PoiId>& excluded) const {
  const std::size_t k = std::min(context.size(), kContextWindow);
  if (k == 0) return std::nullopt;
  const std::set<PoiId> window(context.end() - static_cast<std::ptrdiff_t>(k), context.end());

  std::set<std::size_t> similar;
  bool first = true;
  for (PoiId sym : window) {
    auto it = inverted_.find(sym);
    if (it == inverted_.end()) return std::nullopt;
    if (first) {
      similar = it->second;
      first = false;
    } else {
      std::set<std::size_t> both;
      std::set_intersection(similar.begin(), similar.end(), it->second.begin(), it->second.end(),
                            std::inserter(both, both.end()));
      similar = std::move(both);
    }
  }

  std::map<PoiId, double> score;
  for (std::size_t id : similar) {
    const PoiSequence seq = reconstruct(id);
    // The consequent starts right after the point where every window
    // symbol has been seen.
    std::set<PoiId> seen;
    std::size_t cut = seq.size();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (window.count(seq[i])) seen.insert(seq[i]);
      if (seen.size() == window.size()) {
        cut = i;
        break;
      }
    }
    for (std::size_t j = cut + 1; j < seq.size(); ++j) {
      score[seq[j]] += 1.0 / static_cast<double>(j - cut);
    }
  }

  std::optional<PoiId> best;
  double best_score = 0.0;
  for (const auto& [sym, sc] : score) {
    if (excluded.count(sym)) continue;
    if (!best || sc > best_score) {
      best = sym;
      best_score = sc;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::unique_ptr<NextSymbolModel> make_baseline(const std::string& name) {
  if (name == "markov") return std::make_unique<MarkovModel>();
  if (name == "lz78") return std::make_unique<Lz78Model>();
  if (name == "cpt") return std::make_unique<CptModel>();
  throw ConfigError("unknown baseline '" + name + "'");
}

Itinerary extend_to_itinerary(const NextSymbolModel& model, const ItineraryQuery& query,
                              const DurationTable& durations, const std::vector<PoiId>& universe) {
  if (query.time_budget < 0.0) throw ConfigError("time budget must be non-negative");
  std::vector<PoiId> seq{query.source};
  double used = durations.duration(query.source) + durations.duration(query.dest);
  for (;;) {
    std::set<PoiId> excluded(seq.begin(), seq.end());
    excluded.insert(query.dest);
    bool any_fits = false;
    for (PoiId p : universe) {
      if (excluded.count(p)) continue;
      if (used + durations.duration(p) > query.time_budget) {
        excluded.insert(p);
      } else {
        any_fits = true;
      }
    }
    if (!any_fits) break;
    const auto next = model.predict_next(seq, excluded);
    if (!next || used + durations.duration(*next) > query.time_budget) break;
    seq.push_back(*next);
    used += durations.duration(*next);
  }
  seq.push_back(query.dest);

  Itinerary it;
  it.pois = seq;
  for (PoiId p : seq) it.durations.push_back(durations.duration(p));
  return it;
}

}  // namespace btrec
