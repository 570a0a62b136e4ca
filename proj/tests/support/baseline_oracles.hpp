#pragma once

// Deliberately naive reimplementations of the baselines, used to check the
// real ones. Nothing here shares code with src/.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "btrec/baselines.hpp"
#include "btrec/random.hpp"

namespace btrec::oracles {

inline std::vector<PoiSequence> random_sequences(Rng& rng, std::size_t n, int alphabet, int min_len, int max_len) {
  std::vector<PoiSequence> out(n);
  for (auto& s : out) {
    const int len = min_len + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_len - min_len + 1)));
    for (int i = 0; i < len; ++i) s.push_back(static_cast<PoiId>(uniform_index(rng, static_cast<std::uint64_t>(alphabet))) + 1);
  }
  return out;
}

inline std::size_t bigram_count(const std::vector<PoiSequence>& seqs, PoiId a, PoiId b) {
  std::size_t n = 0;
  for (const auto& s : seqs) {
    for (std::size_t i = 1; i < s.size(); ++i) n += s[i - 1] == a && s[i] == b;
  }
  return n;
}

/// LZ78 over a map keyed by whole phrases instead of a trie.
struct Lz78Reference {
  std::map<PoiSequence, std::size_t> count;  // every trie path -> visits
  std::vector<PoiSequence> phrases;
  std::size_t depth = 0;

  explicit Lz78Reference(const std::vector<PoiSequence>& seqs) {
    for (const auto& s : seqs) {
      PoiSequence w;
      for (PoiId sym : s) {
        PoiSequence next = w;
        next.push_back(sym);
        if (count.count(next) && count[next] > 0) {
          ++count[next];
          w = next;
          continue;
        }
        count[next] = 1;
        if (!w.empty() && !count.count(PoiSequence{sym})) count[PoiSequence{sym}] = 0;
        phrases.push_back(next);
        depth = std::max(depth, next.size());
        w.clear();
      }
    }
  }

  std::optional<PoiId> predict(const PoiSequence& ctx, const std::set<PoiId>& excluded) const {
    for (std::size_t k = std::min(ctx.size(), depth) + 1; k-- > 0;) {
      const PoiSequence suffix(ctx.end() - static_cast<std::ptrdiff_t>(k), ctx.end());
      if (k > 0 && !count.count(suffix)) continue;
      std::optional<PoiId> best;
      std::size_t best_count = 0;
      for (const auto& [path, c] : count) {
        if (path.size() != k + 1 || !std::equal(suffix.begin(), suffix.end(), path.begin())) continue;
        const PoiId sym = path.back();
        if (excluded.count(sym)) continue;
        if (!best || c > best_count || (c == best_count && sym < *best)) {
          best = sym;
          best_count = c;
        }
      }
      if (best) return best;
    }
    return std::nullopt;
  }
};

inline std::vector<PoiSequence> lz78_phrases(const std::vector<PoiSequence>& seqs) {
  return Lz78Reference(seqs).phrases;
}

/// Scans every training sequence directly: a sequence is similar when it
/// contains every symbol of the last (up to 3) context symbols; each symbol
/// after the earliest point covering them scores 1/distance.
inline std::optional<PoiId> cpt_predict(const std::vector<PoiSequence>& seqs, const PoiSequence& ctx,
                                        const std::set<PoiId>& excluded) {
  const std::size_t k = std::min<std::size_t>(ctx.size(), 3);
  if (k == 0) return std::nullopt;
  const std::set<PoiId> window(ctx.end() - static_cast<std::ptrdiff_t>(k), ctx.end());
  std::map<PoiId, double> score;
  for (const auto& s : seqs) {
    std::size_t cut = s.size();
    for (std::size_t i = 0; i < s.size() && cut == s.size(); ++i) {
      const std::set<PoiId> prefix(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(i + 1));
      if (std::includes(prefix.begin(), prefix.end(), window.begin(), window.end())) cut = i;
    }
    if (cut == s.size()) continue;
    for (std::size_t j = cut + 1; j < s.size(); ++j) score[s[j]] += 1.0 / static_cast<double>(j - cut);
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

}  // namespace btrec::oracles
