#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "btrec/ingest.hpp"
#include "btrec/recommender.hpp"

namespace btrec {

using PoiSequence = std::vector<PoiId>;

/// Next-POI predictor trained on POI sequences. predict_next never returns
/// an excluded POI; ties go to the smallest POI id.
class NextSymbolModel {
 public:
  virtual ~NextSymbolModel() = default;
  virtual std::string name() const = 0;
  virtual void train(const std::vector<PoiSequence>& sequences) = 0;
  virtual std::optional<PoiId> predict_next(std::span<const PoiId> context,
                                            const std::set<PoiId>& excluded) const = 0;
};

/// Order-1 Markov chain. Falls back to the most frequent symbol overall when
/// the last context symbol has no usable successor.
class MarkovModel final : public NextSymbolModel {
 public:
  std::string name() const override { return "markov"; }
  void train(const std::vector<PoiSequence>& sequences) override;
  std::optional<PoiId> predict_next(std::span<const PoiId> context, const std::set<PoiId>& excluded) const override;

  std::size_t count(PoiId from, PoiId to) const;
  const std::map<PoiId, std::map<PoiId, std::size_t>>& transitions() const { return transitions_; }
  const std::map<PoiId, std::size_t>& marginals() const { return marginals_; }

 private:
  std::map<PoiId, std::map<PoiId, std::size_t>> transitions_;
  std::map<PoiId, std::size_t> marginals_;
};

/// LZ78 phrase trie. Each training sequence is parsed from the root; every
/// node counts how often the parse passed through it. Symbols first seen
/// deeper in the trie also get a zero-count root child so prediction can
/// back off to them; the parse treats such a placeholder as absent.
class Lz78Model final : public NextSymbolModel {
 public:
  struct Node {
    std::map<PoiId, std::size_t> children;  // symbol -> node index
    std::size_t count = 0;
  };

  std::string name() const override { return "lz78"; }
  void train(const std::vector<PoiSequence>& sequences) override;
  std::optional<PoiId> predict_next(std::span<const PoiId> context, const std::set<PoiId>& excluded) const override;

  const std::vector<Node>& nodes() const { return nodes_; }
  /// Phrases added during training, in parse order.
  const std::vector<PoiSequence>& phrases() const { return phrases_; }

 private:
  std::vector<Node> nodes_{Node{}};
  std::vector<PoiSequence> phrases_;
  std::size_t depth_ = 0;
};

/// Compact Prediction Tree: a prefix tree holding every training sequence,
/// a lookup table from sequence id to its last tree node, and an inverted
/// index from symbol to the ids of the sequences containing it.
class CptModel final : public NextSymbolModel {
 public:
  static constexpr std::size_t kContextWindow = 3;

  std::string name() const override { return "cpt"; }
  void train(const std::vector<PoiSequence>& sequences) override;
  std::optional<PoiId> predict_next(std::span<const PoiId> context, const std::set<PoiId>& excluded) const override;

  /// Walks the tree from a sequence's lookup-table node back to the root.
  PoiSequence reconstruct(std::size_t seq_id) const;
  std::size_t size() const { return lookup_.size(); }
  const std::map<PoiId, std::set<std::size_t>>& inverted_index() const { return inverted_; }

 private:
  struct Node {
    PoiId symbol = 0;
    std::size_t parent = 0;
    std::map<PoiId, std::size_t> children;
  };

  std::vector<Node> nodes_{Node{}};
  std::vector<std::size_t> lookup_;
  std::map<PoiId, std::set<std::size_t>> inverted_;
};

std::unique_ptr<NextSymbolModel> make_baseline(const std::string& name);

/// Appends predictions after the source (never the destination or a POI
/// already present, never one that breaks the budget) until the predictor
/// gives up, then closes with the destination.
Itinerary extend_to_itinerary(const NextSymbolModel& model, const ItineraryQuery& query,
                              const DurationTable& durations, const std::vector<PoiId>& universe);

}  // namespace btrec
