#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "btrec/ingest.hpp"
#include "btrec/random.hpp"

namespace btrec {

/// Which token kinds a sentence carries per visit:
///   plain        POI CAT
///   personalized USER POI CAT
///   demographic  USER HOME POI CAT
enum class CorpusMode { plain, personalized, demographic };

std::string_view to_string(CorpusMode mode);
CorpusMode parse_corpus_mode(std::string_view text);
/// Tokens per visit block in `mode`.
std::size_t block_size(CorpusMode mode);

using TokenId = std::int32_t;

namespace special {
constexpr TokenId pad = 0;
constexpr TokenId cls = 1;
constexpr TokenId sep = 2;
constexpr TokenId mask = 3;
constexpr TokenId unk = 4;
constexpr TokenId unk_home = 5;
constexpr TokenId count = 6;
}  // namespace special

std::string poi_token(PoiId poi);
std::string category_token(std::string_view theme);
std::string user_token(std::string_view user_id);
std::string home_token(std::string_view home_key);

/// Dense token <-> id map. Ids 0..5 are the reserved tokens, then the POI,
/// CAT, USER and HOME namespaces, each sorted lexicographically.
class Vocab {
 public:
  /// Rebuilds a vocabulary from its token list (ids are positions).
  static Vocab from_tokens(std::vector<std::string> tokens, CorpusMode mode);

  std::size_t size() const { return tokens_.size(); }
  CorpusMode mode() const { return mode_; }

  TokenId id(std::string_view token) const;  // throws TokenNotInVocab
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_poi(TokenId id) const;
  bool is_category(TokenId id) const;
  std::optional<PoiId> poi_of(TokenId id) const;
  TokenId poi_id_token(PoiId poi) const;  // throws TokenNotInVocab

  /// POI token ids in ascending id order.
  const std::vector<TokenId>& poi_tokens() const { return poi_tokens_; }
  /// User ids that own a USER token, sorted.
  std::vector<std::string> users() const;

  /// "token<TAB>id" per line.
  void write(std::ostream& out) const;

  bool operator==(const Vocab& other) const {
    return mode_ == other.mode_ && tokens_ == other.tokens_;
  }

 private:
  void index();

  CorpusMode mode_ = CorpusMode::plain;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::int8_t> kind_;  // per token: 0 other, 1 POI, 2 CAT
  std::unordered_map<TokenId, PoiId> poi_by_token_;
  std::unordered_map<PoiId, TokenId> token_by_poi_;
  std::vector<TokenId> poi_tokens_;
};

/// Vocabulary covering every POI in `pois`, their themes and, depending on
/// the mode, the users of `trajs` and their home keys.
Vocab build_vocab(const std::vector<Trajectory>& trajs, const PoiTable& pois,
                  const ProfileTable& profiles, CorpusMode mode);

struct Sentence {
  std::vector<TokenId> ids;
  TrajId origin;
};

/// Home key of `user` or "" when unknown.
std::string home_of(const ProfileTable& profiles, const std::string& user);

/// Appends one visit block. `poi` may be special::mask and `category` may be
/// special::unk for query blocks.
void append_block(std::vector<TokenId>& out, const Vocab& vocab, const std::string& user,
                  const std::string& home_key, TokenId poi, TokenId category);

/// Encodes a trajectory as [CLS] block... [SEP]; trailing blocks that do not
/// fit in max_len are dropped.
Sentence trajectory_to_sentence(const Trajectory& traj, const ProfileTable& profiles,
                                const PoiTable& pois, CorpusMode mode, const Vocab& vocab,
                                std::size_t max_len = 128);

std::vector<Sentence> build_corpus(const std::vector<Trajectory>& trajs, const ProfileTable& profiles,
                                   const PoiTable& pois, const Vocab& vocab, std::size_t max_len = 128);

/// POI ids of the POI tokens in `sentence`, in order.
std::vector<PoiId> sentence_pois(const Sentence& sentence, const Vocab& vocab);

struct MaskedInstance {
  std::vector<TokenId> input;
  /// (position, original token) for every selected position, by position.
  std::vector<std::pair<std::size_t, TokenId>> labels;
};

struct MaskOptions {
  double mask_rate = 0.15;
  /// When a POI is replaced by [MASK], also replace the CAT token of its
  /// block by [UNK] (queries never know the category of the masked stop).
  bool hide_masked_category = true;
};

/// Selects POI positions with probability mask_rate (at least one if any
/// exist) and applies the 80/10/10 [MASK]/random-POI/keep substitution.
MaskedInstance mask_for_training(const Sentence& sentence, const Vocab& vocab, Rng& rng,
                                 const MaskOptions& options = {});

/// One sentence per line as space-separated tokens.
void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences, const Vocab& vocab);

}  // namespace btrec
