#include "btrec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <set>

#include "btrec/error.hpp"

namespace btrec {

namespace {

constexpr std::string_view kPoiPrefix = "POI:";
constexpr std::string_view kCatPrefix = "CAT:";
constexpr std::string_view kUserPrefix = "USER:";
constexpr std::string_view kHomePrefix = "HOME:";

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]", "[UNK_HOME]"};
  return tokens;
}

}  // namespace

std::string_view to_string(CorpusMode mode) {
  switch (mode) {
    case CorpusMode::plain: return "plain";
    case CorpusMode::personalized: return "personalized";
    case CorpusMode::demographic: return "demographic";
  }
  return "plain";
}

CorpusMode parse_corpus_mode(std::string_view text) {
  if (text == "plain") return CorpusMode::plain;
  if (text == "personalized") return CorpusMode::personalized;
  if (text == "demographic") return CorpusMode::demographic;
  throw ConfigError("unknown corpus mode '" + std::string(text) + "'");
}

std::size_t block_size(CorpusMode mode) {
  switch (mode) {
    case CorpusMode::plain: return 2;
    case CorpusMode::personalized: return 3;
    case CorpusMode::demographic: return 4;
  }
  return 2;
}

std::string poi_token(PoiId poi) { return std::string(kPoiPrefix) + std::to_string(poi); }
std::string category_token(std::string_view theme) { return std::string(kCatPrefix) + std::string(theme); }
std::string user_token(std::string_view user_id) { return std::string(kUserPrefix) + std::string(user_id); }
std::string home_token(std::string_view home_key) { return std::string(kHomePrefix) + std::string(home_key); }

Vocab Vocab::from_tokens(std::vector<std::string> tokens, CorpusMode mode) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw CorruptFile("vocabulary does not start with the reserved tokens");
  }
  Vocab v;
  v.mode_ = mode;
  v.tokens_ = std::move(tokens);
  v.index();
  return v;
}

void Vocab::index() {
  ids_.clear();
  kind_.assign(tokens_.size(), 0);
  poi_by_token_.clear();
  token_by_poi_.clear();
  poi_tokens_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const std::string& t = tokens_[i];
    if (!ids_.emplace(t, id).second) throw CorruptFile("duplicate token " + t);
    if (t.starts_with(kPoiPrefix)) {
      PoiId poi = 0;
      const char* first = t.data() + kPoiPrefix.size();
      auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), poi);
      if (ec != std::errc() || ptr != t.data() + t.size()) throw CorruptFile("malformed POI token " + t);
      kind_[i] = 1;
      poi_by_token_[id] = poi;
      token_by_poi_[poi] = id;
      poi_tokens_.push_back(id);
    } else if (t.starts_with(kCatPrefix)) {
      kind_[i] = 2;
    }
  }
}

TokenId Vocab::id(std::string_view token) const {
  if (auto found = find(token)) return *found;
  throw TokenNotInVocab(std::string(token));
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

bool Vocab::is_poi(TokenId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < kind_.size() && kind_[static_cast<std::size_t>(id)] == 1;
}

bool Vocab::is_category(TokenId id) const {
  return id >= 0 && static_cast<std::size_t>(id) < kind_.size() && kind_[static_cast<std::size_t>(id)] == 2;
}

std::optional<PoiId> Vocab::poi_of(TokenId id) const {
  auto it = poi_by_token_.find(id);
  if (it == poi_by_token_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::poi_id_token(PoiId poi) const {
  auto it = token_by_poi_.find(poi);
  if (it == token_by_poi_.end()) throw TokenNotInVocab(poi_token(poi));
  return it->second;
}

std::vector<std::string> Vocab::users() const {
  std::vector<std::string> out;
  for (const auto& t : tokens_) {
    if (t.starts_with(kUserPrefix)) out.push_back(t.substr(kUserPrefix.size()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Vocab::write(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocab build_vocab(const std::vector<Trajectory>& trajs, const PoiTable& pois,
                  const ProfileTable& profiles, CorpusMode mode) {
  std::set<std::string> poi_toks, cat_toks, user_toks, home_toks;
  for (const auto& [id, p] : pois) {
    poi_toks.insert(poi_token(id));
    cat_toks.insert(category_token(p.theme));
  }
  if (mode != CorpusMode::plain) {
    for (const auto& t : trajs) {
      user_toks.insert(user_token(t.user_id()));
      if (mode == CorpusMode::demographic) {
        const std::string home = home_of(profiles, t.user_id());
        if (!home.empty()) home_toks.insert(home_token(home));
      }
    }
  }
  std::vector<std::string> tokens = reserved_tokens();
  for (const auto* group : {&poi_toks, &cat_toks, &user_toks, &home_toks}) {
    tokens.insert(tokens.end(), group->begin(), group->end());
  }
  return Vocab::from_tokens(std::move(tokens), mode);
}

std::string home_of(const ProfileTable& profiles, const std::string& user) {
  auto it = profiles.find(user);
  return it == profiles.end() ? std::string() : it->second.home_key();
}

void append_block(std::vector<TokenId>& out, const Vocab& vocab, const std::string& user,
                  const std::string& home_key, TokenId poi, TokenId category) {
  if (vocab.mode() != CorpusMode::plain) out.push_back(vocab.id(user_token(user)));
  if (vocab.mode() == CorpusMode::demographic) {
    out.push_back(home_key.empty() ? special::unk_home : vocab.id(home_token(home_key)));
  }
  out.push_back(poi);
  out.push_back(category);
}

Sentence trajectory_to_sentence(const Trajectory& traj, const ProfileTable& profiles,
                                const PoiTable& pois, CorpusMode mode, const Vocab& vocab,
                                std::size_t max_len) {
  if (vocab.mode() != mode) throw ConfigError("vocabulary was built for a different corpus mode");
  const std::size_t block = block_size(mode);
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  const std::size_t max_blocks = (max_len - 2) / block;

  Sentence s;
  s.origin = traj.id;
  s.ids.push_back(special::cls);
  const std::string home = mode == CorpusMode::demographic ? home_of(profiles, traj.user_id()) : std::string();
  for (std::size_t j = 0; j < traj.visits.size() && j < max_blocks; ++j) {
    const PoiId poi = traj.visits[j].poi_id;
    auto it = pois.find(poi);
    if (it == pois.end()) throw UnknownPoi(poi);
    append_block(s.ids, vocab, traj.user_id(), home, vocab.poi_id_token(poi),
                 vocab.id(category_token(it->second.theme)));
  }
  s.ids.push_back(special::sep);
  return s;
}

std::vector<Sentence> build_corpus(const std::vector<Trajectory>& trajs, const ProfileTable& profiles,
                                   const PoiTable& pois, const Vocab& vocab, std::size_t max_len) {
  std::vector<Sentence> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(trajectory_to_sentence(t, profiles, pois, vocab.mode(), vocab, max_len));
  return out;
}

std::vector<PoiId> sentence_pois(const Sentence& sentence, const Vocab& vocab) {
  std::vector<PoiId> out;
  for (TokenId id : sentence.ids) {
    if (auto poi = vocab.poi_of(id)) out.push_back(*poi);
  }
  return out;
}

MaskedInstance mask_for_training(const Sentence& sentence, const Vocab& vocab, Rng& rng,
                                 const MaskOptions& options) {
  MaskedInstance inst;
  inst.input = sentence.ids;
  std::vector<std::size_t> poi_positions;
  for (std::size_t i = 0; i < sentence.ids.size(); ++i) {
    if (vocab.is_poi(sentence.ids[i])) poi_positions.push_back(i);
  }
  std::vector<std::size_t> selected;
  for (std::size_t pos : poi_positions) {
    if (uniform01(rng) < options.mask_rate) selected.push_back(pos);
  }
  if (selected.empty() && !poi_positions.empty()) {
    selected.push_back(poi_positions[uniform_index(rng, poi_positions.size())]);
  }
  const auto& pois = vocab.poi_tokens();
  for (std::size_t pos : selected) {
    inst.labels.emplace_back(pos, sentence.ids[pos]);
    const double r = uniform01(rng);
    if (r < 0.8) {
      inst.input[pos] = special::mask;
      if (options.hide_masked_category && pos + 1 < inst.input.size() &&
          vocab.is_category(inst.input[pos + 1])) {
        inst.input[pos + 1] = special::unk;
      }
    } else if (r < 0.9) {
      inst.input[pos] = pois[uniform_index(rng, pois.size())];
    }
  }
  return inst;
}

void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences, const Vocab& vocab) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      if (i) out << ' ';
      out << vocab.token(s.ids[i]);
    }
    out << '\n';
  }
}

}  // namespace btrec
