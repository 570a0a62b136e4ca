#include "btrec/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "btrec/digest.hpp"
#include "btrec/error.hpp"

namespace btrec {

namespace {

constexpr char kMagic[8] = {'B', 'T', 'R', 'E', 'C', 'M', 'D', 'L'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    auto raw = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    buf_.append(reinterpret_cast<const char*>(raw.data()), raw.size());
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void put_raw(const char* data, std::size_t n) { buf_.append(data, n); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<unsigned char, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    return std::bit_cast<T>(raw);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CorruptFile("model file truncated");
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& s, std::size_t n) {
  return crc32_of(std::as_bytes(std::span(s.data(), n)));
}

}  // namespace

std::string serialize_model(const ModelParams& params, const Vocab& vocab) {
  const auto& c = params.config;
  Writer w;
  w.put_raw(kMagic, sizeof kMagic);
  w.put(kModelFileVersion);
  w.put(static_cast<std::int32_t>(c.vocab_size));
  w.put(static_cast<std::int32_t>(c.max_len));
  w.put(static_cast<std::int32_t>(c.d_model));
  w.put(static_cast<std::int32_t>(c.n_heads));
  w.put(static_cast<std::int32_t>(c.n_layers));
  w.put(static_cast<std::int32_t>(c.d_ff));
  w.put(c.dropout_rate);
  w.put(c.learning_rate);
  w.put(static_cast<std::int32_t>(c.batch_size));
  w.put(static_cast<std::int32_t>(c.epochs));
  w.put(c.seed);
  w.put(static_cast<std::uint8_t>(c.optimizer == Optimizer::sgd ? 1 : 0));
  w.put(static_cast<std::uint8_t>(vocab.mode()));
  w.put(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& t : vocab.tokens()) w.put_string(t);
  w.put(static_cast<std::uint64_t>(params.values.size()));
  for (float v : params.values) w.put(v);
  w.put(crc_of(w.bytes(), w.bytes().size()));
  return std::move(w.bytes());
}

ModelBundle deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptFile("not a model file");
  }
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFileVersion) throw VersionMismatch(version, kModelFileVersion);
  {
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + body, 4);
    if constexpr (std::endian::native == std::endian::big) stored = __builtin_bswap32(stored);
    if (stored != crc_of(bytes, body)) throw CorruptFile("model file checksum mismatch");
  }

  ModelConfig c;
  c.vocab_size = r.get<std::int32_t>();
  c.max_len = r.get<std::int32_t>();
  c.d_model = r.get<std::int32_t>();
  c.n_heads = r.get<std::int32_t>();
  c.n_layers = r.get<std::int32_t>();
  c.d_ff = r.get<std::int32_t>();
  c.dropout_rate = r.get<double>();
  c.learning_rate = r.get<double>();
  c.batch_size = r.get<std::int32_t>();
  c.epochs = r.get<std::int32_t>();
  c.seed = r.get<std::uint64_t>();
  const auto opt = r.get<std::uint8_t>();
  if (opt > 1) throw CorruptFile("unknown optimizer code");
  c.optimizer = opt == 1 ? Optimizer::sgd : Optimizer::adam;
  const auto mode = r.get<std::uint8_t>();
  if (mode > 2) throw CorruptFile("unknown corpus mode code");
  const auto n_tokens = r.get<std::uint32_t>();
  std::vector<std::string> tokens;
  tokens.reserve(n_tokens);
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(r.get_string());
  Vocab vocab = Vocab::from_tokens(std::move(tokens), static_cast<CorpusMode>(mode));

  ParamLayout layout;
  try {
    layout = ParamLayout::for_config(c);
  } catch (const ConfigError& e) {
    throw CorruptFile(std::string("invalid stored config: ") + e.what());
  }
  if (static_cast<std::size_t>(c.vocab_size) != vocab.size()) throw CorruptFile("vocabulary size mismatch");
  const auto n_params = r.get<std::uint64_t>();
  if (n_params != layout.total) throw CorruptFile("parameter count does not match the stored config");
  ModelParams params{c, std::move(layout), {}};
  params.values.resize(n_params);
  for (auto& v : params.values) v = r.get<float>();
  if (!r.done()) throw CorruptFile("trailing bytes in model file");
  return {std::move(params), std::move(vocab)};
}

void save_model(const std::filesystem::path& path, const ModelParams& params, const Vocab& vocab) {
  const std::string bytes = serialize_model(params, vocab);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("WriteFailed", "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("WriteFailed", "cannot write " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("MissingFile", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace btrec
