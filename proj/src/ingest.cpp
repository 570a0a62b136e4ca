#include "btrec/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string_view>
#include <unordered_map>

#include "btrec/error.hpp"

namespace btrec {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int value{};
  if (s.empty()) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string str(s);
    const double v = std::stod(str, &used);
    if (used != str.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Reads the header line; returns false on an empty stream.
bool read_header(std::istream& in, char delimiter, std::vector<std::string>& header) {
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    header.clear();
    for (auto f : split_fields(line, delimiter)) header.emplace_back(f);
    return true;
  }
  return false;
}

std::string sanitize(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') c = '_';
  }
  return out;
}

}  // namespace

std::string UserProfile::home_key() const {
  if (!home_city.empty() && !home_country.empty()) return home_city + "/" + home_country;
  if (!home_city.empty()) return home_city;
  return home_country;
}

std::string TrajId::str() const { return user_id + ":" + std::to_string(seq_id); }

std::vector<PoiId> Trajectory::poi_sequence() const {
  std::vector<PoiId> out;
  out.reserve(visits.size());
  for (const auto& v : visits) out.push_back(v.poi_id);
  return out;
}

CheckinParseResult parse_checkins(std::istream& in, const ColumnSpec& spec) {
  CheckinParseResult result;
  std::vector<std::string> header;
  if (!read_header(in, spec.delimiter, header)) {
    throw DataError("MissingHeader", "check-in stream has no header row");
  }
  auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw MissingColumn(name);
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_photo = *column(spec.photo_id, true);
  const std::size_t c_user = *column(spec.user_id, true);
  const std::size_t c_time = *column(spec.timestamp, true);
  const std::size_t c_poi = *column(spec.poi_id, true);
  const std::size_t c_seq = *column(spec.seq_id, true);
  const std::optional<std::size_t> c_theme = column(spec.theme, false);

  std::string line;
  std::size_t line_no = 1;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    ++data_rows;
    const auto fields = split_fields(line, spec.delimiter);
    if (fields.size() != header.size()) {
      result.bad_rows.push_back({line_no, "field count"});
      continue;
    }
    CheckIn c;
    const auto photo = parse_int<std::int64_t>(fields[c_photo]);
    const auto time = parse_int<std::int64_t>(fields[c_time]);
    const auto poi = parse_int<std::int64_t>(fields[c_poi]);
    const auto seq = parse_int<std::int64_t>(fields[c_seq]);
    const char* reason = nullptr;
    if (!photo) {
      reason = "photo_id";
    } else if (fields[c_user].empty()) {
      reason = "user_id";
    } else if (!time || *time < 0) {
      reason = "timestamp";
    } else if (!poi) {
      reason = "poi_id";
    } else if (!seq) {
      reason = "seq_id";
    }
    if (reason) {
      result.bad_rows.push_back({line_no, reason});
      continue;
    }
    c.photo_id = *photo;
    c.user_id = sanitize(fields[c_user]);
    c.timestamp = *time;
    c.poi_id = *poi;
    c.seq_id = *seq;
    if (c_theme) c.theme = sanitize(fields[*c_theme]);
    result.checkins.push_back(std::move(c));
  }
  if (data_rows > 0 &&
      static_cast<double>(result.bad_rows.size()) > spec.max_bad_fraction * static_cast<double>(data_rows)) {
    const auto& first = result.bad_rows.front();
    throw DataError("TooManyBadRows", std::to_string(result.bad_rows.size()) + " of " +
                                          std::to_string(data_rows) + " rows rejected (first: line " +
                                          std::to_string(first.line_no) + ", " + first.reason + ")");
  }
  return result;
}

PoiTable parse_pois(std::istream& in, char delimiter) {
  PoiTable table;
  std::vector<std::string> header;
  if (!read_header(in, delimiter, header)) return table;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto f = split_fields(line, delimiter);
    const auto id = f.empty() ? std::nullopt : parse_int<std::int64_t>(f[0]);
    if (!id || f.size() < 3) {
      throw DataError("BadRow", "poi file line " + std::to_string(line_no) + ": malformed row");
    }
    Poi p;
    p.poi_id = *id;
    p.name = std::string(f[1]);
    p.theme = f[2].empty() ? "Unknown" : sanitize(f[2]);
    if (f.size() >= 5) {
      p.lat = parse_double(f[3]);
      p.lon = parse_double(f[4]);
    }
    if (!table.emplace(p.poi_id, p).second) {
      throw DataError("DuplicatePoi", "poi " + std::to_string(p.poi_id) + " listed twice");
    }
  }
  return table;
}

PoiTable pois_from_checkins(const std::vector<CheckIn>& checkins) {
  PoiTable table;
  for (const auto& c : checkins) {
    auto [it, inserted] = table.try_emplace(c.poi_id);
    if (inserted) {
      it->second.poi_id = c.poi_id;
      it->second.name = "poi" + std::to_string(c.poi_id);
    }
    if (it->second.theme == "Unknown" && !c.theme.empty()) it->second.theme = c.theme;
  }
  return table;
}

ProfileTable parse_profiles(std::istream& in, char delimiter) {
  ProfileTable table;
  std::vector<std::string> header;
  if (!read_header(in, delimiter, header)) return table;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto f = split_fields(line, delimiter);
    if (f.empty() || f[0].empty()) {
      throw DataError("BadRow", "profile file line " + std::to_string(line_no) + ": missing user_id");
    }
    UserProfile p;
    p.user_id = sanitize(f[0]);
    if (f.size() > 1) p.home_city = sanitize(f[1]);
    if (f.size() > 2) p.home_country = sanitize(f[2]);
    if (!table.emplace(p.user_id, p).second) {
      throw DataError("DuplicateUser", "user " + p.user_id + " listed twice");
    }
  }
  return table;
}

void write_checkins(std::ostream& out, const std::vector<CheckIn>& checkins) {
  std::unordered_map<PoiId, std::size_t> freq;
  for (const auto& c : checkins) ++freq[c.poi_id];
  out << "photoID;userID;dateTaken;poiID;poiTheme;poiFreq;seqID\n";
  for (const auto& c : checkins) {
    out << c.photo_id << ';' << c.user_id << ';' << c.timestamp << ';' << c.poi_id << ';'
        << (c.theme.empty() ? "Unknown" : c.theme) << ';' << freq[c.poi_id] << ';' << c.seq_id << '\n';
  }
}

void write_pois(std::ostream& out, const PoiTable& pois) {
  out << "poi_id,name,theme,lat,lon\n";
  const auto old_precision = out.precision(9);
  for (const auto& [id, p] : pois) {
    out << id << ',' << p.name << ',' << p.theme << ',';
    if (p.lat) out << *p.lat;
    out << ',';
    if (p.lon) out << *p.lon;
    out << '\n';
  }
  out.precision(old_precision);
}

void write_profiles(std::ostream& out, const ProfileTable& profiles) {
  out << "user_id,home_city,home_country\n";
  for (const auto& [id, p] : profiles) out << id << ',' << p.home_city << ',' << p.home_country << '\n';
}

std::vector<Trajectory> build_trajectories(const std::vector<CheckIn>& checkins, const PoiTable& pois) {
  std::map<TrajId, std::vector<const CheckIn*>> groups;
  for (const auto& c : checkins) {
    if (!pois.contains(c.poi_id)) throw UnknownPoi(c.poi_id);
    groups[TrajId{c.user_id, c.seq_id}].push_back(&c);
  }
  std::vector<Trajectory> out;
  out.reserve(groups.size());
  for (auto& [id, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [](const CheckIn* a, const CheckIn* b) {
      return std::tie(a->timestamp, a->photo_id) < std::tie(b->timestamp, b->photo_id);
    });
    Trajectory t;
    t.id = id;
    for (const CheckIn* c : rows) {
      if (!t.visits.empty() && t.visits.back().poi_id == c->poi_id) {
        t.visits.back().departure = c->timestamp;
      } else {
        t.visits.push_back({c->poi_id, c->timestamp, c->timestamp});
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Trajectory> filter_trajectories(std::vector<Trajectory> trajs, int min_pois) {
  if (min_pois < 1) throw ConfigError("min_pois must be at least 1");
  std::erase_if(trajs, [min_pois](const Trajectory& t) {
    std::set<PoiId> distinct;
    for (const auto& v : t.visits) distinct.insert(v.poi_id);
    return distinct.size() < static_cast<std::size_t>(min_pois);
  });
  return trajs;
}

DatasetSplit split_dataset(const std::vector<Trajectory>& trajs, std::array<double, 3> fractions) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (trajs.empty()) throw EmptyDataset();

  std::vector<std::pair<Seconds, TrajId>> order;
  order.reserve(trajs.size());
  for (const auto& t : trajs) order.emplace_back(t.last_time(), t.id);
  std::sort(order.begin(), order.end());

  const auto n = static_cast<double>(order.size());
  // The epsilon keeps products like 0.7 * 1000 from landing just under an integer.
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions[1] * n + 1e-9));

  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dest = i < n_train ? split.train : (i < n_train + n_val ? split.validation : split.test);
    dest.push_back(order[i].second);
  }
  return split;
}

void write_split_manifest(std::ostream& out, const DatasetSplit& split) {
  std::vector<std::pair<TrajId, const char*>> rows;
  for (const auto& id : split.train) rows.emplace_back(id, "train");
  for (const auto& id : split.validation) rows.emplace_back(id, "validation");
  for (const auto& id : split.test) rows.emplace_back(id, "test");
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, name] : rows) out << id.str() << '\t' << name << '\n';
}

std::vector<Trajectory> select_trajectories(const std::vector<Trajectory>& trajs,
                                            const std::vector<TrajId>& ids) {
  std::map<TrajId, const Trajectory*> index;
  for (const auto& t : trajs) index.emplace(t.id, &t);
  std::vector<Trajectory> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("UnknownTrajectory", "no trajectory " + id.str());
    out.push_back(*it->second);
  }
  return out;
}

std::map<PoiId, std::vector<double>> dwell_samples(const std::vector<Trajectory>& trajs) {
  std::map<PoiId, std::vector<double>> out;
  for (const auto& t : trajs) {
    for (const auto& v : t.visits) out[v.poi_id].push_back(static_cast<double>(v.dwell()));
  }
  return out;
}

TrajId parse_traj_id(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw DataError("BadTrajId", "malformed trajectory id '" + std::string(text) + "'");
  }
  auto seq = parse_int<std::int64_t>(text.substr(colon + 1));
  if (!seq) throw DataError("BadTrajId", "malformed trajectory id '" + std::string(text) + "'");
  return {std::string(text.substr(0, colon)), *seq};
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs) {
  out << "user_id\tseq_id\tpoi_id\tarrival\tdeparture\n";
  for (const auto& t : trajs) {
    for (const auto& v : t.visits) {
      out << t.id.user_id << '\t' << t.id.seq_id << '\t' << v.poi_id << '\t' << v.arrival << '\t' << v.departure
          << '\n';
    }
  }
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::vector<std::string> header;
  if (!read_header(in, '\t', header)) return {};
  if (header.size() != 5 || header[0] != "user_id") throw CorruptFile("trajectory file has an unexpected header");
  std::map<TrajId, Trajectory> by_id;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto f = split_fields(line, '\t');
    auto seq = f.size() == 5 ? parse_int<std::int64_t>(f[1]) : std::nullopt;
    auto poi = f.size() == 5 ? parse_int<PoiId>(f[2]) : std::nullopt;
    auto arr = f.size() == 5 ? parse_int<Seconds>(f[3]) : std::nullopt;
    auto dep = f.size() == 5 ? parse_int<Seconds>(f[4]) : std::nullopt;
    if (!seq || !poi || !arr || !dep || f[0].empty()) {
      throw CorruptFile("trajectory file line " + std::to_string(line_no) + " is malformed");
    }
    TrajId id{std::string(f[0]), *seq};
    auto& t = by_id[id];
    t.id = id;
    t.visits.push_back({*poi, *arr, *dep});
  }
  std::vector<Trajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, t] : by_id) out.push_back(std::move(t));
  return out;
}

DatasetSplit read_split_manifest(std::istream& in) {
  DatasetSplit split;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    const auto f = split_fields(line, '\t');
    if (f.size() != 2) throw CorruptFile("split manifest line is malformed: " + line);
    const TrajId id = parse_traj_id(f[0]);
    if (f[1] == "train") {
      split.train.push_back(id);
    } else if (f[1] == "validation") {
      split.validation.push_back(id);
    } else if (f[1] == "test") {
      split.test.push_back(id);
    } else {
      throw CorruptFile("unknown split name '" + std::string(f[1]) + "'");
    }
  }
  return split;
}

}  // namespace btrec
