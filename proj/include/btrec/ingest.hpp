#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace btrec {

using PoiId = std::int64_t;
using Seconds = std::int64_t;

struct Poi {
  PoiId poi_id = 0;
  std::string name;
  std::string theme = "Unknown";
  std::optional<double> lat;
  std::optional<double> lon;
};

using PoiTable = std::map<PoiId, Poi>;

/// One geo-tagged photo already resolved to a POI.
struct CheckIn {
  std::int64_t photo_id = 0;
  std::string user_id;
  Seconds timestamp = 0;
  PoiId poi_id = 0;
  std::int64_t seq_id = 0;
  std::string theme;  // empty when the log has no theme column

  bool operator==(const CheckIn&) const = default;
};

struct UserProfile {
  std::string user_id;
  std::string home_city;
  std::string home_country;

  /// "city/country", either part alone, or empty when both are unknown.
  std::string home_key() const;
};

using ProfileTable = std::map<std::string, UserProfile>;

struct PoiVisit {
  PoiId poi_id = 0;
  Seconds arrival = 0;
  Seconds departure = 0;

  Seconds dwell() const { return departure - arrival; }
  bool operator==(const PoiVisit&) const = default;
};

struct TrajId {
  std::string user_id;
  std::int64_t seq_id = 0;

  auto operator<=>(const TrajId&) const = default;
  bool operator==(const TrajId&) const = default;
  /// "user_id:seq_id"
  std::string str() const;
};

struct Trajectory {
  TrajId id;
  std::vector<PoiVisit> visits;

  const std::string& user_id() const { return id.user_id; }
  Seconds first_time() const { return visits.front().arrival; }
  Seconds last_time() const { return visits.back().departure; }
  std::vector<PoiId> poi_sequence() const;
};

struct DatasetSplit {
  std::vector<TrajId> train;
  std::vector<TrajId> validation;
  std::vector<TrajId> test;
};

/// Column names of a delimiter-separated check-in log. The defaults follow
/// the published Flickr user-visit files.
struct ColumnSpec {
  char delimiter = ';';
  std::string photo_id = "photoID";
  std::string user_id = "userID";
  std::string timestamp = "dateTaken";
  std::string poi_id = "poiID";
  std::string seq_id = "seqID";
  std::string theme = "poiTheme";  // optional column
  double max_bad_fraction = 0.10;
};

struct BadRow {
  std::size_t line_no = 0;
  std::string reason;
};

struct CheckinParseResult {
  std::vector<CheckIn> checkins;
  std::vector<BadRow> bad_rows;
};

/// Parses a check-in log with a header row. Invalid rows are collected in
/// bad_rows; throws DataError("TooManyBadRows") when their share exceeds
/// spec.max_bad_fraction, MissingColumn when a required header is absent.
CheckinParseResult parse_checkins(std::istream& in, const ColumnSpec& spec = {});

/// POI file: poi_id,name,theme[,lat,lon] with a header row.
PoiTable parse_pois(std::istream& in, char delimiter = ',');

/// Builds a POI table from the themes carried by the check-in log itself.
PoiTable pois_from_checkins(const std::vector<CheckIn>& checkins);

/// Profile file: user_id,home_city,home_country with a header row.
ProfileTable parse_profiles(std::istream& in, char delimiter = ',');

void write_checkins(std::ostream& out, const std::vector<CheckIn>& checkins);
void write_pois(std::ostream& out, const PoiTable& pois);
void write_profiles(std::ostream& out, const ProfileTable& profiles);

/// Groups check-ins by (user, seq), orders them by time and collapses runs of
/// the same POI into a single visit. Result is sorted by TrajId.
std::vector<Trajectory> build_trajectories(const std::vector<CheckIn>& checkins,
                                           const PoiTable& pois);

/// Keeps trajectories that visit at least `min_pois` distinct POIs.
std::vector<Trajectory> filter_trajectories(std::vector<Trajectory> trajs, int min_pois = 3);

/// Sorts by last check-in time (ties by TrajId) and cuts train/validation/test
/// by floor(fraction * n); test takes the remainder.
DatasetSplit split_dataset(const std::vector<Trajectory>& trajs,
                           std::array<double, 3> fractions = {0.70, 0.20, 0.10});

/// "traj_id<TAB>split_name" lines sorted by traj_id.
void write_split_manifest(std::ostream& out, const DatasetSplit& split);

/// Trajectories whose id is in `ids`, in the order of `ids`.
std::vector<Trajectory> select_trajectories(const std::vector<Trajectory>& trajs,
                                            const std::vector<TrajId>& ids);

/// Per-POI dwell samples (seconds) observed in `trajs`.
std::map<PoiId, std::vector<double>> dwell_samples(const std::vector<Trajectory>& trajs);

/// Inverse of TrajId::str(); the user id may itself contain ':'.
TrajId parse_traj_id(std::string_view text);

/// One visit per line: user_id, seq_id, poi_id, arrival, departure (tab separated).
void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_trajectories(std::istream& in);

/// Reads what write_split_manifest wrote; ids stay in file order.
DatasetSplit read_split_manifest(std::istream& in);

}  // namespace btrec
