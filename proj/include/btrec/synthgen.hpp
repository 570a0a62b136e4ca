#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "btrec/ingest.hpp"

namespace btrec {

struct SynthConfig {
  int n_pois = 30;
  int n_categories = 6;
  int n_users = 50;
  int n_user_groups = 2;
  int trajs_per_user = 8;
  std::pair<int, int> traj_len_range{3, 8};
  double preference_concentration = 0.5;
  double dwell_mean_per_poi = 1800.0;
  std::uint64_t seed = 1;
  /// Give each group its own block of categories (groups never share a
  /// category with positive preference).
  bool disjoint_group_preferences = false;
  Seconds start_time = 1'400'000'000;

  void validate() const;
};

struct SynthWorld {
  PoiTable pois;
  ProfileTable profiles;
  std::vector<CheckIn> checkins;
  /// latent[g][c]: probability that group g picks category c for an
  /// intermediate stop.
  std::vector<std::vector<double>> latent;
  /// Category index of every POI (same order as `pois`).
  std::map<PoiId, int> poi_category;
  /// Group index of every user.
  std::map<std::string, int> user_group;
};

/// Deterministic in cfg (including cfg.seed).
SynthWorld generate_world(const SynthConfig& cfg);

/// Writes checkins.csv, pois.csv and profiles.csv into `dir`.
void write_world(const SynthWorld& world, const std::filesystem::path& dir);

/// Theme label of category `index`.
std::string category_name(int index);

}  // namespace btrec
