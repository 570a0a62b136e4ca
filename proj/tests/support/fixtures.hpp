#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "btrec/corpus.hpp"
#include "btrec/ingest.hpp"
#include "btrec/mlm.hpp"

namespace btrec::fixtures {

/// POIs, profiles and trajectories built directly (no check-in log).
struct World {
  PoiTable pois;
  ProfileTable profiles;
  std::vector<Trajectory> trajs;
};

/// Regression corpus world: 24 POIs on four fixed tours of six, 8
/// categories, 10 users on two home cities. Every trajectory is the first
/// 4-6 stops of its user's tour, so a masked stop is determined by the user
/// and its position. Demographic vocabulary size is 50.
World tour_world(std::uint64_t seed = 7, int n_trajectories = 200);

/// Two groups of users: group A always tours (1, 2, 3), group B (1, 4, 3).
/// POI 5 exists but is never visited. Users a1..aN live in "Alpha", b1..bN
/// in "Beta".
World two_group_world(int users_per_group = 4, int trajs_per_user = 6);

/// Trajectory from (poi, arrival, departure) triples.
Trajectory make_trajectory(const std::string& user, std::int64_t seq,
                           const std::vector<std::tuple<PoiId, Seconds, Seconds>>& visits);

/// Small, fast encoder settings used across tests.
ModelConfig small_config(int vocab_size, int epochs = 60, std::uint64_t seed = 5);

/// Per-tensor comparison of analytic gradients with central differences.
struct GradCheck {
  struct Tensor {
    std::string name;
    double rel_err = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  };
  std::vector<Tensor> tensors;
  double max_rel_err = 0.0;
};

GradCheck gradcheck(const WideModelParams& params, std::span<const MaskedInstance> batch,
                    const GradOptions& options, double eps = 1e-4);

/// 1-layer, d_model 8 model over a 12-token plain vocabulary (4 POIs,
/// 2 categories) with parameters spread well away from initialization, and
/// a batch of masked sentences (one padded).
struct TinyProblem {
  WideModelParams params;
  std::vector<MaskedInstance> batch;
};
TinyProblem tiny_problem(std::uint64_t seed);

/// Empty directory under the system temp dir, unique per name.
std::filesystem::path fresh_dir(const std::string& name);

std::string read_file(const std::filesystem::path& p);

}  // namespace btrec::fixtures
