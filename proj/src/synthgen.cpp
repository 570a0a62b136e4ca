#include "btrec/synthgen.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "btrec/error.hpp"
#include "btrec/random.hpp"

namespace btrec {

namespace {

constexpr std::array<const char*, 12> kThemes = {
    "Park",     "Museum",   "Historical", "Shopping", "Beach",    "Religion",
    "Cultural", "Sport",    "Structure",  "Transport", "Amusement", "Entertainment"};

constexpr Seconds kDay = 86400;
constexpr double kDwellSigma = 0.5;

// Categorical draw from unnormalized weights (sum must be positive).
std::size_t draw_categorical(Rng& rng, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double r = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (r < acc) return i;
  }
  return last_positive;
}

}  // namespace

std::string category_name(int index) {
  const auto n = static_cast<int>(kThemes.size());
  std::string name = kThemes[static_cast<std::size_t>(index % n)];
  if (index >= n) name += std::to_string(index / n);
  return name;
}

void SynthConfig::validate() const {
  if (n_pois < 3) throw InfeasibleConfig("n_pois must be at least 3");
  if (n_categories < 1 || n_categories > n_pois) {
    throw InfeasibleConfig("n_categories must be in [1, n_pois]");
  }
  if (n_users < 1 || n_user_groups < 1 || n_user_groups > n_users) {
    throw InfeasibleConfig("need 1 <= n_user_groups <= n_users");
  }
  if (trajs_per_user < 1) throw InfeasibleConfig("trajs_per_user must be positive");
  if (traj_len_range.first < 3 || traj_len_range.second < traj_len_range.first) {
    throw InfeasibleConfig("traj_len_range must satisfy 3 <= min <= max");
  }
  if (!(preference_concentration > 0.0)) {
    throw InfeasibleConfig("preference_concentration must be positive");
  }
  if (!(dwell_mean_per_poi > 0.0)) throw InfeasibleConfig("dwell_mean_per_poi must be positive");
  if (disjoint_group_preferences && n_categories < n_user_groups) {
    throw InfeasibleConfig("disjoint preferences need at least one category per group");
  }
}

SynthWorld generate_world(const SynthConfig& cfg) {
  cfg.validate();
  SynthWorld world;

  // POIs: category = index mod n_categories, so every category is populated.
  Rng poi_rng(derive_seed(cfg.seed, {1}));
  std::vector<std::vector<PoiId>> by_category(static_cast<std::size_t>(cfg.n_categories));
  std::map<PoiId, double> dwell_mean;
  for (int i = 0; i < cfg.n_pois; ++i) {
    const PoiId id = i + 1;
    const int cat = i % cfg.n_categories;
    Poi p;
    p.poi_id = id;
    p.name = "Site" + std::to_string(id);
    p.theme = category_name(cat);
    p.lat = -37.85 + 0.1 * uniform01(poi_rng);
    p.lon = 144.90 + 0.1 * uniform01(poi_rng);
    dwell_mean[id] = cfg.dwell_mean_per_poi * std::exp(0.3 * standard_normal(poi_rng));
    world.pois.emplace(id, std::move(p));
    world.poi_category[id] = cat;
    by_category[static_cast<std::size_t>(cat)].push_back(id);
  }

  // Latent category preferences per group: symmetric Dirichlet over the
  // categories the group may use.
  Rng pref_rng(derive_seed(cfg.seed, {2}));
  for (int g = 0; g < cfg.n_user_groups; ++g) {
    std::vector<double> w(static_cast<std::size_t>(cfg.n_categories), 0.0);
    std::vector<std::size_t> allowed;
    for (int c = 0; c < cfg.n_categories; ++c) {
      if (!cfg.disjoint_group_preferences || c % cfg.n_user_groups == g) {
        allowed.push_back(static_cast<std::size_t>(c));
      }
    }
    double total = 0.0;
    for (std::size_t c : allowed) {
      w[c] = gamma_draw(pref_rng, cfg.preference_concentration);
      total += w[c];
    }
    if (!(total > 0.0)) {
      // Every gamma draw underflowed; collapse onto one allowed category.
      w[allowed[uniform_index(pref_rng, allowed.size())]] = 1.0;
      total = 1.0;
    }
    for (double& x : w) x /= total;
    world.latent.push_back(std::move(w));
  }

  std::int64_t photo_id = 1;
  for (int u = 0; u < cfg.n_users; ++u) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "user%03d", u + 1);
    const std::string user = buf;
    const int group = u % cfg.n_user_groups;
    world.user_group[user] = group;
    world.profiles.emplace(user, UserProfile{user, "city" + std::to_string(group), ""});
    const auto& pref = world.latent[static_cast<std::size_t>(group)];

    for (int k = 0; k < cfg.trajs_per_user; ++k) {
      Rng rng(derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(k)}));
      const std::int64_t seq_id = static_cast<std::int64_t>(u) * cfg.trajs_per_user + k + 1;
      const int span = cfg.traj_len_range.second - cfg.traj_len_range.first + 1;
      const int len = cfg.traj_len_range.first + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(span)));

      std::vector<PoiId> route;
      route.push_back(static_cast<PoiId>(uniform_index(rng, static_cast<std::uint64_t>(cfg.n_pois))) + 1);
      for (int j = 1; j + 1 < len; ++j) {
        const PoiId prev = route.back();
        PoiId next = 0;
        for (int attempt = 0; attempt < 16 && next == 0; ++attempt) {
          const auto& members = by_category[draw_categorical(rng, pref)];
          std::vector<PoiId> options;
          for (PoiId p : members) {
            if (p != prev) options.push_back(p);
          }
          if (!options.empty()) next = options[uniform_index(rng, options.size())];
        }
        if (next == 0) {
          // Preferred categories hold only `prev`; step anywhere else.
          next = static_cast<PoiId>(uniform_index(rng, static_cast<std::uint64_t>(cfg.n_pois - 1))) + 1;
          if (next >= prev) ++next;
        }
        route.push_back(next);
      }
      {
        std::vector<PoiId> options;
        for (PoiId p = 1; p <= cfg.n_pois; ++p) {
          if (p != route.front() && p != route.back()) options.push_back(p);
        }
        route.push_back(options[uniform_index(rng, options.size())]);
      }

      // Trajectory k of every user falls in week k, so users interleave in time.
      Seconds t = cfg.start_time + k * 7 * kDay + 8 * 3600 +
                  static_cast<Seconds>(uniform_index(rng, static_cast<std::uint64_t>(6 * kDay)));
      for (std::size_t j = 0; j < route.size(); ++j) {
        const PoiId poi = route[j];
        const double z = standard_normal(rng);
        const double dwell_d = dwell_mean[poi] * std::exp(kDwellSigma * z - 0.5 * kDwellSigma * kDwellSigma);
        const Seconds dwell = std::max<Seconds>(60, static_cast<Seconds>(std::llround(dwell_d)));
        const bool middle = uniform_index(rng, 2) == 1;
        const std::string theme = category_name(world.poi_category[poi]);
        world.checkins.push_back({photo_id++, user, t, poi, seq_id, theme});
        if (middle) world.checkins.push_back({photo_id++, user, t + dwell / 2, poi, seq_id, theme});
        world.checkins.push_back({photo_id++, user, t + dwell, poi, seq_id, theme});
        t += dwell + 300 + static_cast<Seconds>(uniform_index(rng, 901));
      }
    }
  }
  return world;
}

void write_world(const SynthWorld& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("WriteFailed", "cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("checkins.csv");
    write_checkins(out, world.checkins);
  }
  {
    auto out = open("pois.csv");
    write_pois(out, world.pois);
  }
  {
    auto out = open("profiles.csv");
    write_profiles(out, world.profiles);
  }
}

}  // namespace btrec
