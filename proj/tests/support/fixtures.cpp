#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "btrec/random.hpp"
#include "btrec/synthgen.hpp"

namespace btrec::fixtures {

Trajectory make_trajectory(const std::string& user, std::int64_t seq,
                           const std::vector<std::tuple<PoiId, Seconds, Seconds>>& visits) {
  Trajectory t;
  t.id = {user, seq};
  for (const auto& [poi, a, d] : visits) t.visits.push_back({poi, a, d});
  return t;
}

World tour_world(std::uint64_t seed, int n_trajectories) {
  World w;
  for (PoiId p = 1; p <= 24; ++p) {
    w.pois[p] = Poi{p, "Stop" + std::to_string(p), category_name(static_cast<int>((p - 1) % 8)), {}, {}};
  }
  for (int u = 0; u < 10; ++u) {
    const std::string id = "r" + std::to_string(u);
    w.profiles[id] = UserProfile{id, u % 2 ? "Beta" : "Alpha", ""};
  }
  Rng rng(seed);
  for (int i = 0; i < n_trajectories; ++i) {
    const int user = static_cast<int>(uniform_index(rng, 10));
    const int tour = user % 4;
    const int len = 4 + static_cast<int>(uniform_index(rng, 3));
    std::vector<std::tuple<PoiId, Seconds, Seconds>> visits;
    Seconds t = 1'000'000 + static_cast<Seconds>(i) * 86400;
    for (int j = 0; j < len; ++j) {
      const PoiId poi = tour * 6 + j + 1;
      visits.emplace_back(poi, t, t + 1800);
      t += 2400;
    }
    w.trajs.push_back(make_trajectory("r" + std::to_string(user), i + 1, visits));
  }
  return w;
}

World two_group_world(int users_per_group, int trajs_per_user) {
  World w;
  const char* themes[] = {"Park", "Museum", "Beach", "Sport", "Shopping"};
  for (PoiId p = 1; p <= 5; ++p) w.pois[p] = Poi{p, "Site" + std::to_string(p), themes[p - 1], {}, {}};
  std::int64_t seq = 1;
  for (int g = 0; g < 2; ++g) {
    const PoiId middle = g == 0 ? 2 : 4;
    for (int u = 1; u <= users_per_group; ++u) {
      const std::string id = std::string(g == 0 ? "a" : "b") + std::to_string(u);
      w.profiles[id] = UserProfile{id, g == 0 ? "Alpha" : "Beta", ""};
      for (int k = 0; k < trajs_per_user; ++k) {
        const Seconds t = 1'000'000 + seq * 86400;
        w.trajs.push_back(make_trajectory(
            id, seq++, {{1, t, t + 1200 + 60 * k}, {middle, t + 3600, t + 5400 + 60 * u}, {3, t + 7200, t + 9000}}));
      }
    }
  }
  return w;
}

ModelConfig small_config(int vocab_size, int epochs, std::uint64_t seed) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.max_len = 64;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 32;
  c.dropout_rate = 0.0;
  c.learning_rate = 3e-3;
  c.batch_size = 8;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

GradCheck gradcheck(const WideModelParams& params, std::span<const MaskedInstance> batch,
                    const GradOptions& options, double eps) {
  const auto analytic = mlm_loss_and_grads(params, batch, options).grads;
  WideModelParams probe = params;
  GradCheck out;
  for (const auto& [name, slot] : params.layout.named) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = slot.offset; k < slot.offset + slot.size(); ++k) {
      const double saved = probe.values[k];
      probe.values[k] = saved + eps;
      const double up = mlm_loss_and_grads(probe, batch, options).loss;
      probe.values[k] = saved - eps;
      const double down = mlm_loss_and_grads(probe, batch, options).loss;
      probe.values[k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
      a2 += analytic[k] * analytic[k];
      n2 += numeric * numeric;
    }
    // Some tensors (the key bias) have an identically zero gradient; the
    // floor keeps finite-difference noise from reading as relative error.
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    const double rel = std::sqrt(diff2) / denom;
    out.tensors.push_back({name, rel});
    out.max_rel_err = std::max(out.max_rel_err, rel);
  }
  return out;
}

TinyProblem tiny_problem(std::uint64_t seed) {
  PoiTable pois;
  for (PoiId p = 1; p <= 4; ++p) pois[p] = Poi{p, "", p % 2 ? "Park" : "Museum", {}, {}};
  const Vocab vocab = build_vocab({}, pois, {}, CorpusMode::plain);

  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(vocab.size());
  cfg.max_len = 16;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_ff = 16;
  cfg.dropout_rate = 0.1;
  cfg.seed = seed;

  TinyProblem tp;
  tp.params = convert_params<double>(init_model(cfg));
  Rng rng(seed);
  for (double& v : tp.params.values) v = 0.4 * standard_normal(rng);
  for (const auto& [name, slot] : tp.params.layout.named) {
    if (name.find("gain") != std::string::npos) {
      for (double& v : tp.params.tensor(slot)) v += 1.0;
    }
  }

  MaskOptions mo;
  mo.mask_rate = 0.4;
  for (int i = 0; i < 4; ++i) {
    Trajectory t;
    t.id = {"u", i};
    const int len = 3 + i % 3;
    for (int j = 0; j < len; ++j) t.visits.push_back({static_cast<PoiId>(uniform_index(rng, 4)) + 1, j, j});
    const Sentence s = trajectory_to_sentence(t, {}, pois, CorpusMode::plain, vocab, 16);
    MaskedInstance inst = mask_for_training(s, vocab, rng, mo);
    if (i == 3) inst.input.resize(inst.input.size() + 3, special::pad);
    tp.batch.push_back(std::move(inst));
  }
  return tp;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("btrec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace btrec::fixtures
