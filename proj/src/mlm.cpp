#include "btrec/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "btrec/digest.hpp"
#include "btrec/error.hpp"
#include "btrec/random.hpp"

namespace btrec {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kInitStd = 0.02;

// ---------------------------------------------------------------------------
// Dense kernels. All matrices are row-major; `rows` is the sequence length.

template <typename Real>
void linear(const Real* in, std::size_t rows, std::size_t n_in, const Real* w, const Real* b,
            std::size_t n_out, Real* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    Real* o = out + i * n_out;
    std::copy(b, b + n_out, o);
    const Real* x = in + i * n_in;
    for (std::size_t k = 0; k < n_in; ++k) {
      const Real xk = x[k];
      const Real* wr = w + k * n_out;
      for (std::size_t j = 0; j < n_out; ++j) o[j] += xk * wr[j];
    }
  }
}

// Accumulates into din (if non-null), dw and db.
template <typename Real>
void linear_backward(const Real* in, std::size_t rows, std::size_t n_in, const Real* w, std::size_t n_out,
                     const Real* dout, Real* din, Real* dw, Real* db) {
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* g = dout + i * n_out;
    const Real* x = in + i * n_in;
    for (std::size_t j = 0; j < n_out; ++j) db[j] += g[j];
    for (std::size_t k = 0; k < n_in; ++k) {
      const Real xk = x[k];
      const Real* wr = w + k * n_out;
      Real* dwr = dw + k * n_out;
      Real acc = 0;
      for (std::size_t j = 0; j < n_out; ++j) {
        dwr[j] += xk * g[j];
        acc += wr[j] * g[j];
      }
      if (din) din[i * n_in + k] += acc;
    }
  }
}

template <typename Real>
void layer_norm(const Real* x, std::size_t rows, std::size_t d, const Real* gain, const Real* bias, Real* y,
                Real* mean, Real* rstd) {
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* xr = x + i * d;
    Real mu = 0;
    for (std::size_t k = 0; k < d; ++k) mu += xr[k];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t k = 0; k < d; ++k) var += (xr[k] - mu) * (xr[k] - mu);
    var /= static_cast<Real>(d);
    const Real r = Real(1) / std::sqrt(var + static_cast<Real>(kLayerNormEps));
    Real* yr = y + i * d;
    for (std::size_t k = 0; k < d; ++k) yr[k] = (xr[k] - mu) * r * gain[k] + bias[k];
    mean[i] = mu;
    rstd[i] = r;
  }
}

template <typename Real>
void layer_norm_backward(const Real* x, std::size_t rows, std::size_t d, const Real* gain, const Real* mean,
                         const Real* rstd, const Real* dy, Real* dx, Real* dgain, Real* dbias) {
  std::vector<Real> xhat(d), dxhat(d);
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* xr = x + i * d;
    const Real* g = dy + i * d;
    Real m1 = 0, m2 = 0;
    for (std::size_t k = 0; k < d; ++k) {
      xhat[k] = (xr[k] - mean[i]) * rstd[i];
      dxhat[k] = g[k] * gain[k];
      dgain[k] += g[k] * xhat[k];
      dbias[k] += g[k];
      m1 += dxhat[k];
      m2 += dxhat[k] * xhat[k];
    }
    m1 /= static_cast<Real>(d);
    m2 /= static_cast<Real>(d);
    Real* dxr = dx + i * d;
    for (std::size_t k = 0; k < d; ++k) dxr[k] += rstd[i] * (dxhat[k] - m1 - xhat[k] * m2);
  }
}

template <typename Real>
Real gelu(Real x) {
  constexpr Real c = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  return Real(0.5) * x * (Real(1) + std::tanh(c * (x + Real(0.044715) * x * x * x)));
}

template <typename Real>
Real gelu_grad(Real x) {
  constexpr Real c = static_cast<Real>(0.7978845608028654);
  const Real t = std::tanh(c * (x + Real(0.044715) * x * x * x));
  return Real(0.5) * (Real(1) + t) +
         Real(0.5) * x * (Real(1) - t * t) * c * (Real(1) + Real(3) * Real(0.044715) * x * x);
}

// ---------------------------------------------------------------------------
// Cached activations of one sequence.

template <typename Real>
struct LayerCache {
  std::vector<Real> x_in, ln1, ln1_mean, ln1_rstd;
  std::vector<Real> q, k, v, probs, ctx, attn_out, attn_drop;
  std::vector<Real> x_mid, ln2, ln2_mean, ln2_rstd;
  std::vector<Real> ff_pre, ff_act, ff_out, ff_drop;
};

template <typename Real>
struct Activations {
  std::size_t len = 0;
  std::vector<unsigned char> key_valid;
  std::vector<Real> emb_drop;
  std::vector<LayerCache<Real>> layers;
  std::vector<Real> x_final, y, lnf_mean, lnf_rstd;
};

template <typename Real>
void make_dropout(std::vector<Real>& scale, std::size_t n, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) {
    scale.clear();
    return;
  }
  scale.resize(n);
  const Real keep = static_cast<Real>(1.0 / (1.0 - rate));
  for (auto& s : scale) s = uniform01(*rng) < rate ? Real(0) : keep;
}

template <typename Real>
void apply_dropout(std::vector<Real>& x, const std::vector<Real>& scale) {
  if (scale.empty()) return;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= scale[i];
}

template <typename Real>
void check_input(const BasicModelParams<Real>& p, std::span<const TokenId> ids) {
  const auto& c = p.config;
  if (ids.size() > static_cast<std::size_t>(c.max_len)) {
    throw SequenceTooLong(ids.size(), static_cast<std::size_t>(c.max_len));
  }
  for (TokenId id : ids) {
    if (id < 0 || id >= c.vocab_size) {
      throw DataError("TokenOutOfRange", "token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

// Runs the encoder up to the final layer norm. Dropout is active iff rng is set.
template <typename Real>
void forward_pass(const BasicModelParams<Real>& p, std::span<const TokenId> ids, Activations<Real>& a, Rng* rng) {
  check_input(p, ids);
  const auto& cfg = p.config;
  const auto& lay = p.layout;
  const std::size_t L = ids.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  const auto H = static_cast<std::size_t>(cfg.n_heads);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const Real* P = p.values.data();

  a.len = L;
  a.key_valid.assign(L, 1);
  for (std::size_t i = 0; i < L; ++i) a.key_valid[i] = ids[i] != special::pad;

  std::vector<Real> x(L * d);
  for (std::size_t i = 0; i < L; ++i) {
    const Real* te = P + lay.tok_emb.offset + static_cast<std::size_t>(ids[i]) * d;
    const Real* pe = P + lay.pos_emb.offset + i * d;
    for (std::size_t k = 0; k < d; ++k) x[i * d + k] = te[k] + pe[k];
  }
  make_dropout(a.emb_drop, L * d, cfg.dropout_rate, rng);
  apply_dropout(x, a.emb_drop);

  a.layers.resize(lay.layers.size());
  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const LayerSlots& s = lay.layers[l];
    LayerCache<Real>& c = a.layers[l];
    c.x_in = x;
    c.ln1.resize(L * d);
    c.ln1_mean.resize(L);
    c.ln1_rstd.resize(L);
    layer_norm(c.x_in.data(), L, d, P + s.ln1_gain.offset, P + s.ln1_bias.offset, c.ln1.data(),
               c.ln1_mean.data(), c.ln1_rstd.data());
    c.q.resize(L * d);
    c.k.resize(L * d);
    c.v.resize(L * d);
    linear(c.ln1.data(), L, d, P + s.wq.offset, P + s.bq.offset, d, c.q.data());
    linear(c.ln1.data(), L, d, P + s.wk.offset, P + s.bk.offset, d, c.k.data());
    linear(c.ln1.data(), L, d, P + s.wv.offset, P + s.bv.offset, d, c.v.data());

    c.probs.assign(H * L * L, Real(0));
    c.ctx.assign(L * d, Real(0));
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < L; ++i) {
        Real* pr = c.probs.data() + (h * L + i) * L;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          if (!a.key_valid[j]) continue;
          Real sdot = 0;
          for (std::size_t t = 0; t < hd; ++t) sdot += c.q[i * d + off + t] * c.k[j * d + off + t];
          pr[j] = sdot * scale;
          mx = std::max(mx, pr[j]);
        }
        Real sum = 0;
        for (std::size_t j = 0; j < L; ++j) {
          if (!a.key_valid[j]) continue;
          pr[j] = std::exp(pr[j] - mx);
          sum += pr[j];
        }
        Real* ci = c.ctx.data() + i * d + off;
        for (std::size_t j = 0; j < L; ++j) {
          if (!a.key_valid[j]) continue;
          pr[j] /= sum;
          const Real* vj = c.v.data() + j * d + off;
          for (std::size_t t = 0; t < hd; ++t) ci[t] += pr[j] * vj[t];
        }
      }
    }
    c.attn_out.resize(L * d);
    linear(c.ctx.data(), L, d, P + s.wo.offset, P + s.bo.offset, d, c.attn_out.data());
    make_dropout(c.attn_drop, L * d, cfg.dropout_rate, rng);
    std::vector<Real> attn = c.attn_out;
    apply_dropout(attn, c.attn_drop);
    c.x_mid.resize(L * d);
    for (std::size_t i = 0; i < L * d; ++i) c.x_mid[i] = c.x_in[i] + attn[i];

    c.ln2.resize(L * d);
    c.ln2_mean.resize(L);
    c.ln2_rstd.resize(L);
    layer_norm(c.x_mid.data(), L, d, P + s.ln2_gain.offset, P + s.ln2_bias.offset, c.ln2.data(),
               c.ln2_mean.data(), c.ln2_rstd.data());
    c.ff_pre.resize(L * f);
    linear(c.ln2.data(), L, d, P + s.w1.offset, P + s.b1.offset, f, c.ff_pre.data());
    c.ff_act.resize(L * f);
    for (std::size_t i = 0; i < L * f; ++i) c.ff_act[i] = gelu(c.ff_pre[i]);
    c.ff_out.resize(L * d);
    linear(c.ff_act.data(), L, f, P + s.w2.offset, P + s.b2.offset, d, c.ff_out.data());
    make_dropout(c.ff_drop, L * d, cfg.dropout_rate, rng);
    std::vector<Real> ff = c.ff_out;
    apply_dropout(ff, c.ff_drop);
    for (std::size_t i = 0; i < L * d; ++i) x[i] = c.x_mid[i] + ff[i];
  }

  a.x_final = x;
  a.y.resize(L * d);
  a.lnf_mean.resize(L);
  a.lnf_rstd.resize(L);
  layer_norm(a.x_final.data(), L, d, P + lay.final_gain.offset, P + lay.final_bias.offset, a.y.data(),
             a.lnf_mean.data(), a.lnf_rstd.data());
}

// Output logits of one position through the tied embedding.
template <typename Real>
void logits_row(const BasicModelParams<Real>& p, const Activations<Real>& a, std::size_t pos, Real* out) {
  const auto d = static_cast<std::size_t>(p.config.d_model);
  const auto V = static_cast<std::size_t>(p.config.vocab_size);
  const Real* E = p.values.data() + p.layout.tok_emb.offset;
  const Real* c = p.values.data() + p.layout.out_bias.offset;
  const Real* y = a.y.data() + pos * d;
  for (std::size_t v = 0; v < V; ++v) {
    Real acc = c[v];
    const Real* e = E + v * d;
    for (std::size_t k = 0; k < d; ++k) acc += y[k] * e[k];
    out[v] = acc;
  }
}

template <typename Real>
std::vector<double> log_softmax(std::span<const Real> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Real z : logits) mx = std::max(mx, static_cast<double>(z));
  double sum = 0.0;
  for (Real z : logits) sum += std::exp(static_cast<double>(z) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

// Loss (sum over labels, unscaled) of one instance; gradient of
// scale * loss accumulated into `grad`.
template <typename Real>
double instance_loss_grad(const BasicModelParams<Real>& p, const MaskedInstance& inst, double scale,
                          Real* grad, Rng* dropout_rng) {
  Activations<Real> a;
  forward_pass(p, inst.input, a, dropout_rng);
  const auto& cfg = p.config;
  const auto& lay = p.layout;
  const std::size_t L = a.len;
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  const auto H = static_cast<std::size_t>(cfg.n_heads);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const Real att_scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const Real* P = p.values.data();
  const Real* E = P + lay.tok_emb.offset;

  double loss = 0.0;
  std::vector<Real> dy(L * d, Real(0));
  std::vector<Real> logits(V);
  for (const auto& [pos, target] : inst.labels) {
    logits_row(p, a, pos, logits.data());
    const auto lp = log_softmax<Real>(logits);
    loss -= lp[static_cast<std::size_t>(target)];
    const Real* y = a.y.data() + pos * d;
    Real* dyr = dy.data() + pos * d;
    for (std::size_t v = 0; v < V; ++v) {
      double g = std::exp(lp[v]);
      if (v == static_cast<std::size_t>(target)) g -= 1.0;
      const Real gl = static_cast<Real>(g * scale);
      grad[lay.out_bias.offset + v] += gl;
      Real* dE = grad + lay.tok_emb.offset + v * d;
      const Real* e = E + v * d;
      for (std::size_t k = 0; k < d; ++k) {
        dE[k] += gl * y[k];
        dyr[k] += gl * e[k];
      }
    }
  }

  std::vector<Real> dx(L * d, Real(0));
  layer_norm_backward(a.x_final.data(), L, d, P + lay.final_gain.offset, a.lnf_mean.data(), a.lnf_rstd.data(),
                      dy.data(), dx.data(), grad + lay.final_gain.offset, grad + lay.final_bias.offset);

  for (std::size_t li = lay.layers.size(); li-- > 0;) {
    const LayerSlots& s = lay.layers[li];
    const LayerCache<Real>& c = a.layers[li];

    // Feed-forward sublayer: x = x_mid + drop(ff_out).
    std::vector<Real> dff_out = dx;
    if (!c.ff_drop.empty()) {
      for (std::size_t i = 0; i < L * d; ++i) dff_out[i] *= c.ff_drop[i];
    }
    std::vector<Real> dff_act(L * f, Real(0));
    linear_backward(c.ff_act.data(), L, f, P + s.w2.offset, d, dff_out.data(), dff_act.data(),
                    grad + s.w2.offset, grad + s.b2.offset);
    for (std::size_t i = 0; i < L * f; ++i) dff_act[i] *= gelu_grad(c.ff_pre[i]);
    std::vector<Real> dln2(L * d, Real(0));
    linear_backward(c.ln2.data(), L, d, P + s.w1.offset, f, dff_act.data(), dln2.data(), grad + s.w1.offset,
                    grad + s.b1.offset);
    std::vector<Real> dx_mid = dx;
    layer_norm_backward(c.x_mid.data(), L, d, P + s.ln2_gain.offset, c.ln2_mean.data(), c.ln2_rstd.data(),
                        dln2.data(), dx_mid.data(), grad + s.ln2_gain.offset, grad + s.ln2_bias.offset);

    // Attention sublayer: x_mid = x_in + drop(attn_out).
    std::vector<Real> dattn = dx_mid;
    if (!c.attn_drop.empty()) {
      for (std::size_t i = 0; i < L * d; ++i) dattn[i] *= c.attn_drop[i];
    }
    std::vector<Real> dctx(L * d, Real(0));
    linear_backward(c.ctx.data(), L, d, P + s.wo.offset, d, dattn.data(), dctx.data(), grad + s.wo.offset,
                    grad + s.bo.offset);
    std::vector<Real> dq(L * d, Real(0)), dk(L * d, Real(0)), dv(L * d, Real(0));
    std::vector<Real> dP(L);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t i = 0; i < L; ++i) {
        const Real* pr = c.probs.data() + (h * L + i) * L;
        const Real* gi = dctx.data() + i * d + off;
        Real dot = 0;
        for (std::size_t j = 0; j < L; ++j) {
          if (!a.key_valid[j]) {
            dP[j] = 0;
            continue;
          }
          const Real* vj = c.v.data() + j * d + off;
          Real* dvj = dv.data() + j * d + off;
          Real acc = 0;
          for (std::size_t t = 0; t < hd; ++t) {
            acc += gi[t] * vj[t];
            dvj[t] += pr[j] * gi[t];
          }
          dP[j] = acc;
          dot += pr[j] * acc;
        }
        const Real* qi = c.q.data() + i * d + off;
        Real* dqi = dq.data() + i * d + off;
        for (std::size_t j = 0; j < L; ++j) {
          if (!a.key_valid[j]) continue;
          const Real ds = pr[j] * (dP[j] - dot) * att_scale;
          const Real* kj = c.k.data() + j * d + off;
          Real* dkj = dk.data() + j * d + off;
          for (std::size_t t = 0; t < hd; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }
    std::vector<Real> dln1(L * d, Real(0));
    linear_backward(c.ln1.data(), L, d, P + s.wq.offset, d, dq.data(), dln1.data(), grad + s.wq.offset,
                    grad + s.bq.offset);
    linear_backward(c.ln1.data(), L, d, P + s.wk.offset, d, dk.data(), dln1.data(), grad + s.wk.offset,
                    grad + s.bk.offset);
    linear_backward(c.ln1.data(), L, d, P + s.wv.offset, d, dv.data(), dln1.data(), grad + s.wv.offset,
                    grad + s.bv.offset);
    dx = dx_mid;
    layer_norm_backward(c.x_in.data(), L, d, P + s.ln1_gain.offset, c.ln1_mean.data(), c.ln1_rstd.data(),
                        dln1.data(), dx.data(), grad + s.ln1_gain.offset, grad + s.ln1_bias.offset);
  }

  if (!a.emb_drop.empty()) {
    for (std::size_t i = 0; i < L * d; ++i) dx[i] *= a.emb_drop[i];
  }
  for (std::size_t i = 0; i < L; ++i) {
    Real* dte = grad + lay.tok_emb.offset + static_cast<std::size_t>(inst.input[i]) * d;
    Real* dpe = grad + lay.pos_emb.offset + i * d;
    for (std::size_t k = 0; k < d; ++k) {
      dte[k] += dx[i * d + k];
      dpe[k] += dx[i * d + k];
    }
  }
  return loss;
}

TensorSlot take(ParamLayout& lay, const std::string& name, std::size_t rows, std::size_t cols) {
  TensorSlot s{lay.total, rows, cols};
  lay.total += s.size();
  lay.named.emplace_back(name, s);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (vocab_size < 1 || max_len < 1 || d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1) {
    throw ConfigError("all model dimensions must be at least 1");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
}

ParamLayout ParamLayout::for_config(const ModelConfig& cfg) {
  cfg.validate();
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto M = static_cast<std::size_t>(cfg.max_len);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.d_ff);
  ParamLayout lay;
  lay.tok_emb = take(lay, "tok_emb", V, d);
  lay.pos_emb = take(lay, "pos_emb", M, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerSlots s;
    s.ln1_gain = take(lay, p + "ln1.gain", 1, d);
    s.ln1_bias = take(lay, p + "ln1.bias", 1, d);
    s.wq = take(lay, p + "attn.wq", d, d);
    s.bq = take(lay, p + "attn.bq", 1, d);
    s.wk = take(lay, p + "attn.wk", d, d);
    s.bk = take(lay, p + "attn.bk", 1, d);
    s.wv = take(lay, p + "attn.wv", d, d);
    s.bv = take(lay, p + "attn.bv", 1, d);
    s.wo = take(lay, p + "attn.wo", d, d);
    s.bo = take(lay, p + "attn.bo", 1, d);
    s.ln2_gain = take(lay, p + "ln2.gain", 1, d);
    s.ln2_bias = take(lay, p + "ln2.bias", 1, d);
    s.w1 = take(lay, p + "ff.w1", d, f);
    s.b1 = take(lay, p + "ff.b1", 1, f);
    s.w2 = take(lay, p + "ff.w2", f, d);
    s.b2 = take(lay, p + "ff.b2", 1, d);
    lay.layers.push_back(s);
  }
  lay.final_gain = take(lay, "final_ln.gain", 1, d);
  lay.final_bias = take(lay, "final_ln.bias", 1, d);
  lay.out_bias = take(lay, "out_bias", 1, V);
  return lay;
}

ModelParams init_model(const ModelConfig& cfg) {
  ModelParams p{cfg, ParamLayout::for_config(cfg), {}};
  p.values.assign(p.layout.total, 0.0f);
  Rng rng(cfg.seed);
  auto normal_fill = [&](const TensorSlot& s, double stddev) {
    for (float& v : p.tensor(s)) v = static_cast<float>(stddev * standard_normal(rng));
  };
  auto const_fill = [&](const TensorSlot& s, float value) {
    for (float& v : p.tensor(s)) v = value;
  };
  const double residual_std = kInitStd / std::sqrt(2.0 * cfg.n_layers);
  normal_fill(p.layout.tok_emb, kInitStd);
  normal_fill(p.layout.pos_emb, kInitStd);
  for (const auto& s : p.layout.layers) {
    const_fill(s.ln1_gain, 1.0f);
    normal_fill(s.wq, kInitStd);
    normal_fill(s.wk, kInitStd);
    normal_fill(s.wv, kInitStd);
    normal_fill(s.wo, residual_std);
    const_fill(s.ln2_gain, 1.0f);
    normal_fill(s.w1, kInitStd);
    normal_fill(s.w2, residual_std);
  }
  const_fill(p.layout.final_gain, 1.0f);
  return p;
}

std::string params_digest(const ModelParams& params) {
  return sha256_hex(std::as_bytes(std::span(params.values)));
}

template <typename Real>
std::vector<Real> forward(const BasicModelParams<Real>& params, std::span<const TokenId> ids) {
  Activations<Real> a;
  forward_pass(params, ids, a, nullptr);
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  std::vector<Real> out(ids.size() * V);
  for (std::size_t i = 0; i < ids.size(); ++i) logits_row(params, a, i, out.data() + i * V);
  return out;
}

template <typename Real>
std::vector<double> log_softmax_at(const BasicModelParams<Real>& params, std::span<const TokenId> ids,
                                   std::size_t position) {
  if (position >= ids.size()) throw DataError("BadPosition", "position outside the sequence");
  Activations<Real> a;
  forward_pass(params, ids, a, nullptr);
  std::vector<Real> row(static_cast<std::size_t>(params.config.vocab_size));
  logits_row(params, a, position, row.data());
  return log_softmax<Real>(row);
}

template <typename Real>
LossAndGrads<Real> mlm_loss_and_grads(const BasicModelParams<Real>& params, std::span<const MaskedInstance> batch,
                                      const GradOptions& options) {
  LossAndGrads<Real> out;
  for (const auto& inst : batch) out.n_labels += inst.labels.size();
  if (batch.empty() || out.n_labels == 0) throw NoLabeledPositions();
  const double scale = 1.0 / static_cast<double>(out.n_labels);
  const std::size_t P = params.values.size();
  out.grads.assign(P, Real(0));

  // Each instance gets its own buffer; buffers are summed in batch order so
  // the result does not depend on the thread count.
  auto run_one = [&](std::size_t i, std::vector<Real>& buf) {
    std::fill(buf.begin(), buf.end(), Real(0));
    Rng rng(derive_seed(options.dropout_seed, {static_cast<std::uint64_t>(i)}));
    return instance_loss_grad(params, batch[i], scale, buf.data(), options.training ? &rng : nullptr);
  };

  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.threads, 1)), 1,
                                                      batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  if (threads == 1) {
    std::vector<Real> buf(P);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      losses[i] = run_one(i, buf);
      for (std::size_t k = 0; k < P; ++k) out.grads[k] += buf[k];
    }
  } else {
    std::vector<std::vector<Real>> bufs(batch.size(), std::vector<Real>(P));
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < batch.size(); i += threads) losses[i] = run_one(i, bufs[i]);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t k = 0; k < P; ++k) out.grads[k] += bufs[i][k];
    }
  }
  double total = 0.0;
  for (double l : losses) total += l;
  out.loss = total * scale;
  return out;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ModelParams params, std::vector<Sentence> corpus, Vocab vocab, TrainOptions options)
    : params_(std::move(params)), corpus_(std::move(corpus)), vocab_(std::move(vocab)), options_(options) {
  params_.config.validate();
  if (static_cast<std::size_t>(params_.config.vocab_size) != vocab_.size()) {
    throw ConfigError("model vocab_size does not match the vocabulary");
  }
  adam_m_.assign(params_.values.size(), 0.0);
  adam_v_.assign(params_.values.size(), 0.0);
}

void Trainer::step(std::span<const MaskedInstance> batch, std::uint64_t dropout_seed) {
  const auto& cfg = params_.config;
  GradOptions go;
  go.training = cfg.dropout_rate > 0.0;
  go.dropout_seed = dropout_seed;
  go.threads = options_.threads;
  const auto lg = mlm_loss_and_grads(params_, batch, go);
  ++steps_;
  if (cfg.optimizer == Optimizer::sgd) {
    for (std::size_t k = 0; k < params_.values.size(); ++k) {
      params_.values[k] -= static_cast<float>(cfg.learning_rate * lg.grads[k]);
    }
  } else {
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.values.size(); ++k) {
      const double g = lg.grads[k];
      adam_m_[k] = kAdamBeta1 * adam_m_[k] + (1.0 - kAdamBeta1) * g;
      adam_v_[k] = kAdamBeta2 * adam_v_[k] + (1.0 - kAdamBeta2) * g * g;
      const double mhat = adam_m_[k] / c1;
      const double vhat = adam_v_[k] / c2;
      params_.values[k] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + kAdamEps));
    }
  }
  last_loss_ = lg.loss;
  last_labels_ = lg.n_labels;
}

void Trainer::run_epochs(int n) {
  if (n <= 0) return;
  if (corpus_.empty()) throw DataError("EmptyCorpus", "training corpus is empty");
  const auto& cfg = params_.config;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int e = 0; e < n; ++e) {
    const auto epoch = static_cast<std::uint64_t>(epoch_);
    std::vector<std::size_t> order(corpus_.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5eed, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    }
    std::vector<MaskedInstance> instances;
    instances.reserve(order.size());
    for (std::size_t idx : order) {
      Rng mask_rng(derive_seed(cfg.seed, {0x3a5c, epoch, static_cast<std::uint64_t>(idx)}));
      auto inst = mask_for_training(corpus_[idx], vocab_, mask_rng, options_.masking);
      if (!inst.labels.empty()) instances.push_back(std::move(inst));
    }
    if (instances.empty()) throw NoLabeledPositions();

    double loss_sum = 0.0;
    std::size_t label_sum = 0;
    std::uint64_t b = 0;
    for (std::size_t start = 0; start < instances.size(); start += batch, ++b) {
      const std::size_t end = std::min(instances.size(), start + batch);
      step(std::span(instances).subspan(start, end - start), derive_seed(cfg.seed, {0xd40f, epoch, b}));
      loss_sum += last_loss_ * static_cast<double>(last_labels_);
      label_sum += last_labels_;
    }
    const double epoch_loss = loss_sum / static_cast<double>(label_sum);
    if (!std::isfinite(epoch_loss)) throw DivergedLoss(epoch_ + 1);
    trace_.push_back(epoch_loss);
    ++epoch_;
  }
}

TrainResult train(ModelParams params, const std::vector<Sentence>& corpus, const Vocab& vocab,
                  const TrainOptions& options) {
  const int epochs = params.config.epochs;
  Trainer trainer(std::move(params), corpus, vocab, options);
  trainer.run_epochs(epochs);
  return {trainer.params(), trainer.loss_trace()};
}

UnmaskResult rank_candidates(std::span<const double> log_probs, std::span<const TokenId> candidates) {
  UnmaskResult out;
  out.reserve(candidates.size());
  for (TokenId c : candidates) out.push_back({c, log_probs[static_cast<std::size_t>(c)]});
  std::sort(out.begin(), out.end(), [](const ScoredToken& a, const ScoredToken& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.token < b.token;
  });
  return out;
}

template <typename Real>
UnmaskResult unmask(const BasicModelParams<Real>& params, std::span<const TokenId> sentence,
                    std::span<const TokenId> candidates) {
  std::size_t mask_pos = sentence.size();
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (sentence[i] != special::mask) continue;
    if (mask_pos != sentence.size()) throw MultipleMasks();
    mask_pos = i;
  }
  if (mask_pos == sentence.size()) throw NoMask();
  if (candidates.empty()) throw DataError("EmptyCandidates", "unmask needs at least one candidate");
  for (TokenId c : candidates) {
    if (c < 0 || c >= params.config.vocab_size) throw DataError("TokenOutOfRange", "candidate outside vocabulary");
  }
  const auto lp = log_softmax_at(params, sentence, mask_pos);
  return rank_candidates(lp, candidates);
}

double masked_accuracy(const ModelParams& params, const std::vector<Sentence>& corpus, const Vocab& vocab,
                       std::uint64_t seed, const MaskOptions& masking) {
  std::size_t correct = 0, total = 0;
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  std::vector<float> row(V);
  for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(idx)}));
    const auto inst = mask_for_training(corpus[idx], vocab, rng, masking);
    if (inst.labels.empty()) continue;
    Activations<float> a;
    forward_pass(params, inst.input, a, nullptr);
    for (const auto& [pos, target] : inst.labels) {
      logits_row(params, a, pos, row.data());
      const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == target;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

template std::vector<float> forward(const BasicModelParams<float>&, std::span<const TokenId>);
template std::vector<double> forward(const BasicModelParams<double>&, std::span<const TokenId>);
template std::vector<double> log_softmax_at(const BasicModelParams<float>&, std::span<const TokenId>, std::size_t);
template std::vector<double> log_softmax_at(const BasicModelParams<double>&, std::span<const TokenId>, std::size_t);
template LossAndGrads<float> mlm_loss_and_grads(const BasicModelParams<float>&, std::span<const MaskedInstance>,
                                                const GradOptions&);
template LossAndGrads<double> mlm_loss_and_grads(const BasicModelParams<double>&, std::span<const MaskedInstance>,
                                                 const GradOptions&);
template UnmaskResult unmask(const BasicModelParams<float>&, std::span<const TokenId>, std::span<const TokenId>);
template UnmaskResult unmask(const BasicModelParams<double>&, std::span<const TokenId>, std::span<const TokenId>);

}  // namespace btrec
