#include "pep/encoder.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "pep/kernels.hpp"

namespace pep {

namespace {

constexpr double kLayerNormEps = 1e-5;

namespace k = kernels;

}  // namespace

void EncoderConfig::validate() const {
  if (layers == 0 || heads == 0 || hidden == 0 || ffn == 0 || max_positions == 0 ||
      vocab_size == 0)
    throw std::invalid_argument("encoder config: all dimensions must be >= 1");
  if (hidden % heads != 0)
    throw std::invalid_argument("encoder config: hidden dim " + std::to_string(hidden) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  if (vocab_size < kNumSpecial)
    throw std::invalid_argument("encoder config: vocabulary smaller than the special tokens");
}

EncoderConfig EncoderConfig::desk(std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  return c;
}

EncoderConfig EncoderConfig::full() {
  EncoderConfig c;
  c.layers = 12;
  c.heads = 12;
  c.hidden = 768;
  c.ffn = 3072;
  c.max_positions = kMaxPositions;
  c.vocab_size = kMaxVocabulary;
  return c;
}

ParamLayout::ParamLayout(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.hidden, f = cfg.ffn, t = cfg.proj_dim();
  auto add = [this](std::string name, std::size_t rows, std::size_t cols) {
    blocks.push_back({std::move(name), total, rows, cols});
    const std::size_t at = total;
    total += rows * cols;
    return at;
  };
  tok_emb = add("embeddings.token", cfg.vocab_size, d);
  pos_emb = add("embeddings.position", cfg.max_positions, d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layer L{};
    L.ln1_g = add(p + "ln1.gain", 1, d);
    L.ln1_b = add(p + "ln1.bias", 1, d);
    L.wq = add(p + "attn.wq", d, d);
    L.bq = add(p + "attn.bq", 1, d);
    L.wk = add(p + "attn.wk", d, d);
    L.bk = add(p + "attn.bk", 1, d);
    L.wv = add(p + "attn.wv", d, d);
    L.bv = add(p + "attn.bv", 1, d);
    L.wo = add(p + "attn.wo", d, d);
    L.bo = add(p + "attn.bo", 1, d);
    L.ln2_g = add(p + "ln2.gain", 1, d);
    L.ln2_b = add(p + "ln2.bias", 1, d);
    L.w1 = add(p + "ffn.w1", d, f);
    L.b1 = add(p + "ffn.b1", 1, f);
    L.w2 = add(p + "ffn.w2", f, d);
    L.b2 = add(p + "ffn.b2", 1, d);
    layers.push_back(L);
  }
  lnf_g = add("final_ln.gain", 1, d);
  lnf_b = add("final_ln.bias", 1, d);
  mlm_bias = add("mlm.bias", 1, cfg.vocab_size);
  if (cfg.task_projection) {
    proj[0] = add("pep.rop.proj", d, t);
    proj[1] = add("pep.brp.proj", d, t);
    proj[2] = add("pep.pap.proj", d, t);
  }
}

EncoderParams::EncoderParams(const EncoderConfig& config)
    : config_(config), layout_(config), values_(layout_.total, 0.0) {}

void EncoderParams::init_random(std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (const auto& b : layout_.blocks) {
    double* p = values_.data() + b.offset;
    const bool gain = b.name.ends_with(".gain");
    const bool bias = b.rows == 1 && !gain;
    for (std::size_t i = 0; i < b.size(); ++i) p[i] = gain ? 1.0 : bias ? 0.0 : normal(rng);
  }
}

std::size_t effective_length(std::span<const TokenId> ids) {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == kPad) --n;
  for (std::size_t i = 0; i < n; ++i)
    if (ids[i] == kPad) throw std::invalid_argument("sequence: [PAD] before the last real token");
  return n;
}

namespace {

void layer_norm(const Matrix& x, const double* gain, const double* bias, Matrix& xhat,
                std::vector<double>& rstd, Matrix& y) {
  const std::size_t L = x.rows(), d = x.cols();
  xhat = Matrix(L, d);
  y = Matrix(L, d);
  rstd.assign(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[i] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (r[j] - mean) * rs;
      xhat(i, j) = h;
      y(i, j) = gain[j] * h + bias[j];
    }
  }
}

// dx += LN backward of dy; gain/bias gradients accumulated.
void layer_norm_backward(const Matrix& dy, const Matrix& xhat, const std::vector<double>& rstd,
                         const double* gain, double* dgain, double* dbias, Matrix& dx) {
  const std::size_t L = dy.rows(), d = dy.cols();
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < L; ++i) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = dy(i, j);
      dgain[j] += g * xhat(i, j);
      dbias[j] += g;
      dxhat[j] = g * gain[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat(i, j);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      dx(i, j) += rstd[i] * (dxhat[j] - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// y = x W + b, W is [in x out].
void affine(const Matrix& x, const double* W, const double* b, std::size_t out, Matrix& y) {
  const std::size_t L = x.rows(), in = x.cols();
  y = Matrix(L, out);
  for (std::size_t i = 0; i < L; ++i) std::copy(b, b + out, y.row(i).begin());
  k::gemm_nn(L, out, in, x.data(), W, y.data(), true);
}

// Backward of y = x W + b: dW += x^T dy, db += colsum(dy), dx (+)= dy W^T.
void affine_backward(const Matrix& x, const double* W, const Matrix& dy, double* dW, double* db,
                     Matrix& dx, bool accumulate_dx) {
  const std::size_t L = x.rows(), in = x.cols(), out = dy.cols();
  k::gemm_tn(in, out, L, x.data(), dy.data(), dW, true);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < out; ++j) db[j] += dy(i, j);
  if (!accumulate_dx) dx = Matrix(L, in);
  k::gemm_nt(L, in, out, dy.data(), W, dx.data(), true);
}

}  // namespace

void validate_sequence(std::span<const TokenId> ids, const EncoderConfig& cfg) {
  if (ids.empty() || ids.size() > cfg.max_positions)
    throw std::invalid_argument("sequence length " + std::to_string(ids.size()) +
                                " outside [1, " + std::to_string(cfg.max_positions) + "]");
  for (TokenId id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw std::invalid_argument("token id " + std::to_string(id) +
                                  " outside the vocabulary of " +
                                  std::to_string(cfg.vocab_size));
  if (effective_length(ids) == 0) throw std::invalid_argument("sequence holds only [PAD]");
}


void forward_sequence(std::span<const TokenId> ids_in, const EncoderParams& params,
                      SequenceCache& cache) {
  const auto& cfg = params.config();
  const auto& lay = params.layout();
  validate_sequence(ids_in, cfg);
  const std::size_t L = effective_length(ids_in);
  const std::size_t d = cfg.hidden, f = cfg.ffn, H = cfg.heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.ids.assign(ids_in.begin(), ids_in.begin() + static_cast<std::ptrdiff_t>(L));
  cache.layers.resize(cfg.layers);

  Matrix x(L, d);
  for (std::size_t t = 0; t < L; ++t) {
    const double* te = params.at(lay.tok_emb + static_cast<std::size_t>(cache.ids[t]) * d);
    const double* pe = params.at(lay.pos_emb + t * d);
    for (std::size_t j = 0; j < d; ++j) x(t, j) = te[j] + pe[j];
  }

  Matrix tmp;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& P = lay.layers[l];
    auto& c = cache.layers[l];
    layer_norm(x, params.at(P.ln1_g), params.at(P.ln1_b), c.xhat1, c.rstd1, c.a);
    affine(c.a, params.at(P.wq), params.at(P.bq), d, c.q);
    affine(c.a, params.at(P.wk), params.at(P.bk), d, c.k);
    affine(c.a, params.at(P.wv), params.at(P.bv), d, c.v);

    c.probs.assign(H * L * L, 0.0);
    c.ctx = Matrix(L, d);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < L; ++i) {
        double* p = c.probs.data() + (h * L + i) * L;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < L; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) s += c.q(i, off + e) * c.k(j, off + e);
          p[j] = s * scale;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        for (std::size_t j = 0; j < L; ++j) p[j] /= z;
        for (std::size_t j = 0; j < L; ++j)
          for (std::size_t e = 0; e < dh; ++e) c.ctx(i, off + e) += p[j] * c.v(j, off + e);
      }
    }
    affine(c.ctx, params.at(P.wo), params.at(P.bo), d, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += tmp.data()[i];

    layer_norm(x, params.at(P.ln2_g), params.at(P.ln2_b), c.xhat2, c.rstd2, c.b);
    affine(c.b, params.at(P.w1), params.at(P.b1), f, c.u);
    c.g = Matrix(L, f);
    for (std::size_t i = 0; i < c.u.size(); ++i) c.g.data()[i] = gelu(c.u.data()[i]);
    affine(c.g, params.at(P.w2), params.at(P.b2), d, tmp);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += tmp.data()[i];
  }
  layer_norm(x, params.at(lay.lnf_g), params.at(lay.lnf_b), cache.xhatf, cache.rstdf,
             cache.hidden);
}

void backward_sequence(const SequenceCache& cache, const EncoderParams& params,
                       const Matrix& d_hidden, std::span<double> grad) {
  const auto& cfg = params.config();
  const auto& lay = params.layout();
  const std::size_t L = cache.ids.size();
  const std::size_t d = cfg.hidden, H = cfg.heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (d_hidden.rows() != L || d_hidden.cols() != d)
    throw std::invalid_argument("backward_sequence: gradient shape mismatch");
  if (grad.size() != params.size())
    throw std::invalid_argument("backward_sequence: gradient buffer size mismatch");
  double* G = grad.data();

  Matrix dx(L, d);
  layer_norm_backward(d_hidden, cache.xhatf, cache.rstdf, params.at(lay.lnf_g), G + lay.lnf_g,
                      G + lay.lnf_b, dx);

  Matrix dg, da, dctx;
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const auto& P = lay.layers[l];
    const auto& c = cache.layers[l];

    // x += g W2 + b2
    affine_backward(c.g, params.at(P.w2), dx, G + P.w2, G + P.b2, dg, false);
    for (std::size_t i = 0; i < dg.size(); ++i) dg.data()[i] *= gelu_grad(c.u.data()[i]);
    Matrix db;
    affine_backward(c.b, params.at(P.w1), dg, G + P.w1, G + P.b1, db, false);
    layer_norm_backward(db, c.xhat2, c.rstd2, params.at(P.ln2_g), G + P.ln2_g, G + P.ln2_b, dx);

    // x += ctx Wo + bo
    affine_backward(c.ctx, params.at(P.wo), dx, G + P.wo, G + P.bo, dctx, false);
    Matrix dq(L, d), dk(L, d), dv(L, d);
    std::vector<double> dp(L);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < L; ++i) {
        const double* p = c.probs.data() + (h * L + i) * L;
        double dot = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          double s = 0.0;
          for (std::size_t e = 0; e < dh; ++e) {
            s += dctx(i, off + e) * c.v(j, off + e);
            dv(j, off + e) += p[j] * dctx(i, off + e);
          }
          dp[j] = s;
          dot += p[j] * s;
        }
        for (std::size_t j = 0; j < L; ++j) {
          const double ds = p[j] * (dp[j] - dot) * scale;
          for (std::size_t e = 0; e < dh; ++e) {
            dq(i, off + e) += ds * c.k(j, off + e);
            dk(j, off + e) += ds * c.q(i, off + e);
          }
        }
      }
    }
    affine_backward(c.a, params.at(P.wq), dq, G + P.wq, G + P.bq, da, false);
    affine_backward(c.a, params.at(P.wk), dk, G + P.wk, G + P.bk, da, true);
    affine_backward(c.a, params.at(P.wv), dv, G + P.wv, G + P.bv, da, true);
    layer_norm_backward(da, c.xhat1, c.rstd1, params.at(P.ln1_g), G + P.ln1_g, G + P.ln1_b, dx);
  }

  for (std::size_t t = 0; t < L; ++t) {
    double* te = G + lay.tok_emb + static_cast<std::size_t>(cache.ids[t]) * d;
    double* pe = G + lay.pos_emb + t * d;
    for (std::size_t j = 0; j < d; ++j) {
      te[j] += dx(t, j);
      pe[j] += dx(t, j);
    }
  }
}

EncoderOutput forward(std::span<const TokenSequence> batch, const EncoderParams& params) {
  for (const auto& s : batch) validate_sequence(s.ids, params.config());
  const std::size_t B = batch.size(), d = params.config().hidden;
  EncoderOutput out;
  out.hidden.resize(B);
  out.cls = Matrix(B, d);
  const auto count = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel
  {
    SequenceCache cache;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t b = 0; b < count; ++b) {
      forward_sequence(batch[b].ids, params, cache);
      const auto row0 = cache.hidden.row(0);
      std::copy(row0.begin(), row0.end(), out.cls.row(static_cast<std::size_t>(b)).begin());
      out.hidden[b] = std::move(cache.hidden);
    }
  }
  return out;
}

std::vector<TokenSequence> pad_batch(std::span<const TokenSequence> batch) {
  std::size_t longest = 0;
  for (const auto& s : batch) longest = std::max(longest, s.ids.size());
  std::vector<TokenSequence> out(batch.begin(), batch.end());
  for (auto& s : out) s.ids.resize(longest, kPad);
  return out;
}

Matrix mlm_logits(const Matrix& hidden, const EncoderParams& params,
                  std::span<const std::size_t> positions) {
  const auto& cfg = params.config();
  const std::size_t d = cfg.hidden, V = cfg.vocab_size, M = positions.size();
  if (hidden.cols() != d) throw std::invalid_argument("mlm_logits: hidden width mismatch");
  Matrix sel(M, d);
  for (std::size_t m = 0; m < M; ++m) {
    if (positions[m] >= hidden.rows())
      throw std::out_of_range("mlm_logits: position " + std::to_string(positions[m]) +
                              " beyond sequence length " + std::to_string(hidden.rows()));
    const auto r = hidden.row(positions[m]);
    std::copy(r.begin(), r.end(), sel.row(m).begin());
  }
  Matrix logits(M, V);
  const double* bias = params.at(params.layout().mlm_bias);
  for (std::size_t m = 0; m < M; ++m) std::copy(bias, bias + V, logits.row(m).begin());
  kernels::gemm_nt(M, V, d, sel.data(), params.at(params.layout().tok_emb), logits.data(), true);
  return logits;
}

void mlm_logits_backward(const Matrix& hidden, const EncoderParams& params,
                         std::span<const std::size_t> positions, const Matrix& d_logits,
                         Matrix& d_hidden, std::span<double> grad) {
  const auto& cfg = params.config();
  const auto& lay = params.layout();
  const std::size_t d = cfg.hidden, V = cfg.vocab_size, M = positions.size();
  Matrix sel(M, d);
  for (std::size_t m = 0; m < M; ++m) {
    const auto r = hidden.row(positions[m]);
    std::copy(r.begin(), r.end(), sel.row(m).begin());
  }
  double* G = grad.data();
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t v = 0; v < V; ++v) G[lay.mlm_bias + v] += d_logits(m, v);
  kernels::gemm_tn(V, d, M, d_logits.data(), sel.data(), G + lay.tok_emb, true);
  Matrix dsel(M, d);
  kernels::gemm_nn(M, d, V, d_logits.data(), params.at(lay.tok_emb), dsel.data());
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t j = 0; j < d; ++j) d_hidden(positions[m], j) += dsel(m, j);
}

namespace {
Matrix project(const Matrix& H, const EncoderParams& params, PepTask task) {
  const auto& cfg = params.config();
  if (!cfg.task_projection) return H;
  const std::size_t n = H.rows(), d = cfg.hidden, t = cfg.proj_dim();
  Matrix G(n, t);
  kernels::gemm_nn(n, t, d, H.data(), params.at(params.layout().proj[static_cast<int>(task)]),
                   G.data());
  return G;
}
}  // namespace

Matrix pairwise_logits(const Matrix& H, const EncoderParams& params, PepTask task) {
  if (H.rows() == 0) throw std::invalid_argument("pairwise_logits: empty embedding matrix");
  if (H.cols() != params.config().hidden)
    throw std::invalid_argument("pairwise_logits: embedding width mismatch");
  const Matrix G = project(H, params, task);
  const std::size_t n = G.rows();
  Matrix S(n, n);
  kernels::gemm_nt(n, n, G.cols(), G.data(), G.data(), S.data());
  return S;
}

void pairwise_logits_backward(const Matrix& H, const EncoderParams& params, PepTask task,
                              const Matrix& d_logits, Matrix& d_H, std::span<double> grad) {
  const auto& cfg = params.config();
  const std::size_t n = H.rows(), d = cfg.hidden;
  const Matrix G = project(H, params, task);
  const std::size_t t = G.cols();
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = d_logits(i, j) + d_logits(j, i);
  Matrix dG(n, t);
  kernels::gemm_nn(n, t, n, sym.data(), G.data(), dG.data());
  if (!cfg.task_projection) {
    for (std::size_t i = 0; i < dG.size(); ++i) d_H.data()[i] += dG.data()[i];
    return;
  }
  const std::size_t off = params.layout().proj[static_cast<int>(task)];
  kernels::gemm_tn(d, t, n, H.data(), dG.data(), grad.data() + off, true);
  kernels::gemm_nt(n, d, t, dG.data(), params.at(off), d_H.data(), true);
}

}  // namespace pep
