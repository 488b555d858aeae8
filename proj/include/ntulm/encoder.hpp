#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ntulm/common.hpp"
#include "ntulm/vocab.hpp"

namespace ntulm {

using Mat = Eigen::MatrixXd;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 128;
  std::size_t max_len = 32;
  double mask_rate = 0.15;
  bool use_ntu = true;        // false: text-only baseline, no NTU position
  std::size_t ntu_dim = 200;  // ignored when use_ntu is false
  std::uint64_t rng_seed = 0;
  // training
  double learning_rate = 5e-5;
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  double init_std = 0.02;
  bool pool_special_tokens = false;

  void validate() const {
    if (vocab_size <= Vocabulary::kNumReserved) throw Error(ErrorCode::ConfigInvalid, "vocab_size too small");
    if (hidden_dim == 0 || heads == 0 || hidden_dim % heads != 0)
      throw Error(ErrorCode::ConfigInvalid, "hidden_dim must be a positive multiple of heads");
    if (layers == 0 || ffn_dim == 0 || max_len < 3) throw Error(ErrorCode::ConfigInvalid, "bad encoder shape");
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw Error(ErrorCode::ConfigInvalid, "mask_rate must be in [0,1)");
    if (use_ntu && ntu_dim == 0) throw Error(ErrorCode::ConfigInvalid, "ntu_dim must be positive");
    if (!(learning_rate > 0) || batch_size == 0) throw Error(ErrorCode::ConfigInvalid, "bad training settings");
  }

  // Longest token sequence ([CLS]..[SEP]) that still leaves room for the NTU slot.
  std::size_t max_tokens() const { return use_ntu ? max_len - 1 : max_len; }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"hidden_dim", c.hidden_dim}, {"layers", c.layers},
       {"heads", c.heads}, {"ffn_dim", c.ffn_dim}, {"max_len", c.max_len},
       {"mask_rate", c.mask_rate}, {"use_ntu", c.use_ntu}, {"ntu_dim", c.ntu_dim},
       {"rng_seed", c.rng_seed}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
       {"batch_size", c.batch_size}, {"init_std", c.init_std}, {"pool_special_tokens", c.pool_special_tokens}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.max_len = j.value("max_len", c.max_len);
  c.mask_rate = j.value("mask_rate", c.mask_rate);
  c.use_ntu = j.value("use_ntu", c.use_ntu);
  c.ntu_dim = j.value("ntu_dim", c.ntu_dim);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.init_std = j.value("init_std", c.init_std);
  c.pool_special_tokens = j.value("pool_special_tokens", c.pool_special_tokens);
}

// Row vectors (biases, layer-norm gains) are stored as 1 x n matrices so a
// single visitor covers every tensor.
struct LayerParams {
  Mat wq, bq, wk, bk, wv, bv, wo, bo;
  Mat ln1_g, ln1_b;
  Mat w1, b1, w2, b2;
  Mat ln2_g, ln2_b;

  template <typename Self, typename F>
  static void visit(Self& s, F&& f) {
    f("wq", s.wq), f("bq", s.bq), f("wk", s.wk), f("bk", s.bk), f("wv", s.wv), f("bv", s.bv);
    f("wo", s.wo), f("bo", s.bo), f("ln1_g", s.ln1_g), f("ln1_b", s.ln1_b);
    f("w1", s.w1), f("b1", s.b1), f("w2", s.w2), f("b2", s.b2), f("ln2_g", s.ln2_g), f("ln2_b", s.ln2_b);
  }
};

struct EncoderParams {
  Mat token_emb;  // vocab x hidden
  Mat pos_emb;    // max_len x hidden
  Mat emb_ln_g, emb_ln_b;
  std::vector<LayerParams> layers;
  Mat out_w, out_b;  // MLM head, hidden x vocab
  Mat ntu_w, ntu_b;  // NTU projection, ntu_dim x hidden (0 rows when text-only)

  // Visits every tensor in declaration order; this order is the checkpoint layout.
  template <typename Self, typename F>
  static void visit(Self& s, F&& f) {
    f(std::string("token_emb"), s.token_emb);
    f(std::string("pos_emb"), s.pos_emb);
    f(std::string("emb_ln_g"), s.emb_ln_g);
    f(std::string("emb_ln_b"), s.emb_ln_b);
    for (std::size_t l = 0; l < s.layers.size(); ++l)
      LayerParams::visit(s.layers[l], [&](const char* n, auto& m) { f("layers." + std::to_string(l) + "." + n, m); });
    f(std::string("out_w"), s.out_w);
    f(std::string("out_b"), s.out_b);
    f(std::string("ntu_w"), s.ntu_w);
    f(std::string("ntu_b"), s.ntu_b);
  }

  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each([](const std::string&, Mat& m) { m.setZero(); });
    return z;
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Mat& m) { ok = ok && m.allFinite(); });
    return ok;
  }
};

struct EncoderState {
  EncoderConfig config;
  EncoderParams params;
};

inline EncoderState init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  const auto d = static_cast<Eigen::Index>(cfg.hidden_dim);
  const auto normal = [&](Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = cfg.init_std * rng.normal();
    return m;
  };
  EncoderState s{cfg, {}};
  auto& p = s.params;
  p.token_emb = normal(static_cast<Eigen::Index>(cfg.vocab_size), d);
  p.pos_emb = normal(static_cast<Eigen::Index>(cfg.max_len), d);
  p.emb_ln_g = Mat::Ones(1, d);
  p.emb_ln_b = Mat::Zero(1, d);
  const auto f = static_cast<Eigen::Index>(cfg.ffn_dim);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    LayerParams lp;
    lp.wq = normal(d, d), lp.bq = Mat::Zero(1, d);
    lp.wk = normal(d, d), lp.bk = Mat::Zero(1, d);
    lp.wv = normal(d, d), lp.bv = Mat::Zero(1, d);
    lp.wo = normal(d, d), lp.bo = Mat::Zero(1, d);
    lp.ln1_g = Mat::Ones(1, d), lp.ln1_b = Mat::Zero(1, d);
    lp.w1 = normal(d, f), lp.b1 = Mat::Zero(1, f);
    lp.w2 = normal(f, d), lp.b2 = Mat::Zero(1, d);
    lp.ln2_g = Mat::Ones(1, d), lp.ln2_b = Mat::Zero(1, d);
    p.layers.push_back(std::move(lp));
  }
  p.out_w = normal(d, static_cast<Eigen::Index>(cfg.vocab_size));
  p.out_b = Mat::Zero(1, static_cast<Eigen::Index>(cfg.vocab_size));
  const auto nd = cfg.use_ntu ? static_cast<Eigen::Index>(cfg.ntu_dim) : 0;
  p.ntu_w = normal(nd, d);
  p.ntu_b = Mat::Zero(cfg.use_ntu ? 1 : 0, d);
  return s;
}

/// Token rows get token + position embeddings; when the encoder takes an NTU
/// context, its projection is appended as the last row with no position term.
inline Mat build_input(std::span<const TokenId> ids, const Eigen::VectorXd* ntu, const EncoderState& state) {
  const auto& cfg = state.config;
  const auto& p = state.params;
  const std::size_t rows = ids.size() + (cfg.use_ntu ? 1 : 0);
  if (rows > cfg.max_len) throw Error(ErrorCode::SequenceTooLong, std::to_string(rows) + " > max_len " + std::to_string(cfg.max_len));
  if (cfg.use_ntu && (!ntu || ntu->size() != static_cast<Eigen::Index>(cfg.ntu_dim)))
    throw Error(ErrorCode::DimensionMismatch, "NTU context missing or of the wrong length");
  Mat s(static_cast<Eigen::Index>(rows), p.token_emb.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cfg.vocab_size)
      throw Error(ErrorCode::FormatError, "token id out of range");
    s.row(static_cast<Eigen::Index>(i)) = p.token_emb.row(ids[i]) + p.pos_emb.row(static_cast<Eigen::Index>(i));
  }
  if (cfg.use_ntu) s.row(s.rows() - 1) = ntu->transpose() * p.ntu_w + p.ntu_b;
  return s;
}

namespace nn {

inline constexpr double kLayerNormEps = 1e-12;

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

inline Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, LayerNormCache* cache) {
  const double d = static_cast<double>(x.cols());
  Mat xhat(x.rows(), x.cols());
  Eigen::VectorXd inv(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).sum() / d;
    const auto centered = x.row(i).array() - mu;
    const double var = centered.square().sum() / d;
    inv(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = centered * inv(i);
  }
  Mat y = (xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array();
  if (cache) cache->xhat = std::move(xhat), cache->inv_std = std::move(inv);
  return y;
}

inline Mat layer_norm_backward(const Mat& dy, const Mat& g, const LayerNormCache& c, Mat& dg, Mat& db) {
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * g.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double sum = dxhat.row(i).sum();
    const double dot = dxhat.row(i).dot(c.xhat.row(i));
    dx.row(i) = (c.inv_std(i) / d) * (d * dxhat.row(i).array() - sum - c.xhat.row(i).array() * dot);
  }
  return dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

inline void add_bias(Mat& x, const Mat& b) { x.rowwise() += b.row(0); }

}  // namespace nn

struct LayerCache {
  Mat x;                       // layer input
  Mat q, k, v;
  std::vector<Mat> attn;       // per head, rows x rows
  Mat ctx;
  nn::LayerNormCache ln1;
  Mat h;                       // after first residual + norm
  Mat ff_pre, ff_act;
  nn::LayerNormCache ln2;
};

struct ForwardCache {
  nn::LayerNormCache emb_ln;
  std::vector<LayerCache> layers;
  std::vector<bool> pad;
};

/// Post-norm encoder stack: embedding layer-norm, then per layer
/// h = LN(x + MHA(x)), out = LN(h + FFN(h)). Padded positions (pad[i] true)
/// receive zero attention weight as keys; every position attends to every
/// unpadded one, the NTU row included.
inline Mat forward(const Mat& s, const EncoderState& state, std::span<const bool> pad = {},
                   ForwardCache* cache = nullptr) {
  const auto& cfg = state.config;
  const auto& p = state.params;
  const Eigen::Index n = s.rows();
  const auto heads = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = static_cast<Eigen::Index>(cfg.hidden_dim) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (cache) {
    cache->layers.assign(cfg.layers, {});
    cache->pad.assign(pad.begin(), pad.end());
  }
  const auto is_pad = [&](Eigen::Index j) { return !pad.empty() && pad[static_cast<std::size_t>(j)]; };

  Mat x = nn::layer_norm(s, p.emb_ln_g, p.emb_ln_b, cache ? &cache->emb_ln : nullptr);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& lp = p.layers[l];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[l] : local;
    c.x = x;
    c.q = x * lp.wq, nn::add_bias(c.q, lp.bq);
    c.k = x * lp.wk, nn::add_bias(c.k, lp.bk);
    c.v = x * lp.wv, nn::add_bias(c.v, lp.bv);
    c.ctx.resize(n, x.cols());
    c.attn.resize(static_cast<std::size_t>(heads));
    for (Eigen::Index h = 0; h < heads; ++h) {
      Mat scores = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
      Mat& a = c.attn[static_cast<std::size_t>(h)];
      a.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
          if (!is_pad(j)) mx = std::max(mx, scores(i, j));
        double z = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          a(i, j) = is_pad(j) ? 0.0 : std::exp(scores(i, j) - mx);
          z += a(i, j);
        }
        a.row(i) /= z;
      }
      c.ctx.middleCols(h * dh, dh) = a * c.v.middleCols(h * dh, dh);
    }
    Mat attn_out = c.ctx * lp.wo;
    nn::add_bias(attn_out, lp.bo);
    c.h = nn::layer_norm(x + attn_out, lp.ln1_g, lp.ln1_b, &c.ln1);
    c.ff_pre = c.h * lp.w1;
    nn::add_bias(c.ff_pre, lp.b1);
    c.ff_act = c.ff_pre.unaryExpr([](double v) { return nn::gelu(v); });
    Mat ff_out = c.ff_act * lp.w2;
    nn::add_bias(ff_out, lp.b2);
    x = nn::layer_norm(c.h + ff_out, lp.ln2_g, lp.ln2_b, &c.ln2);
  }
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteActivation, "encoder produced a non-finite hidden state");
  return x;
}

/// Backpropagates dZ through the stack, accumulating into `grads`; returns dS.
inline Mat backward(const Mat& dz, const EncoderState& state, const ForwardCache& cache, EncoderParams& grads) {
  const auto& cfg = state.config;
  const auto& p = state.params;
  const auto heads = static_cast<Eigen::Index>(cfg.heads);
  const Eigen::Index dh = static_cast<Eigen::Index>(cfg.hidden_dim) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = dz;
  for (std::size_t li = cfg.layers; li-- > 0;) {
    const auto& lp = p.layers[li];
    auto& g = grads.layers[li];
    const auto& c = cache.layers[li];

    const Mat dres2 = nn::layer_norm_backward(dx, lp.ln2_g, c.ln2, g.ln2_g, g.ln2_b);
    g.w2 += c.ff_act.transpose() * dres2;
    g.b2 += dres2.colwise().sum();
    const Mat dact = dres2 * lp.w2.transpose();
    const Mat dpre = dact.array() * c.ff_pre.unaryExpr([](double v) { return nn::gelu_grad(v); }).array();
    g.w1 += c.h.transpose() * dpre;
    g.b1 += dpre.colwise().sum();
    const Mat dh_total = dres2 + dpre * lp.w1.transpose();

    const Mat dres1 = nn::layer_norm_backward(dh_total, lp.ln1_g, c.ln1, g.ln1_g, g.ln1_b);
    g.wo += c.ctx.transpose() * dres1;
    g.bo += dres1.colwise().sum();
    const Mat dctx = dres1 * lp.wo.transpose();

    Mat dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
    for (Eigen::Index h = 0; h < heads; ++h) {
      const Mat& a = c.attn[static_cast<std::size_t>(h)];
      const auto dctx_h = dctx.middleCols(h * dh, dh);
      const Mat da = dctx_h * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = a.transpose() * dctx_h;
      const Eigen::VectorXd rowdot = (da.array() * a.array()).rowwise().sum();
      const Mat ds = a.array() * (da.colwise() - rowdot).array();
      dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh) * scale;
      dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh) * scale;
    }
    g.wq += c.x.transpose() * dq, g.bq += dq.colwise().sum();
    g.wk += c.x.transpose() * dk, g.bk += dk.colwise().sum();
    g.wv += c.x.transpose() * dv, g.bv += dv.colwise().sum();
    dx = dres1 + dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
  }
  return nn::layer_norm_backward(dx, p.emb_ln_g, cache.emb_ln, grads.emb_ln_g, grads.emb_ln_b);
}

/// Routes dS back to the token, position and NTU projection parameters.
inline void backward_input(const Mat& ds, std::span<const TokenId> ids, const Eigen::VectorXd* ntu,
                           const EncoderState& state, EncoderParams& grads) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    grads.token_emb.row(ids[i]) += ds.row(static_cast<Eigen::Index>(i));
    grads.pos_emb.row(static_cast<Eigen::Index>(i)) += ds.row(static_cast<Eigen::Index>(i));
  }
  if (state.config.use_ntu) {
    const auto last = ds.row(ds.rows() - 1);
    grads.ntu_w += *ntu * last;
    grads.ntu_b += last;
  }
}

}  // namespace ntulm
