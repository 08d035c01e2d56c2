#include "kdistill/model.hpp"

#include <cmath>
#include <limits>

#include "kdistill/rng.hpp"

namespace kdistill {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

// Row-wise layer norm; fills xhat and invstd for the backward pass.
Mat layer_norm(const Mat& x, const Vec& g, const Vec& b, Mat& xhat, Vec& invstd) {
  const Eigen::Index T = x.rows();
  const Eigen::Index D = x.cols();
  xhat.resize(T, D);
  invstd.resize(T);
  Mat y(T, D);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double mu = x.row(t).mean();
    const double var = (x.row(t).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    invstd(t) = inv;
    xhat.row(t) = (x.row(t).array() - mu) * inv;
    y.row(t) = xhat.row(t).cwiseProduct(g.transpose()) + b.transpose();
  }
  return y;
}

Mat layer_norm_output(const Mat& xhat, const Vec& g, const Vec& b) {
  Mat y = xhat.array().rowwise() * g.transpose().array();
  y.rowwise() += b.transpose();
  return y;
}

// dx for row-wise layer norm; accumulates dgamma/dbeta.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& invstd, const Vec& g,
                        Vec& dg, Vec& db) {
  const Eigen::Index T = dy.rows();
  Mat dx(T, dy.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    dg += dy.row(t).cwiseProduct(xhat.row(t)).transpose();
    db += dy.row(t).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(t).cwiseProduct(g.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(t)).mean();
    dx.row(t) = invstd(t) * (dxhat.array() - m1 - xhat.row(t).array() * m2);
  }
  return dx;
}

std::string leaf_name(const std::string& name) {
  const auto pos = name.rfind('.');
  return pos == std::string::npos ? name : name.substr(pos + 1);
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || max_seq_len <= 0) {
    throw ConfigError("model config: dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("model config: d_model not divisible by n_heads");
  if (vocab_size <= 0) throw ConfigError("model config: vocab_size must be set");
}

const char* role_name(Role r) {
  switch (r) {
    case Role::base: return "base";
    case Role::student: return "student";
    case Role::teacher: return "teacher";
    case Role::generator: return "generator";
  }
  return "?";
}

Parameters Parameters::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  Parameters p;
  p.tok_emb = Mat::Zero(cfg.vocab_size, d);
  p.pos_emb = Mat::Zero(cfg.max_seq_len, d);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : p.layers) {
    l.ln1_g = Vec::Zero(d);
    l.ln1_b = Vec::Zero(d);
    l.wq = Mat::Zero(d, d);
    l.wk = Mat::Zero(d, d);
    l.wv = Mat::Zero(d, d);
    l.wo = Mat::Zero(d, d);
    l.bq = Vec::Zero(d);
    l.bk = Vec::Zero(d);
    l.bv = Vec::Zero(d);
    l.bo = Vec::Zero(d);
    l.ln2_g = Vec::Zero(d);
    l.ln2_b = Vec::Zero(d);
    l.w1 = Mat::Zero(d, cfg.d_ff());
    l.b1 = Vec::Zero(cfg.d_ff());
    l.w2 = Mat::Zero(cfg.d_ff(), d);
    l.b2 = Vec::Zero(d);
  }
  p.lnf_g = Vec::Zero(d);
  p.lnf_b = Vec::Zero(d);
  p.head = Mat::Zero(d, cfg.vocab_size);
  return p;
}

Parameters Parameters::random(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters p = zeros(cfg);
  Rng rng = Rng::stream(seed, "init");
  p.visit([&](const std::string& name, auto& m) {
    const std::string leaf = leaf_name(name);
    if (leaf == "head") return;                                       // uniform start
    if (leaf.size() >= 2 && leaf.substr(leaf.size() - 2) == "_g") {  // layer norm gains
      m.setOnes();
      return;
    }
    if (leaf[0] == 'b' || (leaf.size() >= 2 && leaf.substr(leaf.size() - 2) == "_b")) return;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, kInitStd);
  });
  return p;
}

long Parameters::count() const {
  long n = 0;
  visit([&](const std::string&, const auto& m) { n += static_cast<long>(m.size()); });
  return n;
}

void Parameters::set_zero() {
  visit([](const std::string&, auto& m) { m.setZero(); });
}

bool Parameters::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::uint64_t Parameters::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  visit([&](const std::string&, const auto& m) {
    h = fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
  });
  return h;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed, Role role)
    : cfg_(cfg), params_(Parameters::random(cfg, seed)), role_(role) {}

Model::Model(const ModelConfig& cfg, Parameters params, Role role)
    : cfg_(cfg), params_(std::move(params)), role_(role) {
  cfg_.validate();
}

ForwardCache Model::forward_cached(const TokenSeq& x) const {
  const int T = static_cast<int>(x.size());
  if (T == 0) throw ConfigError("forward: empty input");
  if (T > cfg_.max_seq_len) {
    throw SequenceTooLongError("forward: sequence length " + std::to_string(T) +
                               " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  for (TokenId id : x) {
    if (id < 0 || id >= cfg_.vocab_size) throw ConfigError("forward: token id out of range");
  }

  const int d = cfg_.d_model;
  const int H = cfg_.n_heads;
  const int dh = cfg_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  ForwardCache c;
  c.tokens = x;
  c.h0.resize(T, d);
  for (int t = 0; t < T; ++t) {
    c.h0.row(t) = params_.tok_emb.row(x[t]) + params_.pos_emb.row(t);
  }

  Mat h = c.h0;
  c.layers.resize(static_cast<std::size_t>(cfg_.n_layers));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const LayerParams& lp = params_.layers[static_cast<std::size_t>(l)];
    LayerCache& lc = c.layers[static_cast<std::size_t>(l)];
    lc.x_in = h;

    const Mat a = layer_norm(h, lp.ln1_g, lp.ln1_b, lc.ln1_xhat, lc.ln1_invstd);
    lc.q.noalias() = a * lp.wq;
    lc.q.rowwise() += lp.bq.transpose();
    lc.k.noalias() = a * lp.wk;
    lc.k.rowwise() += lp.bk.transpose();
    lc.v.noalias() = a * lp.wv;
    lc.v.rowwise() += lp.bv.transpose();

    lc.att.resize(static_cast<std::size_t>(H));
    lc.ctx.resize(T, d);
    for (int hd = 0; hd < H; ++hd) {
      auto qh = lc.q.middleCols(hd * dh, dh);
      auto kh = lc.k.middleCols(hd * dh, dh);
      auto vh = lc.v.middleCols(hd * dh, dh);
      Mat scores(T, T);
      scores.noalias() = qh * kh.transpose();
      scores *= scale;
      for (int i = 0; i < T; ++i) {
        for (int j = i + 1; j < T; ++j) scores(i, j) = neg_inf;
      }
      lc.att[static_cast<std::size_t>(hd)] = softmax_rows(scores);
      lc.ctx.middleCols(hd * dh, dh).noalias() = lc.att[static_cast<std::size_t>(hd)] * vh;
    }
    Mat attn_out;
    attn_out.noalias() = lc.ctx * lp.wo;
    attn_out.rowwise() += lp.bo.transpose();
    lc.x_mid = h + attn_out;

    const Mat b = layer_norm(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2_xhat, lc.ln2_invstd);
    lc.m_pre.noalias() = b * lp.w1;
    lc.m_pre.rowwise() += lp.b1.transpose();
    lc.m_act = lc.m_pre.unaryExpr([](double v) { return gelu(v); });
    Mat mlp_out;
    mlp_out.noalias() = lc.m_act * lp.w2;
    mlp_out.rowwise() += lp.b2.transpose();
    h = lc.x_mid + mlp_out;
  }

  c.x_final = h;
  const Mat hf = layer_norm(h, params_.lnf_g, params_.lnf_b, c.lnf_xhat, c.lnf_invstd);
  c.logits.noalias() = hf * params_.head;
  return c;
}

Parameters Model::backward(const ForwardCache& c, const Mat& dlogits) const {
  const int T = static_cast<int>(c.tokens.size());
  const int H = cfg_.n_heads;
  const int dh = cfg_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Parameters g = Parameters::zeros(cfg_);

  const Mat hf = layer_norm_output(c.lnf_xhat, params_.lnf_g, params_.lnf_b);
  g.head.noalias() = hf.transpose() * dlogits;
  Mat dhf;
  dhf.noalias() = dlogits * params_.head.transpose();
  Mat dx = layer_norm_backward(dhf, c.lnf_xhat, c.lnf_invstd, params_.lnf_g, g.lnf_g, g.lnf_b);

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const LayerParams& lp = params_.layers[static_cast<std::size_t>(l)];
    LayerParams& gl = g.layers[static_cast<std::size_t>(l)];
    const LayerCache& lc = c.layers[static_cast<std::size_t>(l)];

    // MLP branch: h_out = x_mid + gelu(ln2(x_mid) w1 + b1) w2 + b2
    const Mat& dmlp_out = dx;
    gl.b2 += dmlp_out.colwise().sum().transpose();
    gl.w2.noalias() += lc.m_act.transpose() * dmlp_out;
    Mat dm_act;
    dm_act.noalias() = dmlp_out * lp.w2.transpose();
    Mat dm_pre = dm_act.cwiseProduct(lc.m_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    const Mat b = layer_norm_output(lc.ln2_xhat, lp.ln2_g, lp.ln2_b);
    gl.b1 += dm_pre.colwise().sum().transpose();
    gl.w1.noalias() += b.transpose() * dm_pre;
    Mat dbn;
    dbn.noalias() = dm_pre * lp.w1.transpose();
    Mat dx_mid = dx + layer_norm_backward(dbn, lc.ln2_xhat, lc.ln2_invstd, lp.ln2_g, gl.ln2_g, gl.ln2_b);

    // Attention branch: x_mid = x_in + ctx wo + bo
    const Mat& dattn_out = dx_mid;
    gl.bo += dattn_out.colwise().sum().transpose();
    gl.wo.noalias() += lc.ctx.transpose() * dattn_out;
    Mat dctx;
    dctx.noalias() = dattn_out * lp.wo.transpose();

    Mat dq = Mat::Zero(T, cfg_.d_model);
    Mat dk = Mat::Zero(T, cfg_.d_model);
    Mat dv = Mat::Zero(T, cfg_.d_model);
    for (int hd = 0; hd < H; ++hd) {
      const Mat& att = lc.att[static_cast<std::size_t>(hd)];
      auto qh = lc.q.middleCols(hd * dh, dh);
      auto kh = lc.k.middleCols(hd * dh, dh);
      auto vh = lc.v.middleCols(hd * dh, dh);
      auto dctx_h = dctx.middleCols(hd * dh, dh);

      Mat dA;
      dA.noalias() = dctx_h * vh.transpose();
      dv.middleCols(hd * dh, dh).noalias() = att.transpose() * dctx_h;

      // Softmax backward; masked entries have att == 0 so they stay zero.
      Mat dS = att.cwiseProduct(dA);
      const Vec row_dot = dS.rowwise().sum();
      dS = att.cwiseProduct(dA.colwise() - row_dot);
      dS *= scale;

      dq.middleCols(hd * dh, dh).noalias() = dS * kh;
      dk.middleCols(hd * dh, dh).noalias() = dS.transpose() * qh;
    }

    const Mat a = layer_norm_output(lc.ln1_xhat, lp.ln1_g, lp.ln1_b);
    gl.wq.noalias() += a.transpose() * dq;
    gl.bq += dq.colwise().sum().transpose();
    gl.wk.noalias() += a.transpose() * dk;
    gl.bk += dk.colwise().sum().transpose();
    gl.wv.noalias() += a.transpose() * dv;
    gl.bv += dv.colwise().sum().transpose();

    Mat da;
    da.noalias() = dq * lp.wq.transpose();
    da.noalias() += dk * lp.wk.transpose();
    da.noalias() += dv * lp.wv.transpose();
    dx = dx_mid + layer_norm_backward(da, lc.ln1_xhat, lc.ln1_invstd, lp.ln1_g, gl.ln1_g, gl.ln1_b);
  }

  for (int t = 0; t < T; ++t) {
    g.tok_emb.row(c.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    g.pos_emb.row(t) += dx.row(t);
  }
  return g;
}

DistSeq Model::forward(const TokenSeq& x) const {
  ForwardCache c = forward_cached(x);
  DistSeq out;
  out.logits = std::move(c.logits);
  out.probs = softmax_rows(out.logits);
  return out;
}

DistSeq Model::conditional_forward(const TokenSeq& prefix, const TokenSeq& cont) const {
  if (cont.empty()) return DistSeq{Mat(0, cfg_.vocab_size), Mat(0, cfg_.vocab_size)};
  TokenSeq full = prefix;
  full.insert(full.end(), cont.begin(), cont.end());
  DistSeq whole = forward(full);
  const auto n = static_cast<Eigen::Index>(cont.size());
  DistSeq out;
  out.probs = whole.probs.bottomRows(n);
  out.logits = whole.logits.bottomRows(n);
  return out;
}

std::vector<double> Model::nll(const TokenSeq& x, const TokenSeq& y) const {
  if (y.empty()) throw ConfigError("nll: empty target span");
  if (x.empty()) throw ConfigError("nll: empty prefix (first target token would be unconditioned)");
  TokenSeq full = x;
  full.insert(full.end(), y.begin(), y.end());
  ForwardCache c = forward_cached(full);
  const Mat logp = log_softmax_rows(c.logits);
  std::vector<double> out(y.size());
  const int nx = static_cast<int>(x.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    out[k] = -logp(nx + static_cast<int>(k) - 1, y[k]);
  }
  return out;
}

double Model::perplexity(const TokenSeq& x, const TokenSeq& y) const {
  const auto nlls = nll(x, y);
  double mean = 0.0;
  for (double v : nlls) mean += v;
  mean /= static_cast<double>(nlls.size());
  return std::exp(mean);
}

Model Model::deep_copy(Role role) const { return Model(cfg_, params_, role); }

}  // namespace kdistill
