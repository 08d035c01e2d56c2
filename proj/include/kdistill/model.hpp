#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kdistill/errors.hpp"
#include "kdistill/linalg.hpp"

namespace kdistill {

struct ModelConfig {
  int n_layers = 4;
  int d_model = 128;
  int n_heads = 4;
  int max_seq_len = 256;
  int vocab_size = 0;

  int d_ff() const { return 4 * d_model; }
  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Role tag for bookkeeping; carries no behavioral difference.
enum class Role { base, student, teacher, generator };

const char* role_name(Role r);

struct LayerParams {
  Vec ln1_g, ln1_b;
  Mat wq, wk, wv, wo;
  Vec bq, bk, bv, bo;
  Vec ln2_g, ln2_b;
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
};

// All weight tensors of the model. Also reused as the gradient container and
// as Adam moment storage, since those are shaped identically.
struct Parameters {
  Mat tok_emb;  // V x d
  Mat pos_emb;  // max_seq_len x d
  std::vector<LayerParams> layers;
  Vec lnf_g, lnf_b;
  Mat head;  // d x V; zero-initialized so a fresh model is uniform

  static Parameters zeros(const ModelConfig& cfg);
  static Parameters random(const ModelConfig& cfg, std::uint64_t seed);

  long count() const;
  void set_zero();
  bool all_finite() const;
  std::uint64_t checksum() const;

  // Applies f(name, member...) to every tensor of every passed Parameters in
  // lockstep. All arguments must share the same layer count.
  template <class F, class... Ps>
  static void zip(F&& f, Ps&... ps) {
    auto app = [&](const std::string& name, auto&... ms) { f(name, ms...); };
    app("tok_emb", ps.tok_emb...);
    app("pos_emb", ps.pos_emb...);
    const std::size_t n_layers = first_layer_count(ps...);
    for (std::size_t i = 0; i < n_layers; ++i) {
      const std::string p = "layers." + std::to_string(i) + ".";
      app(p + "ln1_g", ps.layers[i].ln1_g...);
      app(p + "ln1_b", ps.layers[i].ln1_b...);
      app(p + "wq", ps.layers[i].wq...);
      app(p + "bq", ps.layers[i].bq...);
      app(p + "wk", ps.layers[i].wk...);
      app(p + "bk", ps.layers[i].bk...);
      app(p + "wv", ps.layers[i].wv...);
      app(p + "bv", ps.layers[i].bv...);
      app(p + "wo", ps.layers[i].wo...);
      app(p + "bo", ps.layers[i].bo...);
      app(p + "ln2_g", ps.layers[i].ln2_g...);
      app(p + "ln2_b", ps.layers[i].ln2_b...);
      app(p + "w1", ps.layers[i].w1...);
      app(p + "b1", ps.layers[i].b1...);
      app(p + "w2", ps.layers[i].w2...);
      app(p + "b2", ps.layers[i].b2...);
    }
    app("lnf_g", ps.lnf_g...);
    app("lnf_b", ps.lnf_b...);
    app("head", ps.head...);
  }

  template <class F>
  void visit(F&& f) {
    zip(std::forward<F>(f), *this);
  }
  template <class F>
  void visit(F&& f) const {
    zip(std::forward<F>(f), *this);
  }

 private:
  template <class P0, class... Ps>
  static std::size_t first_layer_count(P0& p0, Ps&...) {
    return p0.layers.size();
  }
};

// Per-position probability vectors over the vocabulary; raw logits retained
// for temperature softening downstream.
struct DistSeq {
  Mat probs;   // T x V, rows sum to 1
  Mat logits;  // T x V

  int length() const { return static_cast<int>(probs.rows()); }
};

struct LayerCache {
  Mat x_in;       // block input, T x d
  Mat ln1_xhat;   // normalized input to attention
  Vec ln1_invstd;
  Mat q, k, v;            // T x d
  std::vector<Mat> att;   // per head, T x T, post-softmax
  Mat ctx;                // T x d
  Mat x_mid;              // after attention residual
  Mat ln2_xhat;
  Vec ln2_invstd;
  Mat m_pre;  // T x d_ff, pre-activation
  Mat m_act;  // T x d_ff, post-GELU
};

struct ForwardCache {
  TokenSeq tokens;
  Mat h0;
  std::vector<LayerCache> layers;
  Mat x_final;  // input to final layer norm
  Mat lnf_xhat;
  Vec lnf_invstd;
  Mat logits;  // T x V
};

// Decoder-only autoregressive transformer: learned token + position
// embeddings, pre-norm causal self-attention blocks with GELU MLPs, final
// layer norm and a linear vocabulary head.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed, Role role = Role::base);
  Model(const ModelConfig& cfg, Parameters params, Role role);

  const ModelConfig& config() const { return cfg_; }
  Role role() const { return role_; }
  void set_role(Role r) { role_ = r; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }
  long param_count() const { return params_.count(); }
  std::uint64_t checksum() const { return params_.checksum(); }

  // One next-token distribution per position; position j conditions only on
  // tokens 0..j. Throws SequenceTooLongError past max_seq_len.
  DistSeq forward(const TokenSeq& x) const;

  // forward(prefix + cont) restricted to the last |cont| positions, so row j
  // of the result is row |prefix|+j of the full pass.
  DistSeq conditional_forward(const TokenSeq& prefix, const TokenSeq& cont) const;

  // Per-token negative log likelihood (natural log) of y given x.
  std::vector<double> nll(const TokenSeq& x, const TokenSeq& y) const;
  // exp(mean nll)
  double perplexity(const TokenSeq& x, const TokenSeq& y) const;

  ForwardCache forward_cached(const TokenSeq& x) const;
  // Parameter gradients for d(loss)/d(logits); dlogits is T x V.
  Parameters backward(const ForwardCache& cache, const Mat& dlogits) const;

  Model deep_copy(Role role) const;

 private:
  ModelConfig cfg_;
  Parameters params_;
  Role role_;
};

}  // namespace kdistill
