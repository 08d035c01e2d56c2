#pragma once

#include <string>
#include <vector>

#include "kdistill/model.hpp"
#include "kdistill/rng.hpp"
#include "kdistill/tokenizer.hpp"

namespace kdtest {

using namespace kdistill;

// Vocabulary of the four specials plus the given words, in the given order.
inline Vocabulary make_vocab(const std::vector<std::string>& words) {
  std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens));
}

inline ModelConfig tiny_config(int vocab_size, int n_layers = 2, int d_model = 16, int n_heads = 2,
                               int max_seq_len = 32) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = d_model;
  c.n_heads = n_heads;
  c.max_seq_len = max_seq_len;
  c.vocab_size = vocab_size;
  return c;
}

// Model with every tensor (including the head) randomized, for tests that
// need non-uniform output distributions.
inline Model random_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m(cfg, seed);
  Rng rng = Rng::stream(seed, "test-head");
  auto& head = m.params().head;
  for (Eigen::Index i = 0; i < head.size(); ++i) head.data()[i] = rng.normal(0.0, 0.5);
  return m;
}

inline TokenSeq range_tokens(int start, int count) {
  TokenSeq t;
  for (int i = 0; i < count; ++i) t.push_back(start + i);
  return t;
}

}  // namespace kdtest
