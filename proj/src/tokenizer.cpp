#include "kdistill/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace kdistill {

namespace {
const std::vector<std::string>& specials() {
  static const std::vector<std::string> s = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return s;
}
}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < specials().size()) {
    throw ConfigError("vocabulary must contain at least the four special tokens");
  }
  for (std::size_t i = 0; i < specials().size(); ++i) {
    if (tokens_[i] != specials()[i]) {
      throw ConfigError("vocabulary specials must come first in pad/bos/eos/unk order");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw ConfigError("duplicate token in vocabulary: " + tokens_[i]);
  }
}

TokenId Vocabulary::id_of(std::string_view tok) const {
  auto it = index_.find(std::string(tok));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || id >= size()) throw ConfigError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open vocabulary file for writing: " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open vocabulary file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, int max_size) {
  if (corpus.empty()) throw ConfigError("build_vocab: empty corpus");
  const int n_special = static_cast<int>(specials().size());
  if (max_size < n_special) throw ConfigError("build_vocab: max_size smaller than special count");

  // std::map keeps words sorted so frequency ties resolve lexicographically.
  std::map<std::string, long> counts;
  for (const auto& text : corpus) {
    for (auto& w : split_whitespace(text)) ++counts[w];
  }

  std::vector<std::pair<std::string, long>> by_freq(counts.begin(), counts.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens = specials();
  for (const auto& [word, count] : by_freq) {
    if (static_cast<int>(tokens.size()) >= max_size) break;
    tokens.push_back(word);
  }
  return Vocabulary(std::move(tokens));
}

TokenSeq encode(std::string_view text, const Vocabulary& v) {
  TokenSeq out;
  for (auto& w : split_whitespace(text)) out.push_back(v.id_of(w));
  return out;
}

std::string decode(const TokenSeq& t, const Vocabulary& v) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0) out += ' ';
    out += v.token(t[i]);
  }
  return out;
}

bool contains_subsequence(const TokenSeq& c, const TokenSeq& e) {
  if (e.empty() || e.size() > c.size()) return false;
  return std::search(c.begin(), c.end(), e.begin(), e.end()) != c.end();
}

int find_entity_end(const TokenSeq& c, const TokenSeq& e) {
  if (e.empty()) throw EntityNotFoundError("find_entity_end: empty entity");
  auto it = std::search(c.begin(), c.end(), e.begin(), e.end());
  if (it == c.end()) throw EntityNotFoundError("find_entity_end: entity not present in continuation");
  const auto start0 = static_cast<int>(it - c.begin());
  return start0 + static_cast<int>(e.size());  // 1-based last-token index
}

}  // namespace kdistill
