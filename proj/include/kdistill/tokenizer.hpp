#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kdistill/errors.hpp"
#include "kdistill/linalg.hpp"

namespace kdistill {

// Whitespace word-level vocabulary. Token ids are 0..size()-1 and bijective
// with token strings; the four specials always occupy ids 0..3.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(std::string_view tok) const { return index_.count(std::string(tok)) > 0; }
  TokenId id_of(std::string_view tok) const;  // kUnk when absent
  const std::string& token(TokenId id) const;

  // One token per line, line number = id, specials first; UTF-8.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Most frequent whitespace-delimited tokens up to max_size (specials
// included in the cap); frequency ties broken lexicographically.
Vocabulary build_vocab(const std::vector<std::string>& corpus, int max_size);

std::vector<std::string> split_whitespace(std::string_view text);

TokenSeq encode(std::string_view text, const Vocabulary& v);
std::string decode(const TokenSeq& t, const Vocabulary& v);

// 1-based index of the last token of the first occurrence of e in c, i.e.
// the mention ends before position ell+1. Throws EntityNotFoundError when e
// does not occur as a contiguous subsequence.
int find_entity_end(const TokenSeq& c, const TokenSeq& e);

// True when e occurs contiguously in c.
bool contains_subsequence(const TokenSeq& c, const TokenSeq& e);

}  // namespace kdistill
