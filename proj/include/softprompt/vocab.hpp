#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "softprompt/errors.hpp"

namespace softprompt {

// Word-level tokenizer: runs of [A-Za-z0-9_] form one token, every other
// printable character is its own token, whitespace only separates.
inline std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c == '_') {
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return out;
}

struct TokenSequence {
  std::vector<int> ids;
  int max_len = 0;

  // Number of leading non-padding positions.
  int content_length(int pad_id) const {
    int n = static_cast<int>(ids.size());
    while (n > 0 && ids[n - 1] == pad_id) --n;
    return n;
  }

  std::vector<int> content(int pad_id) const {
    return std::vector<int>(ids.begin(), ids.begin() + content_length(pad_id));
  }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary() = default;

  int size() const { return static_cast<int>(tokens_.size()); }

  bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

  int id_or_unk(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size()) throw ArgumentError("token id out of range");
    return tokens_[id];
  }

  // Reserved ids beyond the four specials (e.g. the code/summary separator)
  // occupy ids [4, 4 + n_reserved). Returns -1 when absent.
  int reserved_id(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end() || it->second < 4 || it->second >= 4 + n_reserved_) return -1;
    return it->second;
  }

  int first_regular_id() const { return 4 + n_reserved_; }

  bool is_special(int id) const { return id < first_regular_id(); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  // Builds a vocabulary from a token frequency table: the four special
  // tokens, then any reserved tokens, then the most frequent tokens with
  // frequency >= min_freq, ties broken by lexicographic order, capped so the
  // total size does not exceed max_size (counting specials but not reserved
  // extras, which are an explicit opt-in on top of the contract).
  static Vocabulary build(const std::map<std::string, long>& freq, long min_freq, int max_size,
                          const std::vector<std::string>& reserved = {}) {
    if (min_freq < 1) throw ArgumentError("build_vocabulary: min_freq must be >= 1");
    if (max_size < 5) throw ArgumentError("build_vocabulary: max_size too small");
    Vocabulary v;
    v.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (const auto& r : reserved) v.tokens_.push_back(r);
    v.n_reserved_ = static_cast<int>(reserved.size());

    std::vector<std::pair<std::string, long>> items;
    for (const auto& [tok, n] : freq) {
      if (n >= min_freq && std::find(reserved.begin(), reserved.end(), tok) == reserved.end())
        items.emplace_back(tok, n);
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    const size_t cap = static_cast<size_t>(max_size - 4);
    for (size_t i = 0; i < items.size() && i < cap; ++i) v.tokens_.push_back(items[i].first);

    for (int i = 0; i < v.size(); ++i) v.index_.emplace(v.tokens_[i], i);
    return v;
  }

  void save(const std::string& path) const {
    nlohmann::json j;
    j["format"] = "softprompt.vocab";
    j["version"] = 1;
    j["n_reserved"] = n_reserved_;
    j["tokens"] = tokens_;
    std::ofstream os(path);
    if (!os) throw IoError("cannot write vocabulary: " + path);
    os << j.dump(0) << "\n";
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open vocabulary: " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("corrupt vocabulary file: ") + e.what());
    }
    if (j.value("format", "") != "softprompt.vocab" || j.value("version", -1) != 1)
      throw CompatibilityError("unrecognized vocabulary file: " + path);
    Vocabulary v;
    v.n_reserved_ = j.value("n_reserved", 0);
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    if (v.size() < 4 + v.n_reserved_) throw IoError("vocabulary file too small: " + path);
    for (int i = 0; i < v.size(); ++i) v.index_.emplace(v.tokens_[i], i);
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int n_reserved_ = 0;
};

// Token id sequence for a text: optional BOS/EOS wrapping, truncation to
// max_len, then PAD fill up to max_len. EOS is dropped when it does not fit.
inline TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len,
                              bool add_bos_eos) {
  if (max_len < 1) throw ArgumentError("tokenize: max_len must be >= 1");
  TokenSequence seq;
  seq.max_len = max_len;
  if (add_bos_eos) seq.ids.push_back(Vocabulary::kBos);
  for (const auto& tok : split_tokens(text)) {
    if (static_cast<int>(seq.ids.size()) >= max_len) break;
    seq.ids.push_back(vocab.id_or_unk(tok));
  }
  if (add_bos_eos && static_cast<int>(seq.ids.size()) < max_len)
    seq.ids.push_back(Vocabulary::kEos);
  if (static_cast<int>(seq.ids.size()) > max_len) seq.ids.resize(max_len);
  while (static_cast<int>(seq.ids.size()) < max_len) seq.ids.push_back(Vocabulary::kPad);
  return seq;
}

// Space-joined surface form; special ids render as nothing.
inline std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (vocab.is_special(id) && id != Vocabulary::kUnk) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token_of(id);
  }
  return out;
}

}  // namespace softprompt
