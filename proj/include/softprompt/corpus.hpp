#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "softprompt/errors.hpp"
#include "softprompt/rng.hpp"
#include "softprompt/vocab.hpp"

namespace softprompt {

// One training/eval example. Summaries are whitespace-normalized at load
// time so they never contain newlines.
struct CodeSummaryPair {
  std::string code;
  std::string summary;
  std::string language_tag = "java";
};

inline std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool in_space = true;  // also trims leading space
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(static_cast<char>(c));
      in_space = false;
    }
  }
  return out;
}

struct LineError {
  long line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<CodeSummaryPair> pairs;
  std::vector<LineError> errors;
};

// JSON Lines loader following the code-to-text layout: required string
// fields "code" and "docstring", optional "language". Malformed lines are
// reported per line; an input that yields zero valid records is an error.
inline LoadResult load_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open corpus file: " + path);
  LoadResult out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (collapse_whitespace(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      out.errors.push_back({line_no, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    if (!j.is_object() || !j.contains("code") || !j.contains("docstring") ||
        !j["code"].is_string() || !j["docstring"].is_string()) {
      out.errors.push_back({line_no, "missing string fields \"code\"/\"docstring\""});
      continue;
    }
    CodeSummaryPair p;
    p.code = j["code"].get<std::string>();
    p.summary = collapse_whitespace(j["docstring"].get<std::string>());
    p.language_tag = j.value("language", std::string("java"));
    if (collapse_whitespace(p.code).empty() || p.summary.empty()) {
      out.errors.push_back({line_no, "empty code or docstring"});
      continue;
    }
    out.pairs.push_back(std::move(p));
  }
  if (out.pairs.empty())
    throw DatasetError("no valid records in " + path + " (" +
                       std::to_string(out.errors.size()) + " malformed lines)");
  return out;
}

inline void write_jsonl(const std::vector<CodeSummaryPair>& pairs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write corpus file: " + path);
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["code"] = p.code;
    j["docstring"] = p.summary;
    j["language"] = p.language_tag;
    os << j.dump() << "\n";
  }
}

inline Vocabulary build_vocabulary(const std::vector<CodeSummaryPair>& pairs, long min_freq,
                                   int max_size, const std::vector<std::string>& reserved = {}) {
  if (pairs.empty()) throw ArgumentError("build_vocabulary: empty corpus");
  std::map<std::string, long> freq;
  for (const auto& p : pairs) {
    for (const auto& t : split_tokens(p.code)) ++freq[t];
    for (const auto& t : split_tokens(p.summary)) ++freq[t];
  }
  return Vocabulary::build(freq, min_freq, max_size, reserved);
}

struct SplitSpec {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  uint64_t seed = 7;
};

struct CorpusSplits {
  std::vector<CodeSummaryPair> train;
  std::vector<CodeSummaryPair> valid;
  std::vector<CodeSummaryPair> test;
};

// Deterministic shuffled split; the three parts are disjoint and their union
// is the input multiset.
inline CorpusSplits split_pairs(const std::vector<CodeSummaryPair>& pairs, const SplitSpec& spec) {
  if (spec.train < 0 || spec.valid < 0 || spec.test < 0 ||
      std::abs(spec.train + spec.valid + spec.test - 1.0) > 1e-9)
    throw ArgumentError("split_pairs: fractions must be non-negative and sum to 1");
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  const size_t n = pairs.size();
  size_t n_train = static_cast<size_t>(std::llround(spec.train * static_cast<double>(n)));
  size_t n_valid = static_cast<size_t>(std::llround(spec.valid * static_cast<double>(n)));
  n_train = std::min(n_train, n);
  n_valid = std::min(n_valid, n - n_train);

  CorpusSplits out;
  for (size_t i = 0; i < n; ++i) {
    const CodeSummaryPair& p = pairs[order[i]];
    if (i < n_train)
      out.train.push_back(p);
    else if (i < n_train + n_valid)
      out.valid.push_back(p);
    else
      out.test.push_back(p);
  }
  return out;
}

// k pairs sampled uniformly without replacement; deterministic given seed.
inline std::vector<CodeSummaryPair> select_few_shot(const std::vector<CodeSummaryPair>& pairs,
                                                    size_t k, uint64_t seed) {
  if (k > pairs.size())
    throw ArgumentError("select_few_shot: k exceeds population (" + std::to_string(k) + " > " +
                        std::to_string(pairs.size()) + ")");
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<CodeSummaryPair> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) out.push_back(pairs[order[i]]);
  return out;
}

}  // namespace softprompt
