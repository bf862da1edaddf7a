// src/lm.cpp
//
// SPDX-License-Identifier: Apache-2.0

#include "w2lp/lm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "w2lp/error.hpp"

namespace w2lp::lm {

namespace {

std::vector<std::string_view> SplitWhitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

bool ParseNumber(std::string_view s, double* out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), *out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string Lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string JoinKey(std::span<const std::string> tokens) {
  std::string key;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) key.push_back(' ');
    key += tokens[i];
  }
  return key;
}

[[noreturn]] void ParseFail(std::size_t line_no, const std::string& msg) {
  Fail(ErrorKind::kParse, "arpa line " + std::to_string(line_no) + ": " + msg);
}

}  // namespace

ArpaModel ArpaModel::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open language model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str());
}

ArpaModel ArpaModel::Parse(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(Trim(text.substr(pos, end - pos)));
    pos = end + 1;
  }

  std::size_t i = 0;
  while (i < lines.size() && lines[i].empty()) ++i;
  if (i == lines.size() || lines[i] != "\\data\\") {
    ParseFail(i + 1, "expected \\data\\ header");
  }
  ++i;

  std::vector<std::size_t> declared;
  for (; i < lines.size() && !lines[i].empty() && lines[i].front() != '\\'; ++i) {
    const auto line = lines[i];
    if (line.rfind("ngram ", 0) != 0) ParseFail(i + 1, "expected 'ngram k=count'");
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) ParseFail(i + 1, "expected 'ngram k=count'");
    double k = 0, c = 0;
    if (!ParseNumber(Trim(line.substr(6, eq - 6)), &k) ||
        !ParseNumber(Trim(line.substr(eq + 1)), &c) || c < 0) {
      ParseFail(i + 1, "malformed ngram count");
    }
    if (static_cast<std::size_t>(k) != declared.size() + 1) {
      ParseFail(i + 1, "ngram orders must be listed 1, 2, ...");
    }
    declared.push_back(static_cast<std::size_t>(c));
  }
  if (declared.empty()) ParseFail(i + 1, "no ngram counts declared");
  if (declared.size() > static_cast<std::size_t>(kMaxOrder)) {
    ParseFail(i + 1, "order above " + std::to_string(kMaxOrder));
  }

  ArpaModel model;
  const int order = static_cast<int>(declared.size());
  model.tables_.resize(order);
  bool saw_end = false;
  int current = 0;
  for (; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (line.empty()) continue;
    if (line == "\\end\\") {
      saw_end = true;
      ++i;
      break;
    }
    if (line.front() == '\\') {
      const auto dash = line.find("-grams:");
      double k = 0;
      if (dash == std::string_view::npos ||
          !ParseNumber(line.substr(1, dash - 1), &k) || k < 1 || k > order) {
        ParseFail(i + 1, "unexpected section '" + std::string(line) + "'");
      }
      current = static_cast<int>(k);
      continue;
    }
    if (current == 0) ParseFail(i + 1, "entry outside an n-gram section");

    const auto fields = SplitWhitespace(line);
    const std::size_t n = static_cast<std::size_t>(current);
    if (fields.size() != n + 1 && fields.size() != n + 2) {
      ParseFail(i + 1, "expected logprob, " + std::to_string(n) +
                           " tokens and an optional backoff");
    }
    NGramEntry entry;
    if (!ParseNumber(fields[0], &entry.log10_prob) || entry.log10_prob > 0.0) {
      ParseFail(i + 1, "bad log probability '" + std::string(fields[0]) + "'");
    }
    if (fields.size() == n + 2) {
      if (current == order) ParseFail(i + 1, "highest-order entry with a backoff");
      if (!ParseNumber(fields[n + 1], &entry.log10_backoff)) {
        ParseFail(i + 1, "bad backoff '" + std::string(fields[n + 1]) + "'");
      }
      entry.has_backoff = true;
    }
    std::vector<std::string> tokens;
    for (std::size_t k = 1; k <= n; ++k) tokens.push_back(Lower(fields[k]));
    model.tables_[current - 1][JoinKey(tokens)] = entry;
  }
  if (!saw_end) ParseFail(lines.size(), "missing \\end\\");
  for (; i < lines.size(); ++i) {
    if (!lines[i].empty()) ParseFail(i + 1, "content after \\end\\");
  }
  for (int k = 0; k < order; ++k) {
    if (model.tables_[k].size() != declared[k]) {
      Fail(ErrorKind::kParse,
           "arpa: header declares " + std::to_string(declared[k]) + " " +
               std::to_string(k + 1) + "-grams, file lists " +
               std::to_string(model.tables_[k].size()));
    }
  }
  return model;
}

bool ArpaModel::InVocab(std::string_view word) const {
  return tables_.front().count(std::string(word)) != 0;
}

std::vector<std::string> ArpaModel::Vocabulary() const {
  std::vector<std::string> out;
  for (const auto& [key, entry] : tables_.front()) out.push_back(key);
  std::sort(out.begin(), out.end());
  return out;
}

const NGramEntry* ArpaModel::Find(std::span<const std::string> tokens) const {
  if (tokens.empty() || tokens.size() > tables_.size()) return nullptr;
  const auto& table = tables_[tokens.size() - 1];
  const auto it = table.find(JoinKey(tokens));
  return it == table.end() ? nullptr : &it->second;
}

double ArpaModel::ScoreWord(std::span<const std::string> context,
                            std::string_view word) const {
  const std::size_t max_ctx = tables_.size() - 1;
  if (context.size() > max_ctx) context = context.last(max_ctx);

  std::vector<std::string> ngram(context.begin(), context.end());
  ngram.emplace_back(word);
  double backoff = 0.0;
  // Each iteration drops the oldest context word; at most `order` steps.
  for (std::size_t start = 0; start <= context.size(); ++start) {
    const std::span<const std::string> suffix(ngram.data() + start,
                                              ngram.size() - start);
    if (const NGramEntry* e = Find(suffix)) {
      return (backoff + e->log10_prob) * std::numbers::ln10;
    }
    if (start < context.size()) {
      const NGramEntry* ctx = Find(suffix.first(suffix.size() - 1));
      if (ctx && ctx->has_backoff) backoff += ctx->log10_backoff;
    }
  }
  const std::string unk(kUnknown);
  if (const NGramEntry* e = Find(std::span<const std::string>(&unk, 1))) {
    return (backoff + e->log10_prob) * std::numbers::ln10;
  }
  return -std::numeric_limits<double>::infinity();
}

double ArpaModel::ScoreSentence(std::span<const std::string> tokens) const {
  if (tokens.empty()) Fail(ErrorKind::kInvalidArgument, "empty sentence");
  std::vector<std::string> context{std::string(kSentenceStart)};
  double total = 0.0;
  for (const auto& t : tokens) {
    total += ScoreWord(context, t);
    context.push_back(t);
  }
  total += ScoreWord(context, kSentenceEnd);
  return total;
}

}  // namespace w2lp::lm
