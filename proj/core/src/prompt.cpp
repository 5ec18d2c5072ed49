// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/prompt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "semmix/error.hpp"

namespace semmix {

Vocabulary::Vocabulary(const std::vector<std::string>& concepts) {
  for (const auto& word : concepts) {
    if (word.empty() || word.find_first_of(" \t\n:") != std::string::npos) {
      throw_invalid("vocabulary word '" + word + "' is empty or contains a separator");
    }
    if (find(word)) throw_invalid("duplicate vocabulary word '" + word + "'");
    words_.push_back(word);
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) return std::nullopt;
  return static_cast<TokenId>(it - words_.begin());
}

const std::string& Vocabulary::word(TokenId id) const {
  if (!contains(id)) throw_invalid("token id " + std::to_string(id) + " out of vocabulary");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::concepts() const {
  return {words_.begin() + 3, words_.end()};
}

nlohmann::json Vocabulary::to_json() const { return concepts(); }

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw_invalid("vocabulary must be a list of words");
  return Vocabulary(doc.get<std::vector<std::string>>());
}

Prompt Prompt::null_prompt() { return {{Vocabulary::kNull}, {1.0}}; }

bool Prompt::is_null() const {
  return tokens.size() == 1 && tokens[0] == Vocabulary::kNull;
}

bool Prompt::has_negative_scale() const {
  return std::any_of(scales.begin(), scales.end(), [](double s) { return s < 0.0; });
}

namespace {

double parse_scale(std::string_view text, std::string_view word) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw_invalid("bad scale '" + std::string(text) + "' on word '" + std::string(word) + "'");
  }
  if (value < kMinTokenScale || value > kMaxTokenScale) {
    throw_invalid("scale " + std::string(text) + " on word '" + std::string(word) +
                  "' is outside [-2, 2]");
  }
  return value;
}

std::string format_scale(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  // Prefer the shortest representation that round-trips.
  for (int digits = 1; digits <= 17; ++digits) {
    std::ostringstream trial;
    trial.precision(digits);
    trial << value;
    if (std::stod(trial.str()) == value) return trial.str();
  }
  return out.str();
}

}  // namespace

Prompt parse_prompt(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto start = text.find_first_not_of(" \t\n\r", pos);
    if (start == std::string_view::npos) break;
    const auto stop = std::min(text.find_first_of(" \t\n\r", start), text.size());
    words.push_back(text.substr(start, stop - start));
    pos = stop;
  }
  if (words.empty()) throw_invalid("empty prompt");
  if (words.size() == 1 && words[0] == "<null>") return Prompt::null_prompt();

  Prompt prompt;
  prompt.tokens.push_back(Vocabulary::kBos);
  prompt.scales.push_back(1.0);
  for (auto item : words) {
    std::string_view word = item;
    double scale = 1.0;
    if (const auto colon = item.find(':'); colon != std::string_view::npos) {
      word = item.substr(0, colon);
      scale = parse_scale(item.substr(colon + 1), word);
    }
    const auto id = vocab.find(word);
    if (!id || *id <= Vocabulary::kNull) {
      throw_invalid("unknown word '" + std::string(word) + "'");
    }
    prompt.tokens.push_back(*id);
    prompt.scales.push_back(scale);
  }
  prompt.tokens.push_back(Vocabulary::kEos);
  prompt.scales.push_back(1.0);
  return prompt;
}

std::string format_prompt(const Prompt& prompt, const Vocabulary& vocab) {
  if (prompt.is_null()) return "<null>";
  std::string out;
  for (std::size_t i = 0; i < prompt.tokens.size(); ++i) {
    const auto id = prompt.tokens[i];
    if (id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    if (!out.empty()) out += ' ';
    out += vocab.word(id);
    if (prompt.scales[i] != 1.0) out += ":" + format_scale(prompt.scales[i]);
  }
  return out;
}

void validate_prompt(const Prompt& prompt, const Vocabulary& vocab) {
  if (prompt.tokens.empty()) throw_invalid("prompt has no tokens");
  if (prompt.tokens.size() != prompt.scales.size()) {
    throw_invalid("prompt token and scale counts differ");
  }
  for (std::size_t i = 0; i < prompt.tokens.size(); ++i) {
    if (!vocab.contains(prompt.tokens[i])) {
      throw_invalid("token id " + std::to_string(prompt.tokens[i]) + " out of vocabulary");
    }
    const double s = prompt.scales[i];
    if (!(s >= kMinTokenScale && s <= kMaxTokenScale)) {
      throw_invalid("token scale outside [-2, 2]");
    }
  }
}

Prompt with_target_scale(const Prompt& prompt, double scale) {
  Prompt out = prompt;
  const bool annotated = std::any_of(prompt.scales.begin(), prompt.scales.end(),
                                     [](double s) { return s != 1.0; });
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    const auto id = out.tokens[i];
    if (id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    if (annotated && prompt.scales[i] == 1.0) continue;
    out.scales[i] = scale;
  }
  return out;
}

}  // namespace semmix
