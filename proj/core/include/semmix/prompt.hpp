// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace semmix {

using TokenId = std::int32_t;

/// Fixed concept vocabulary. Ids 0..2 are always BOS, EOS and NULL.
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kNull = 2;

  Vocabulary() = default;
  /// `concepts` are the non-special words, in id order starting at 3.
  explicit Vocabulary(const std::vector<std::string>& concepts);

  std::size_t size() const { return words_.size(); }
  std::optional<TokenId> find(std::string_view word) const;
  const std::string& word(TokenId id) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < words_.size(); }
  std::vector<std::string> concepts() const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> words_{"<bos>", "<eos>", "<null>"};
};

inline constexpr double kMinTokenScale = -2.0;
inline constexpr double kMaxTokenScale = 2.0;

/// Ordered concept tokens with one cross-attention scale per token.
struct Prompt {
  std::vector<TokenId> tokens;
  std::vector<double> scales;

  static Prompt null_prompt();
  bool is_null() const;
  bool has_negative_scale() const;
  std::size_t size() const { return tokens.size(); }

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

/// Parses "word[:scale] ..." into [BOS, words..., EOS]. The single word
/// "<null>" yields the unconditional prompt.
Prompt parse_prompt(std::string_view text, const Vocabulary& vocab);

/// Canonical text form; parse_prompt(format_prompt(p)) == p.
std::string format_prompt(const Prompt& prompt, const Vocabulary& vocab);

/// Throws unless the prompt satisfies the Prompt invariants against `vocab`.
void validate_prompt(const Prompt& prompt, const Vocabulary& vocab);

/// Copy of `prompt` with `scale` on every concept token (everything except
/// BOS/EOS). If any token already carries a non-unit scale, only those
/// tokens are rescaled.
Prompt with_target_scale(const Prompt& prompt, double scale);

}  // namespace semmix
