// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "semmix/error.hpp"
#include "semmix/prompt.hpp"

namespace semmix {
namespace {

const Vocabulary kVocab({"circle", "square", "striped", "solid"});

TEST(Prompt, ParseAddsMarkersAndScales) {
  const Prompt p = parse_prompt("circle striped:-0.5", kVocab);
  EXPECT_EQ(p.tokens, (std::vector<TokenId>{Vocabulary::kBos, 3, 5, Vocabulary::kEos}));
  EXPECT_EQ(p.scales, (std::vector<double>{1.0, 1.0, -0.5, 1.0}));
  EXPECT_TRUE(p.has_negative_scale());
}

TEST(Prompt, NullPrompt) {
  const Prompt p = parse_prompt("  <null> ", kVocab);
  EXPECT_TRUE(p.is_null());
  EXPECT_EQ(format_prompt(p, kVocab), "<null>");
  EXPECT_FALSE(parse_prompt("circle", kVocab).is_null());
}

TEST(Prompt, FormatRoundTrips) {
  for (const char* text : {"circle", "square solid", "circle:2 striped:-2", "solid:0.125 square:0"}) {
    const Prompt p = parse_prompt(text, kVocab);
    EXPECT_EQ(format_prompt(p, kVocab), text);
    EXPECT_EQ(parse_prompt(format_prompt(p, kVocab), kVocab), p);
  }
}

TEST(Prompt, RejectsUnknownWordsAndBadScales) {
  EXPECT_THROW(parse_prompt("hexagon", kVocab), Error);
  EXPECT_THROW(parse_prompt("", kVocab), Error);
  EXPECT_THROW(parse_prompt("circle:2.5", kVocab), Error);
  EXPECT_THROW(parse_prompt("circle:abc", kVocab), Error);
  EXPECT_THROW(parse_prompt("<bos>", kVocab), Error);
  try {
    parse_prompt("circle hexagon", kVocab);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kInvalidConfig);
    EXPECT_NE(std::string(e.what()).find("hexagon"), std::string::npos);
  }
}

TEST(Prompt, ValidateChecksIdsAndRanges) {
  Prompt p = parse_prompt("circle", kVocab);
  EXPECT_NO_THROW(validate_prompt(p, kVocab));
  p.scales[1] = 3.0;
  EXPECT_THROW(validate_prompt(p, kVocab), Error);
  p.scales[1] = 1.0;
  p.tokens[1] = 99;
  EXPECT_THROW(validate_prompt(p, kVocab), Error);
  p.scales.pop_back();
  EXPECT_THROW(validate_prompt(p, kVocab), Error);
}

TEST(Prompt, TargetScaleHitsAnnotatedTokensOnly) {
  const Prompt plain = parse_prompt("circle striped", kVocab);
  EXPECT_EQ(with_target_scale(plain, -1.0).scales, (std::vector<double>{1, -1, -1, 1}));
  const Prompt marked = parse_prompt("circle striped:0.5", kVocab);
  EXPECT_EQ(with_target_scale(marked, -2.0).scales, (std::vector<double>{1, 1, -2, 1}));
}

TEST(Vocabulary, JsonRoundTrip) {
  EXPECT_EQ(Vocabulary::from_json(kVocab.to_json()), kVocab);
  EXPECT_EQ(kVocab.size(), 7u);
  EXPECT_EQ(kVocab.word(Vocabulary::kNull), "<null>");
  EXPECT_EQ(*kVocab.find("square"), 4);
}

}  // namespace
}  // namespace semmix
