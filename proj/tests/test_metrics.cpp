// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "tokcomp/metrics.hpp"
#include "tokcomp/oracle.hpp"

using namespace tokcomp;

namespace {

TokenSet line(std::vector<float> data, std::size_t dim) {
    const std::size_t n = data.size() / dim;
    return TokenSet(dim, {1, 1, n}, std::move(data));
}

}  // namespace

TEST(ClsScores, PassThrough) {
    AttentionBundle b;
    b.cls_to_patch = std::vector<float>{0.1f, 0.7f, 0.2f};
    const auto s = cls_scores(b);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_DOUBLE_EQ(s[0], static_cast<double>(0.1f));
    EXPECT_DOUBLE_EQ(s[1], static_cast<double>(0.7f));
    EXPECT_DOUBLE_EQ(s[2], static_cast<double>(0.2f));
    EXPECT_EQ(s.source, ScoreSource::ClsAttention);
}

TEST(ClsScores, MissingIsError) {
    try {
        cls_scores(AttentionBundle{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MissingClsAttention);
    }
}

TEST(TextScores, Reducers) {
    AttentionBundle one;
    one.text_to_visual = TextAttention{1, 2, {0.2f, 0.8f}};
    EXPECT_EQ(text_scores(one, TextReduce::Mean).scores, text_scores(one, TextReduce::LastRow).scores);
    EXPECT_DOUBLE_EQ(text_scores(one).scores[1], static_cast<double>(0.8f));

    AttentionBundle two;
    two.text_to_visual = TextAttention{2, 2, {1, 0, 0, 1}};
    EXPECT_EQ(text_scores(two, TextReduce::Mean).scores, (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(text_scores(two, TextReduce::LastRow).scores, (std::vector<double>{0.0, 1.0}));

    try {
        text_scores(AttentionBundle{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MissingTextAttention);
    }
}

TEST(CosineSim, Examples) {
    const auto same = cosine_sim(line({0.6f, 0.8f, 0.6f, 0.8f, 0.6f, 0.8f}, 2));
    for (double v : same.values) EXPECT_NEAR(v, 1.0, 1e-12);

    const auto basis = cosine_sim(line({1, 0, 0, 1}, 2));
    EXPECT_EQ(basis.at(0, 0), 1.0);
    EXPECT_EQ(basis.at(0, 1), 0.0);

    const auto diag = cosine_sim(line({1, 0, 1, 1}, 2));
    EXPECT_NEAR(diag.at(0, 1), 0.7071, 1e-4);
}

TEST(CosineSim, ZeroRowsAreDissimilar) {
    const auto s = cosine_sim(line({0, 0, 1, 0, 0, 0}, 2));
    EXPECT_EQ(s.at(0, 0), 1.0);
    EXPECT_EQ(s.at(0, 1), 0.0);
    EXPECT_EQ(s.at(0, 2), 0.0);
    for (double v : s.values) EXPECT_FALSE(std::isnan(v));
}

TEST(CosineSim, SymmetricUnitDiagonalAndScaleInvariant) {
    oracle::Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = oracle::uniform_index(rng, 1, 12);
        const std::size_t d = oracle::uniform_index(rng, 1, 6);
        auto t = oracle::random_tokens(rng, {1, 1, n}, d);
        OpCounters c;
        const auto s = cosine_sim(t, &c);
        EXPECT_EQ(c.similarity_evals, n * (n - 1) / 2);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(s.at(i, i), 1.0);
            for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(s.at(i, j), s.at(j, i));
        }
        // Rescale token 0 by a positive factor.
        std::vector<float> data(t.data().begin(), t.data().end());
        const float k = static_cast<float>(oracle::uniform(rng, 0.1, 10.0));
        for (std::size_t c2 = 0; c2 < d; ++c2) data[c2] *= k;
        const auto s2 = cosine_sim(TokenSet(d, {1, 1, n}, data));
        for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(s2.at(0, j), s.at(0, j), 1e-6);
    }
}

TEST(RedundancyScores, Examples) {
    // Duplicate pair + one orthogonal token: the orthogonal one ranks highest.
    const auto dup = redundancy_scores(cosine_sim(line({1, 0, 1, 0, 0, 1}, 2)));
    EXPECT_DOUBLE_EQ(dup[0], -1.0);
    EXPECT_DOUBLE_EQ(dup[1], -1.0);
    EXPECT_DOUBLE_EQ(dup[2], 0.0);

    const auto ortho = redundancy_scores(cosine_sim(line({1, 0, 0, 0, 1, 0, 0, 0, 1}, 3)));
    EXPECT_EQ(ortho[0], ortho[1]);
    EXPECT_EQ(ortho[1], ortho[2]);

    const auto single = redundancy_scores(cosine_sim(line({3, 4}, 2)));
    EXPECT_EQ(single.scores, std::vector<double>{0.0});
}

TEST(SelectScores, FollowsKeptTokens) {
    ScoreVector s{{0.1, 0.2, 0.3, 0.4}, ScoreSource::ClsAttention};
    ReductionPlan p;
    p.n_tokens = 4;
    p.kept = {1, 3};
    EXPECT_EQ(select_scores(s, p).scores, (std::vector<double>{0.2, 0.4}));
}
