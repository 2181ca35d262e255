// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "tokcomp/oracle.hpp"
#include "tokcomp/temporal.hpp"

using namespace tokcomp;

namespace {

using Cuts = std::vector<std::size_t>;

// Builds a video whose frames are the given per-frame token blocks (rows = 1).
TokenSet video(const std::vector<std::vector<float>>& frames, std::size_t dim) {
    std::vector<float> data;
    for (const auto& f : frames) data.insert(data.end(), f.begin(), f.end());
    const std::size_t slots = frames.front().size() / dim;
    return TokenSet(dim, {frames.size(), 1, slots}, std::move(data));
}

FrameSimSeries series(std::vector<double> v) { return FrameSimSeries{std::move(v)}; }

template <typename F>
Errc code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::InvalidArgument;
}

}  // namespace

TEST(FrameSimilarity, Examples) {
    const std::vector<float> a{1, 0, 0, 1};
    EXPECT_EQ(frame_similarity(video({a, a}, 2)).values, (std::vector<double>{1.0}));
    EXPECT_EQ(frame_similarity(video({a, {-1, 0, 0, -1}}, 2)).values, (std::vector<double>{-1.0}));
    const std::vector<float> b{0, 1, 1, 0};
    EXPECT_EQ(frame_similarity(video({a, a, b}, 2)).values, (std::vector<double>{1.0, 0.0}));
    EXPECT_EQ(code_of([&] { frame_similarity(video({a}, 2)); }), Errc::SingleFrame);
}

TEST(FrameSimilarity, SkipsAbsentSlotsAndCounts) {
    const std::vector<float> a{1, 0, 0, 1};
    const auto v = video({a, a, a}, 2);
    OpCounters c;
    frame_similarity(v, &c);
    EXPECT_EQ(c.similarity_evals, 4u);

    ReductionPlan p;
    p.n_tokens = 6;
    p.kept = {0, 1, 2, 4};  // frame 1 keeps slot 0, frame 2 keeps slot 0 only
    const auto reduced = apply_plan(v, p);
    EXPECT_EQ(frame_similarity(reduced).values, (std::vector<double>{1.0, 1.0}));

    ReductionPlan q;
    q.n_tokens = 6;
    q.kept = {0, 3, 5};  // frames 0 and 1 share no slot
    EXPECT_EQ(frame_similarity(apply_plan(v, q)).values, (std::vector<double>{0.0, 1.0}));
}

TEST(SegmentFixed, Examples) {
    EXPECT_EQ(segment_fixed(5, 2).boundaries(), (Cuts{2, 4}));
    EXPECT_EQ(segment_fixed(3, 3).size(), 1u);
    EXPECT_EQ(segment_fixed(3, 10).size(), 1u);
    EXPECT_EQ(code_of([] { segment_fixed(3, 0); }), Errc::InvalidParameter);
}

TEST(SegmentThreshold, Examples) {
    const auto s = series({0.9, 0.2, 0.95, 0.1});
    EXPECT_EQ(segment_threshold(s, -1.0).size(), 1u);
    EXPECT_EQ(segment_threshold(s, 1.0).size(), 5u);
    EXPECT_EQ(segment_threshold(s, 0.5).boundaries(), (Cuts{2, 4}));
    EXPECT_EQ(code_of([&] { segment_threshold(s, 1.5); }), Errc::InvalidParameter);
}

TEST(SegmentThreshold, HigherThresholdRefines) {
    oracle::Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = oracle::random_series(rng, oracle::uniform_index(rng, 1, 12));
        double t1 = oracle::uniform(rng, -1, 1), t2 = oracle::uniform(rng, -1, 1);
        if (t1 > t2) std::swap(t1, t2);
        const auto low = segment_threshold(s, t1).boundaries();
        const auto high = segment_threshold(s, t2).boundaries();
        EXPECT_TRUE(std::includes(high.begin(), high.end(), low.begin(), low.end()));
    }
}

TEST(SegmentDp, Examples) {
    // Frames A,A,B,B with A orthogonal to B.
    const auto aabb = series({1.0, 0.0, 1.0});
    EXPECT_EQ(segment_dp(aabb, 2).boundaries(), (Cuts{2}));
    EXPECT_DOUBLE_EQ(partition_objective(aabb, segment_dp(aabb, 2)), 2.0);
    EXPECT_EQ(segment_dp(aabb, 1).size(), 1u);
    // With F segments allowed, all singletons is the only way to reach F.
    EXPECT_EQ(segment_dp(aabb, 4).boundaries(), (Cuts{1, 2, 3}));
    EXPECT_EQ(code_of([&] { segment_dp(aabb, 0); }), Errc::InvalidParameter);
    EXPECT_EQ(code_of([&] { segment_dp(aabb, 5); }), Errc::InvalidParameter);
}

TEST(SegmentDp, TieBreaksTowardSmallestBoundaryList) {
    // All-ones series: one segment scores 1, every 2-partition scores 2.
    EXPECT_EQ(segment_dp(series({1.0, 1.0, 1.0}), 2).boundaries(), (Cuts{1}));
}

TEST(SegmentDp, MatchesBruteForceAndCountsCells) {
    oracle::Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t F = oracle::uniform_index(rng, 1, 8);
        const std::size_t M = oracle::uniform_index(rng, 1, std::min<std::size_t>(4, F));
        const auto s = oracle::random_series(rng, F);
        OpCounters c;
        const auto p = segment_dp(s, M, &c);
        const auto want = oracle::brute_force_segmentation(s, M);
        EXPECT_LE(p.size(), M);
        EXPECT_EQ(oracle::segmentation_objective(s, p.boundaries()), want.objective);
        EXPECT_EQ(p.boundaries(), want.cuts);
        EXPECT_EQ(c.dp_cells, M * F * (F + 1) / 2);
    }
}

TEST(TemporalReduce, IdenticalFramesMergeHalfTheCandidates) {
    // Merge rate is a per-segment fraction of non-first-frame tokens: with
    // 4 frame-2 candidates and MR=0.5, two of them merge.
    const std::vector<float> f{1, 0, 0, 1, 1, 1, 2, 0};
    const auto v = video({f, f}, 2);
    const auto part = segment_fixed(2, 2);
    const auto m = temporal_merge(v, part, 0.5);
    EXPECT_EQ(m.retained(), 6u);
    EXPECT_DOUBLE_EQ(rate_report(m, 8, 0.5).retention_rate(), 0.75);
    EXPECT_EQ(m.mode, PlanMode::Merge);
    for (const auto& g : m.merges) {
        EXPECT_LT(g.target, 4u);
        ASSERT_EQ(g.sources.size(), 1u);
        EXPECT_EQ(g.sources[0], g.target + 4);
    }
    const auto out = apply_plan(v, m);
    EXPECT_EQ(out.total_weight(), 8u);

    const auto p = temporal_prune(v, part, 0.5);
    EXPECT_EQ(p.kept, m.kept);
    EXPECT_TRUE(p.merges.empty());
    EXPECT_EQ(p.mode, PlanMode::Prune);
}

TEST(TemporalReduce, ZeroRateIsIdentity) {
    oracle::Rng rng(2);
    const auto v = oracle::random_video(rng, {4, 2, 2}, 3, 0.1, 0.2);
    EXPECT_TRUE(temporal_merge(v, segment_fixed(4, 2), 0.0).is_identity());
    EXPECT_TRUE(temporal_prune(v, segment_fixed(4, 4), 0.0).is_identity());
}

TEST(TemporalReduce, IdenticalSlotsDominateRanking) {
    // Slots 0,1 identical across frames; slots 2,3 orthogonal.
    const auto v = video({{1, 0, 0, 1, 1, 0, 0, 1}, {1, 0, 0, 1, 0, 1, 1, 0}}, 2);
    const auto m = temporal_merge(v, segment_fixed(2, 2), 0.25);
    ASSERT_EQ(m.merges.size(), 1u);
    EXPECT_EQ(m.merges[0].target, 0u);
    EXPECT_EQ(m.merges[0].sources, (std::vector<std::size_t>{4}));
    const auto m2 = temporal_merge(v, segment_fixed(2, 2), 0.5);
    EXPECT_EQ(m2.retained(), 6u);
    for (const auto& g : m2.merges) EXPECT_LT(g.target, 2u);
}

TEST(TemporalReduce, RejectsBadInputs) {
    const std::vector<float> f{1, 0};
    const auto v = video({f, f}, 2);
    EXPECT_EQ(code_of([&] { temporal_merge(v, segment_fixed(2, 1), 1.5); }), Errc::InvalidParameter);
    EXPECT_EQ(code_of([&] { temporal_merge(v, segment_fixed(2, 1), 1.0); }), Errc::InvalidParameter);
    EXPECT_EQ(code_of([&] { temporal_prune(v, segment_fixed(3, 1), 0.5); }), Errc::ShapeMismatch);
}

TEST(TemporalReduce, EqualSegmentRateGivesDifferentRetentionBySegmentLength) {
    oracle::Rng rng(3);
    const auto v = oracle::random_video(rng, {8, 3, 3}, 4, 0.05, 0.0);
    const double rr_short = rate_report(temporal_merge(v, segment_fixed(8, 2), 0.5), v.size()).retention_rate();
    const double rr_long = rate_report(temporal_merge(v, segment_fixed(8, 8), 0.5), v.size()).retention_rate();
    EXPECT_GT(rr_short, rr_long);
}

TEST(TemporalReduce, MergeAndPruneRetainEqually) {
    oracle::Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const GridShape g{oracle::uniform_index(rng, 1, 6), oracle::uniform_index(rng, 1, 3),
                          oracle::uniform_index(rng, 1, 3)};
        const auto v = oracle::random_video(rng, g, 3, 0.2, 0.3);
        const auto part = segment_fixed(g.frames, oracle::uniform_index(rng, 1, g.frames));
        const double mr = oracle::uniform(rng, 0.0, 0.99);
        const auto m = temporal_merge(v, part, mr);
        const auto p = temporal_prune(v, part, mr);
        EXPECT_NO_THROW(validate_plan(m, v.size()));
        EXPECT_NO_THROW(validate_plan(p, v.size()));
        EXPECT_EQ(m.retained(), p.retained());
        EXPECT_EQ(m.kept, p.kept);
    }
}

TEST(TemporalReduce, PermutingIdenticalFramesKeepsRetention) {
    oracle::Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const auto base = oracle::random_tokens(rng, {1, 2, 2}, 3);
        const auto other = oracle::random_tokens(rng, {1, 2, 2}, 3);
        std::vector<std::vector<float>> frames;
        const std::vector<float> a(base.data().begin(), base.data().end());
        const std::vector<float> b(other.data().begin(), other.data().end());
        frames = {a, a, a, b};
        auto as_video = [](const std::vector<std::vector<float>>& fr) {
            std::vector<float> data;
            for (const auto& f : fr) data.insert(data.end(), f.begin(), f.end());
            return TokenSet(3, {fr.size(), 2, 2}, std::move(data));
        };
        const auto v1 = as_video(frames);
        std::swap(frames[1], frames[2]);
        const auto v2 = as_video(frames);
        const auto part = segment_fixed(4, 3);
        const double mr = oracle::uniform(rng, 0.0, 0.9);
        EXPECT_EQ(temporal_merge(v1, part, mr).retained(), temporal_merge(v2, part, mr).retained());
    }
}

TEST(RateReport, IsExact) {
    ReductionPlan p;
    p.n_tokens = 49;
    p.kept = {0};
    const auto r = rate_report(p, 49, 0.3, {1.5, 2.5});
    EXPECT_EQ(r.retained_tokens, 1u);
    EXPECT_EQ(r.retention_rate(), 1.0 / 49.0);
    EXPECT_EQ(r.merge_rate, 0.3);
    EXPECT_EQ(r.segment_time_ms, 1.5);
    EXPECT_EQ(r.prefill_proxy, 2.5);
}
