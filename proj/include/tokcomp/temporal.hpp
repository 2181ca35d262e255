// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Two-step temporal reduction: partition frames into segments, then merge
// or prune tokens of later frames into the first frame of their segment.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "tokcomp/core.hpp"
#include "tokcomp/metrics.hpp"

namespace tokcomp {

/// values[i] = mean same-slot cosine similarity between frames i and i+1.
struct FrameSimSeries {
    std::vector<double> values;

    std::size_t frames() const noexcept { return values.size() + 1; }
};

namespace detail {

inline constexpr auto kAbsent = static_cast<std::size_t>(-1);

/// position_of[frame * per_frame + slot] -> index in the token set, or kAbsent.
inline std::vector<std::size_t> grid_positions(const TokenSet& tokens) {
    std::vector<std::size_t> pos(tokens.grid().total(), kAbsent);
    for (std::size_t i = 0; i < tokens.size(); ++i) pos[tokens.token_id(i)] = i;
    return pos;
}

}  // namespace detail

/// Slots missing from either frame (after an earlier reduction) are
/// skipped; a pair of frames sharing no slot has similarity 0.
inline FrameSimSeries frame_similarity(const TokenSet& video, OpCounters* counters = nullptr) {
    const auto& g = video.grid();
    TOKCOMP_CHECK(g.frames >= 2, Errc::SingleFrame, "frame similarity needs at least two frames");
    const auto pos = detail::grid_positions(video);
    const auto norms = row_norms(video);
    FrameSimSeries out;
    out.values.reserve(g.frames - 1);
    std::uint64_t evals = 0;
    for (std::size_t f = 0; f + 1 < g.frames; ++f) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t slot = 0; slot < g.per_frame(); ++slot) {
            const auto a = pos[f * g.per_frame() + slot];
            const auto b = pos[(f + 1) * g.per_frame() + slot];
            if (a == detail::kAbsent || b == detail::kAbsent) continue;
            sum += cosine_with_norms(video.row(a), norms[a], video.row(b), norms[b]);
            ++count;
        }
        evals += count;
        out.values.push_back(count == 0 ? 0.0 : sum / static_cast<double>(count));
    }
    count_sims(counters, evals);
    return out;
}

/// Equal-length segments of `length` frames; the last one may be shorter.
inline SegmentPartition segment_fixed(std::size_t frames, std::size_t length) {
    TOKCOMP_CHECK(frames >= 1, Errc::InvalidArgument, "need at least one frame");
    TOKCOMP_CHECK(length >= 1, Errc::InvalidParameter, "segment length must be >= 1");
    std::vector<SegmentPartition::Segment> segs;
    for (std::size_t s = 0; s < frames; s += length) segs.push_back({s, std::min(s + length, frames)});
    return SegmentPartition(std::move(segs));
}

/// Cuts after frame i whenever series[i] < threshold.
inline SegmentPartition segment_threshold(const FrameSimSeries& series, double threshold) {
    TOKCOMP_CHECK(std::isfinite(threshold) && threshold >= -1.0 && threshold <= 1.0, Errc::InvalidParameter,
                  "threshold must lie in [-1, 1]");
    std::vector<std::size_t> cuts;
    for (std::size_t i = 0; i < series.values.size(); ++i)
        if (series.values[i] < threshold) cuts.push_back(i + 1);
    return SegmentPartition::from_boundaries(series.frames(), cuts);
}

/// Coherence of frames [begin, end): mean of the adjacent-frame
/// similarities inside the range, summed left to right; a single frame
/// scores 1.
inline double segment_coherence(const FrameSimSeries& series, std::size_t begin, std::size_t end) {
    if (end - begin == 1) return 1.0;
    double sum = 0.0;
    for (std::size_t i = begin; i + 1 < end; ++i) sum += series.values[i];
    return sum / static_cast<double>(end - begin - 1);
}

/// Sum of segment coherences, accumulated segment by segment from the left.
inline double partition_objective(const FrameSimSeries& series, const SegmentPartition& p) {
    double total = 0.0;
    for (const auto& s : p.segments()) total += segment_coherence(series, s.begin, s.end);
    return total;
}

/// Exact maximizer of partition_objective over partitions into at most
/// `max_segments` contiguous segments, by dynamic programming in
/// O(F^2 * max_segments). Among optimal partitions the lexicographically
/// smallest interior boundary list wins.
///
/// Counts one dp cell per (segments-left, start, end) transition, i.e.
/// max_segments * F * (F + 1) / 2.
inline SegmentPartition segment_dp(const FrameSimSeries& series, std::size_t max_segments,
                                   OpCounters* counters = nullptr) {
    const std::size_t F = series.frames();
    TOKCOMP_CHECK(max_segments >= 1 && max_segments <= F, Errc::InvalidParameter,
                  "max_segments must lie in [1, " + std::to_string(F) + "]");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    // coherence[s][e], filled by running sums so each cell matches
    // segment_coherence bit for bit.
    std::vector<double> coherence((F + 1) * (F + 1), 0.0);
    for (std::size_t s = 0; s < F; ++s) {
        double sum = 0.0;
        coherence[s * (F + 1) + s + 1] = 1.0;
        for (std::size_t e = s + 2; e <= F; ++e) {
            sum += series.values[e - 2];
            coherence[s * (F + 1) + e] = sum / static_cast<double>(e - s - 1);
        }
    }
    auto coh = [&](std::size_t s, std::size_t e) { return coherence[s * (F + 1) + e]; };

    // best[m][s]: max objective over [s, F) with at most m segments.
    std::vector<std::vector<double>> best(max_segments + 1, std::vector<double>(F + 1, kNegInf));
    std::uint64_t cells = 0;
    for (std::size_t m = 1; m <= max_segments; ++m) {
        best[m][F] = 0.0;
        for (std::size_t s = F; s-- > 0;) {
            double b = kNegInf;
            for (std::size_t e = s + 1; e <= F; ++e) {
                ++cells;
                const double tail = e == F ? 0.0 : best[m - 1][e];
                if (tail == kNegInf) continue;
                b = std::max(b, coh(s, e) + tail);
            }
            best[m][s] = b;
        }
    }
    if (counters != nullptr) counters->dp_cells += cells;

    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };

    // Walk left to right preferring to end here (a shorter boundary list is
    // a lexicographic prefix), otherwise the earliest optimal cut.
    std::vector<std::size_t> cuts;
    std::size_t s = 0, m = max_segments;
    while (s < F) {
        const double target = best[m][s];
        std::size_t next = F;
        if (!near(coh(s, F), target)) {
            for (std::size_t e = s + 1; e < F; ++e) {
                if (m >= 2 && best[m - 1][e] != kNegInf && near(coh(s, e) + best[m - 1][e], target)) {
                    next = e;
                    break;
                }
            }
        }
        if (next == F) break;
        cuts.push_back(next);
        s = next;
        --m;
    }
    return SegmentPartition::from_boundaries(F, cuts);
}

enum class TemporalMode { Merge, Prune };

/// Within every segment, ranks tokens of non-first frames by cosine
/// similarity to the same-slot token of the segment's first frame and
/// reduces the top floor(merge_rate * candidates) of them: merged into that
/// anchor (Merge) or dropped (Prune). Tokens whose anchor is absent are
/// never candidates.
inline ReductionPlan temporal_reduce(const TokenSet& video, const SegmentPartition& partition, double merge_rate,
                                     TemporalMode mode, OpCounters* counters = nullptr) {
    TOKCOMP_CHECK(merge_rate >= 0.0 && merge_rate < 1.0, Errc::InvalidParameter, "merge rate must lie in [0, 1)");
    const auto& g = video.grid();
    TOKCOMP_CHECK(partition.frames() == g.frames, Errc::ShapeMismatch,
                  "partition covers " + std::to_string(partition.frames()) + " frames, video has " +
                      std::to_string(g.frames));
    const auto pos = detail::grid_positions(video);
    const auto norms = row_norms(video);

    std::vector<char> reduced(video.size(), 0);
    std::vector<std::size_t> anchor_of(video.size(), detail::kAbsent);
    std::uint64_t evals = 0;

    struct Candidate {
        std::size_t index;
        std::size_t anchor;
        double sim;
    };
    for (const auto& seg : partition.segments()) {
        std::vector<Candidate> cands;
        for (std::size_t f = seg.begin + 1; f < seg.end; ++f) {
            for (std::size_t slot = 0; slot < g.per_frame(); ++slot) {
                const auto i = pos[f * g.per_frame() + slot];
                const auto a = pos[seg.begin * g.per_frame() + slot];
                if (i == detail::kAbsent || a == detail::kAbsent) continue;
                cands.push_back({i, a, cosine_with_norms(video.row(i), norms[i], video.row(a), norms[a])});
            }
        }
        evals += cands.size();
        std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
            return x.sim != y.sim ? x.sim > y.sim : x.index < y.index;
        });
        const auto take = static_cast<std::size_t>(std::floor(merge_rate * static_cast<double>(cands.size()) + 1e-9));
        for (std::size_t c = 0; c < take; ++c) {
            reduced[cands[c].index] = 1;
            anchor_of[cands[c].index] = cands[c].anchor;
        }
    }
    count_sims(counters, evals);

    ReductionPlan plan;
    plan.n_tokens = video.size();
    plan.mode = mode == TemporalMode::Merge ? PlanMode::Merge : PlanMode::Prune;
    std::vector<std::vector<std::size_t>> groups(video.size());
    for (std::size_t i = 0; i < video.size(); ++i) {
        if (!reduced[i]) {
            plan.kept.push_back(i);
        } else if (mode == TemporalMode::Merge) {
            groups[anchor_of[i]].push_back(i);
        }
    }
    for (std::size_t i = 0; i < video.size(); ++i)
        if (!groups[i].empty()) plan.merges.push_back({i, std::move(groups[i])});
    return plan;
}

inline ReductionPlan temporal_merge(const TokenSet& video, const SegmentPartition& partition, double merge_rate,
                                    OpCounters* counters = nullptr) {
    return temporal_reduce(video, partition, merge_rate, TemporalMode::Merge, counters);
}

inline ReductionPlan temporal_prune(const TokenSet& video, const SegmentPartition& partition, double merge_rate,
                                    OpCounters* counters = nullptr) {
    return temporal_reduce(video, partition, merge_rate, TemporalMode::Prune, counters);
}

struct RateReport {
    std::size_t original_tokens = 0;
    std::size_t retained_tokens = 0;
    /// Echoed from configuration; 0 when the pipeline has no temporal stage.
    double merge_rate = 0.0;
    double segment_time_ms = 0.0;
    /// Analytical prefill cost in FLOPs, 0 when no cost model is configured.
    double prefill_proxy = 0.0;

    double retention_rate() const noexcept {
        return static_cast<double>(retained_tokens) / static_cast<double>(original_tokens);
    }
};

struct StageTimings {
    double segment_time_ms = 0.0;
    double prefill_proxy = 0.0;
};

inline RateReport rate_report(const ReductionPlan& plan, std::size_t original_n, double merge_rate = 0.0,
                              StageTimings timings = {}) {
    validate_plan(plan, plan.n_tokens);
    TOKCOMP_CHECK(original_n >= plan.n_tokens, Errc::InvalidArgument,
                  "original token count is smaller than the plan input");
    RateReport r;
    r.original_tokens = original_n;
    r.retained_tokens = plan.retained();
    r.merge_rate = merge_rate;
    r.segment_time_ms = timings.segment_time_ms;
    r.prefill_proxy = timings.prefill_proxy;
    return r;
}

}  // namespace tokcomp
