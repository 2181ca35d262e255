// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Brute-force reference solvers for small instances, plus seeded generators.
// Oracles deliberately avoid calling the operators they check; they share
// only the distance and coherence arithmetic so that optimal values compare
// exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tokcomp/core.hpp"
#include "tokcomp/spatial.hpp"
#include "tokcomp/temporal.hpp"

namespace tokcomp::oracle {

/// Deterministic engine; std::mt19937_64 output is fixed by the standard.
using Rng = std::mt19937_64;

/// Uniform double in [lo, hi) derived from raw engine bits, so values do
/// not depend on the standard library's distribution implementations.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi_inclusive) {
    return lo + static_cast<std::size_t>(rng() % (hi_inclusive - lo + 1));
}

/// Approximately standard normal (Box-Muller on engine bits).
inline double gaussian(Rng& rng) {
    double u1 = uniform(rng, 0.0, 1.0);
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform(rng, 0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline TokenSet random_tokens(Rng& rng, GridShape grid, std::size_t dim) {
    std::vector<float> data(grid.total() * dim);
    for (auto& v : data) v = static_cast<float>(uniform(rng, -1.0, 1.0));
    return TokenSet(dim, grid, std::move(data));
}

/// Video whose frames drift slowly from a base frame, with occasional
/// scene cuts; drift controls how fast consecutive frames decorrelate.
inline TokenSet random_video(Rng& rng, GridShape grid, std::size_t dim, double drift, double cut_prob) {
    std::vector<float> data(grid.total() * dim);
    std::vector<double> frame(grid.per_frame() * dim);
    for (auto& v : frame) v = gaussian(rng);
    for (std::size_t f = 0; f < grid.frames; ++f) {
        const bool cut = f > 0 && uniform(rng, 0.0, 1.0) < cut_prob;
        for (auto& v : frame) v = cut ? gaussian(rng) : v + drift * gaussian(rng);
        for (std::size_t i = 0; i < frame.size(); ++i)
            data[f * frame.size() + i] = static_cast<float>(frame[i]);
    }
    return TokenSet(dim, grid, std::move(data));
}

/// Row-stochastic-ish attention over n tokens: a softmax of random logits.
inline std::vector<float> random_attention_row(Rng& rng, std::size_t n, double temperature = 1.0) {
    std::vector<double> logits(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (auto& l : logits) {
        l = gaussian(rng) / temperature;
        mx = std::max(mx, l);
    }
    double sum = 0.0;
    for (auto& l : logits) sum += (l = std::exp(l - mx));
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(logits[i] / sum * 0.999);
    return out;
}

inline FrameSimSeries random_series(Rng& rng, std::size_t frames) {
    FrameSimSeries s;
    for (std::size_t i = 0; i + 1 < frames; ++i) {
        // Mix continuous values with repeats so ties occur.
        const auto pick = rng() % 4;
        s.values.push_back(pick == 0 ? 1.0 : pick == 1 ? 0.5 : uniform(rng, -1.0, 1.0));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Max-min diversity

struct MaxMinSolution {
    double objective = -std::numeric_limits<double>::infinity();
    /// Every subset reaching the optimum (within tolerance), ascending.
    std::vector<std::vector<std::size_t>> optima;
};

/// Exhaustive search over all k-subsets of n points for the largest
/// minimum pairwise distance. Exponential; intended for n <= ~16.
inline MaxMinSolution exhaustive_maxmin(const std::vector<double>& dist, std::size_t n, std::size_t k,
                                        double tol = 1e-12) {
    MaxMinSolution best;
    std::vector<std::size_t> subset(k);
    for (std::size_t i = 0; i < k; ++i) subset[i] = i;
    auto objective = [&] {
        double o = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) o = std::min(o, dist[subset[i] * n + subset[j]]);
        return o;
    };
    while (true) {
        const double o = objective();
        if (o > best.objective + tol) {
            best.objective = o;
            best.optima.clear();
        }
        if (std::abs(o - best.objective) <= tol) best.optima.push_back(subset);
        // Next combination in lexicographic order.
        std::size_t i = k;
        while (i > 0 && subset[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++subset[i - 1];
        for (std::size_t j = i; j < k; ++j) subset[j] = subset[j - 1] + 1;
    }
    return best;
}

/// The pair a greedy farthest-point solver starts from: the
/// lexicographically first pair at maximum distance.
inline std::pair<std::size_t, std::size_t> farthest_pair(const std::vector<double>& dist, std::size_t n) {
    std::pair<std::size_t, std::size_t> best{0, 1};
    double d = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (dist[i * n + j] > d) {
                d = dist[i * n + j];
                best = {i, j};
            }
    return best;
}

// ---------------------------------------------------------------------------
// Segmentation

/// Objective of one segmentation given interior cut positions; a segment
/// scores the mean of its adjacent-pair similarities (1 for one frame),
/// totals accumulated left to right.
inline double segmentation_objective(const FrameSimSeries& series, const std::vector<std::size_t>& cuts) {
    const std::size_t F = series.frames();
    double total = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c <= cuts.size(); ++c) {
        const std::size_t end = c < cuts.size() ? cuts[c] : F;
        double score = 1.0;
        if (end - begin > 1) {
            double sum = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) sum += series.values[i];
            score = sum / static_cast<double>(end - begin - 1);
        }
        total += score;
        begin = end;
    }
    return total;
}

struct SegmentationSolution {
    double objective = -std::numeric_limits<double>::infinity();
    /// Lexicographically smallest cut list among optima.
    std::vector<std::size_t> cuts;
    std::size_t partitions_checked = 0;
};

/// Enumerates all 2^(F-1) cut sets with at most max_segments - 1 cuts.
/// Objectives within `tol` (relative, floor 1) of the best count as ties.
inline SegmentationSolution brute_force_segmentation(const FrameSimSeries& series, std::size_t max_segments,
                                                     double tol = 1e-12) {
    const std::size_t F = series.frames();
    const std::size_t slots = F - 1;
    std::vector<std::pair<double, std::vector<std::size_t>>> all;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << slots); ++mask) {
        std::vector<std::size_t> cuts;
        for (std::size_t b = 0; b < slots; ++b)
            if (mask & (std::uint64_t{1} << b)) cuts.push_back(b + 1);
        if (cuts.size() + 1 > max_segments) continue;
        all.emplace_back(segmentation_objective(series, cuts), std::move(cuts));
    }
    SegmentationSolution out;
    out.partitions_checked = all.size();
    for (const auto& [o, c] : all) out.objective = std::max(out.objective, o);
    bool first = true;
    for (const auto& [o, c] : all) {
        if (std::abs(o - out.objective) > tol * std::max(1.0, std::abs(out.objective))) continue;
        if (first || c < out.cuts) out.cuts = c;
        first = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plan composition

/// Reference composition by simulation: label every original token with its
/// final owner after running both plans one after the other.
/// Returns owner[i] = index in the final set, or -1 if dropped.
inline std::vector<long> simulate_owners(const ReductionPlan& first, const ReductionPlan& second) {
    auto owners_of = [](const ReductionPlan& p) {
        std::vector<long> pos(p.n_tokens, -1);
        for (std::size_t j = 0; j < p.kept.size(); ++j) pos[p.kept[j]] = static_cast<long>(j);
        std::vector<long> owner = pos;
        for (const auto& m : p.merges)
            for (auto s : m.sources) owner[s] = pos[m.target];
        return owner;
    };
    const auto a = owners_of(first);
    const auto b = owners_of(second);
    std::vector<long> out(first.n_tokens, -1);
    for (std::size_t i = 0; i < first.n_tokens; ++i)
        if (a[i] >= 0) out[i] = b[static_cast<std::size_t>(a[i])];
    return out;
}

/// Owner labels of a single plan, for comparison with simulate_owners.
inline std::vector<long> plan_owners(const ReductionPlan& p) {
    return simulate_owners(p, ReductionPlan::identity(p.retained()));
}

/// Random valid plan over n tokens; `merge` selects whether dropped tokens
/// are merged into random survivors.
inline ReductionPlan random_plan(Rng& rng, std::size_t n, bool allow_drop, bool allow_merge) {
    ReductionPlan p;
    p.n_tokens = n;
    std::vector<int> role(n, 0);  // 0 kept, 1 dropped, 2 merged
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = rng() % 3;
        role[i] = r == 0 ? 0 : static_cast<int>(r);
        if (role[i] == 1 && !allow_drop) role[i] = allow_merge ? 2 : 0;
        if (role[i] == 2 && !allow_merge) role[i] = allow_drop ? 1 : 0;
    }
    role[uniform_index(rng, 0, n - 1)] = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (role[i] == 0) p.kept.push_back(i);
    std::vector<std::vector<std::size_t>> groups(n);
    for (std::size_t i = 0; i < n; ++i)
        if (role[i] == 2) groups[p.kept[uniform_index(rng, 0, p.kept.size() - 1)]].push_back(i);
    for (std::size_t i = 0; i < n; ++i)
        if (!groups[i].empty()) p.merges.push_back({i, std::move(groups[i])});
    const bool dropped = std::find(role.begin(), role.end(), 1) != role.end();
    p.mode = p.merges.empty() ? PlanMode::Prune : dropped ? PlanMode::PruneThenMerge : PlanMode::Merge;
    return p;
}

}  // namespace tokcomp::oracle
