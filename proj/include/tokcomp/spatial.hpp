// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Spatial prune and merge operators. Every operator returns a
// ReductionPlan against the token set it was given; ties always break
// toward the lower index so results are reproducible.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "tokcomp/core.hpp"
#include "tokcomp/metrics.hpp"

namespace tokcomp {

/// Retained-token target: either an absolute count or a ratio of n.
class Budget {
public:
    static Budget tokens(std::size_t k) {
        TOKCOMP_CHECK(k >= 1, Errc::InvalidParameter, "budget must keep at least one token");
        Budget b;
        b.count_ = k;
        return b;
    }
    static Budget ratio(double r) {
        TOKCOMP_CHECK(r > 0.0 && r <= 1.0, Errc::InvalidParameter, "budget ratio must be in (0, 1]");
        Budget b;
        b.ratio_ = r;
        return b;
    }

    bool is_ratio() const noexcept { return count_ == 0; }

    /// Resolves to 1 <= k <= n. Counts above n are clamped and flagged.
    std::size_t resolve(std::size_t n, bool* clamped = nullptr) const {
        TOKCOMP_CHECK(n >= 1, Errc::EmptyInput, "cannot budget an empty token set");
        std::size_t k = count_;
        if (is_ratio()) k = static_cast<std::size_t>(std::llround(ratio_ * static_cast<double>(n)));
        k = std::max<std::size_t>(k, 1);
        const bool over = k > n;
        if (clamped != nullptr) *clamped = over;
        return over ? n : k;
    }

private:
    std::size_t count_ = 0;
    double ratio_ = 1.0;
};

namespace detail {

/// Indices sorted by descending score, lower index first on ties.
inline std::vector<std::size_t> rank_desc(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline ReductionPlan prune_plan(std::size_t n, std::vector<std::size_t> kept) {
    std::sort(kept.begin(), kept.end());
    ReductionPlan p;
    p.n_tokens = n;
    p.kept = std::move(kept);
    p.mode = PlanMode::Prune;
    return p;
}

/// Index of the most similar candidate to token i (lower index on ties).
inline std::size_t most_similar(const TokenSet& tokens, std::span<const double> norms, std::size_t i,
                                std::span<const std::size_t> candidates) {
    std::size_t best = candidates.front();
    double best_sim = -std::numeric_limits<double>::infinity();
    for (auto c : candidates) {
        const double s = cosine_with_norms(tokens.row(i), norms[i], tokens.row(c), norms[c]);
        if (s > best_sim) {
            best_sim = s;
            best = c;
        }
    }
    return best;
}

}  // namespace detail

/// Keeps the k highest-scoring tokens.
inline ReductionPlan prune_topk(const ScoreVector& scores, const Budget& budget) {
    bool clamped = false;
    const std::size_t n = scores.size();
    const std::size_t k = budget.resolve(n, &clamped);
    auto order = detail::rank_desc(scores.scores);
    order.resize(k);
    auto plan = detail::prune_plan(n, std::move(order));
    plan.budget_clamped = clamped;
    return plan;
}

enum class DiversityDistance { Cosine, Euclidean };

/// Pairwise distance used by diversity selection: 1 - cosine, or L2.
inline std::vector<double> pairwise_distance(const TokenSet& tokens, DiversityDistance metric,
                                             OpCounters* counters = nullptr) {
    const std::size_t n = tokens.size();
    std::vector<double> d(n * n, 0.0);
    if (metric == DiversityDistance::Cosine) {
        const auto sim = cosine_sim(tokens, counters);
        for (std::size_t i = 0; i < n * n; ++i) d[i] = 1.0 - sim.values[i];
        for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0.0;
        return d;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            auto a = tokens.row(i), b = tokens.row(j);
            for (std::size_t c = 0; c < a.size(); ++c) {
                const double diff = static_cast<double>(a[c]) - b[c];
                s += diff * diff;
            }
            d[i * n + j] = d[j * n + i] = std::sqrt(s);
        }
    count_sims(counters, n * (n - 1) / 2);
    return d;
}

/// Greedy max-min diversity (farthest-point) selection.
///
/// Seeds with the farthest pair, then repeatedly adds the token whose
/// distance to its nearest selected token is largest. With k < 2 the
/// single highest-norm token is kept.
inline ReductionPlan divprune_select(const TokenSet& tokens, const Budget& budget,
                                     DiversityDistance metric = DiversityDistance::Cosine,
                                     OpCounters* counters = nullptr) {
    const std::size_t n = tokens.size();
    bool clamped = false;
    const std::size_t k = budget.resolve(n, &clamped);

    ReductionPlan plan;
    if (k == n) {
        plan = ReductionPlan::identity(n);
    } else if (k < 2) {
        const auto norms = row_norms(tokens);
        const auto best = static_cast<std::size_t>(std::max_element(norms.begin(), norms.end()) - norms.begin());
        plan = detail::prune_plan(n, {best});
    } else {
        const auto dist = pairwise_distance(tokens, metric, counters);
        std::size_t a = 0, b = 1;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (dist[i * n + j] > dist[a * n + b]) {
                    a = i;
                    b = j;
                }
        std::vector<std::size_t> selected{a, b};
        std::vector<char> taken(n, 0);
        taken[a] = taken[b] = 1;
        std::vector<double> nearest(n);
        for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(dist[i * n + a], dist[i * n + b]);
        while (selected.size() < k) {
            std::size_t pick = n;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && (pick == n || nearest[i] > nearest[pick])) pick = i;
            taken[pick] = 1;
            selected.push_back(pick);
            for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], dist[i * n + pick]);
        }
        plan = detail::prune_plan(n, std::move(selected));
    }
    plan.budget_clamped = clamped;
    return plan;
}

/// Minimum pairwise distance among a selected subset: the max-min objective.
inline double min_pairwise_distance(std::span<const double> dist, std::size_t n, std::span<const std::size_t> subset) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < subset.size(); ++i)
        for (std::size_t j = i + 1; j < subset.size(); ++j) best = std::min(best, dist[subset[i] * n + subset[j]]);
    return best;
}

/// Progressive bipartite soft matching: `steps` rounds, each merging the
/// `r_per_step` most similar even->odd links of the current sequence.
inline ReductionPlan tome_merge(const TokenSet& tokens, std::size_t r_per_step, std::size_t steps,
                                OpCounters* counters = nullptr) {
    ReductionPlan plan = ReductionPlan::identity(tokens.size());
    TokenSet current = tokens;
    for (std::size_t step = 0; step < steps; ++step) {
        const std::size_t n = current.size();
        TOKCOMP_CHECK(r_per_step <= n / 2, Errc::RTooLarge,
                      "r=" + std::to_string(r_per_step) + " exceeds half of " + std::to_string(n) +
                          " tokens at step " + std::to_string(step));
        if (r_per_step == 0) continue;

        std::vector<std::size_t> side_a, side_b;
        for (std::size_t i = 0; i < n; ++i) (i % 2 == 0 ? side_a : side_b).push_back(i);
        const auto norms = row_norms(current);

        struct Link {
            std::size_t src;
            std::size_t dst;
            double sim;
        };
        std::vector<Link> links;
        links.reserve(side_a.size());
        for (auto a : side_a) {
            Link best{a, side_b.front(), -std::numeric_limits<double>::infinity()};
            for (auto b : side_b) {
                const double s = cosine_with_norms(current.row(a), norms[a], current.row(b), norms[b]);
                if (s > best.sim) best = {a, b, s};
            }
            links.push_back(best);
        }
        count_sims(counters, side_a.size() * side_b.size());
        std::stable_sort(links.begin(), links.end(), [](const Link& x, const Link& y) { return x.sim > y.sim; });
        links.resize(r_per_step);

        ReductionPlan step_plan;
        step_plan.n_tokens = n;
        step_plan.mode = PlanMode::Merge;
        std::vector<char> merged(n, 0);
        std::vector<std::vector<std::size_t>> groups(n);
        for (const auto& l : links) {
            merged[l.src] = 1;
            groups[l.dst].push_back(l.src);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!merged[i]) step_plan.kept.push_back(i);
            if (!groups[i].empty()) step_plan.merges.push_back({i, std::move(groups[i])});
        }
        step_plan.normalize();
        current = apply_plan(current, step_plan);
        plan = compose_plans(plan, step_plan);
    }
    return plan;
}

/// Two tokens count as similar for window merging when they are bitwise
/// identical or their cosine reaches the threshold. A threshold above 1
/// therefore merges only exactly equal windows.
inline bool window_pair_similar(std::span<const float> a, double na, std::span<const float> b, double nb,
                                double threshold) noexcept {
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0) return true;
    return cosine_with_norms(a, na, b, nb) >= threshold;
}

/// Non-overlapping window merge over each frame's grid. A window whose
/// tokens are pairwise similar collapses into its top-left token; edge
/// windows may be ragged. Tokens are placed by their original slot, so an
/// already reduced set is windowed over whatever survives in each window.
inline ReductionPlan window_merge(const TokenSet& tokens, std::size_t window_h, std::size_t window_w,
                                  double sim_threshold, OpCounters* counters = nullptr) {
    const auto& g = tokens.grid();
    TOKCOMP_CHECK(window_h >= 1 && window_w >= 1, Errc::InvalidParameter, "window extents must be >= 1");
    const auto norms = row_norms(tokens);

    ReductionPlan plan;
    plan.n_tokens = tokens.size();
    plan.mode = PlanMode::Merge;
    std::vector<char> absorbed(tokens.size(), 0);
    std::uint64_t evals = 0;

    // (frame, window row, window col) -> token indices, ascending by slot.
    std::map<std::array<std::size_t, 3>, std::vector<std::size_t>> windows;
    const auto ids = tokens.token_ids();
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t f = ids[i] / g.per_frame(), slot = ids[i] % g.per_frame();
        windows[{f, slot / g.cols / window_h, slot % g.cols / window_w}].push_back(i);
    }

    for (const auto& [key, members] : windows) {
        if (members.size() < 2) continue;
        bool all_similar = true;
        for (std::size_t i = 0; i < members.size() && all_similar; ++i)
            for (std::size_t j = i + 1; j < members.size() && all_similar; ++j) {
                ++evals;
                const auto a = members[i], b = members[j];
                all_similar = window_pair_similar(tokens.row(a), norms[a], tokens.row(b), norms[b], sim_threshold);
            }
        if (!all_similar) continue;
        MergeGroup group{members.front(), {members.begin() + 1, members.end()}};
        for (auto s : group.sources) absorbed[s] = 1;
        plan.merges.push_back(std::move(group));
    }
    count_sims(counters, evals);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (!absorbed[i]) plan.kept.push_back(i);
    plan.normalize();
    return plan;
}

/// Keeps the top `k_dominant` tokens by score untouched, then folds the
/// remaining tokens into `k_contextual` seeds (the best-scoring leftovers),
/// each leftover joining its most similar seed.
inline ReductionPlan dominant_contextual(const TokenSet& tokens, const ScoreVector& scores,
                                         std::size_t k_dominant, std::size_t k_contextual,
                                         OpCounters* counters = nullptr) {
    const std::size_t n = tokens.size();
    TOKCOMP_CHECK(scores.size() == n, Errc::ShapeMismatch, "score length does not match token count");
    TOKCOMP_CHECK(k_dominant + k_contextual <= n, Errc::BudgetExceedsTokens,
                  "k_dominant + k_contextual exceeds " + std::to_string(n) + " tokens");
    TOKCOMP_CHECK(k_dominant + k_contextual >= 1, Errc::InvalidParameter, "plan must keep at least one token");

    const auto order = detail::rank_desc(scores.scores);
    if (k_contextual == 0) return detail::prune_plan(n, {order.begin(), order.begin() + k_dominant});

    std::vector<std::size_t> seeds(order.begin() + k_dominant, order.begin() + k_dominant + k_contextual);
    std::sort(seeds.begin(), seeds.end());
    const auto norms = row_norms(tokens);

    std::vector<std::vector<std::size_t>> groups(n);
    for (std::size_t r = k_dominant + k_contextual; r < n; ++r) {
        const auto i = order[r];
        groups[detail::most_similar(tokens, norms, i, seeds)].push_back(i);
    }
    count_sims(counters, (n - k_dominant - k_contextual) * k_contextual);

    ReductionPlan plan = detail::prune_plan(n, {order.begin(), order.begin() + k_dominant + k_contextual});
    for (auto s : seeds)
        if (!groups[s].empty()) plan.merges.push_back({s, std::move(groups[s])});
    plan.normalize();
    plan.mode = plan.merges.empty() ? PlanMode::Prune : PlanMode::PruneThenMerge;
    return plan;
}

/// Optionally re-attaches every token dropped by a prune plan to its most
/// similar survivor.
inline ReductionPlan prune_then_merge(const TokenSet& tokens, const ReductionPlan& keep_plan, bool merge_dropped,
                                      OpCounters* counters = nullptr) {
    TOKCOMP_CHECK(keep_plan.mode == PlanMode::Prune, Errc::InvalidPlan, "prune_then_merge expects a prune plan");
    validate_plan(keep_plan, tokens.size());
    if (!merge_dropped) return keep_plan;

    const auto norms = row_norms(tokens);
    std::vector<char> is_kept(tokens.size(), 0);
    for (auto k : keep_plan.kept) is_kept[k] = 1;
    std::vector<std::vector<std::size_t>> groups(tokens.size());
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (is_kept[i]) continue;
        ++dropped;
        groups[detail::most_similar(tokens, norms, i, keep_plan.kept)].push_back(i);
    }
    count_sims(counters, dropped * keep_plan.kept.size());

    ReductionPlan plan = keep_plan;
    for (auto k : plan.kept)
        if (!groups[k].empty()) plan.merges.push_back({k, std::move(groups[k])});
    if (!plan.merges.empty()) plan.mode = PlanMode::PruneThenMerge;
    return plan;
}

/// Attention-then-diversity hybrid: keeps `k_important` tokens by score,
/// then picks `k_diverse` more from the remainder by max-min diversity.
/// Experimental; the coupling between the two stages is a local choice.
inline ReductionPlan vispruner_select(const TokenSet& tokens, const ScoreVector& scores, std::size_t k_important,
                                      std::size_t k_diverse, OpCounters* counters = nullptr) {
    const std::size_t n = tokens.size();
    TOKCOMP_CHECK(scores.size() == n, Errc::ShapeMismatch, "score length does not match token count");
    TOKCOMP_CHECK(k_important + k_diverse <= n, Errc::BudgetExceedsTokens, "hybrid budget exceeds token count");
    TOKCOMP_CHECK(k_important + k_diverse >= 1, Errc::InvalidParameter, "plan must keep at least one token");

    std::vector<std::size_t> kept;
    if (k_important > 0) kept = prune_topk(scores, Budget::tokens(k_important)).kept;
    std::vector<char> taken(n, 0);
    for (auto k : kept) taken[k] = 1;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) rest.push_back(i);

    if (k_diverse > 0) {
        const auto remainder = apply_plan(tokens, detail::prune_plan(n, rest));
        const auto diverse = divprune_select(remainder, Budget::tokens(k_diverse), DiversityDistance::Cosine, counters);
        for (auto d : diverse.kept) kept.push_back(rest[d]);
    }
    return detail::prune_plan(n, std::move(kept));
}

}  // namespace tokcomp
