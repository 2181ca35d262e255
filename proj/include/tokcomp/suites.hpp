// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Randomized suites that check operators against the brute-force oracles.
// Each suite is deterministic in its seed and reports how many instances
// violated the property, plus the first violation.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tokcomp/core.hpp"
#include "tokcomp/oracle.hpp"
#include "tokcomp/spatial.hpp"
#include "tokcomp/temporal.hpp"

namespace tokcomp::suites {

struct SuiteResult {
    std::string name;
    std::size_t instances = 0;
    std::size_t failures = 0;
    std::string first_failure;
    /// Free-form statistics, e.g. the worst approximation ratio seen.
    std::string stats;
    double seconds = 0.0;

    bool passed() const noexcept { return failures == 0; }

    void fail(std::size_t instance, const std::string& why) {
        if (failures++ == 0) first_failure = "instance " + std::to_string(instance) + ": " + why;
    }
};

namespace detail {

inline std::string join(const std::vector<std::size_t>& v) {
    std::string s = "{";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s + "}";
}

template <typename F>
SuiteResult timed(std::string name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    SuiteResult r;
    r.name = std::move(name);
    body(r);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

/// Greedy max-min selection against exhaustive search (n <= 8, k <= 4,
/// dim <= 4, cosine distance). Requires objective >= 0.6 x optimum, and
/// whenever some optimal set contains the greedy seed pair, the greedy set
/// must itself be optimal.
inline SuiteResult divprune_suite(std::uint64_t seed, std::size_t instances = 200) {
    return detail::timed("divprune", [&](SuiteResult& r) {
        oracle::Rng rng(seed);
        double worst_ratio = std::numeric_limits<double>::infinity();
        std::size_t seed_in_optimum = 0;
        for (std::size_t t = 0; t < instances; ++t) {
            const std::size_t n = oracle::uniform_index(rng, 3, 8);
            const std::size_t k = oracle::uniform_index(rng, 2, std::min<std::size_t>(4, n - 1));
            const std::size_t dim = oracle::uniform_index(rng, 1, 4);
            const auto tokens = oracle::random_tokens(rng, {1, 1, n}, dim);
            ++r.instances;

            const auto plan = divprune_select(tokens, Budget::tokens(k));
            const auto dist = pairwise_distance(tokens, DiversityDistance::Cosine);
            const double greedy = min_pairwise_distance(dist, n, plan.kept);
            const auto opt = oracle::exhaustive_maxmin(dist, n, k);
            if (opt.objective > 0.0) worst_ratio = std::min(worst_ratio, greedy / opt.objective);

            std::ostringstream ctx;
            ctx << "n=" << n << " k=" << k << " dim=" << dim << " greedy=" << detail::join(plan.kept) << " ("
                << greedy << ") optimum=" << detail::join(opt.optima.front()) << " (" << opt.objective << ")";
            if (plan.kept.size() != k) {
                r.fail(t, "kept " + std::to_string(plan.kept.size()) + " tokens; " + ctx.str());
                continue;
            }
            if (greedy < 0.6 * opt.objective) {
                r.fail(t, "objective below 0.6 x optimum; " + ctx.str());
                continue;
            }
            const auto [a, b] = oracle::farthest_pair(dist, n);
            bool seeded = false;
            for (const auto& s : opt.optima)
                seeded = seeded || (std::find(s.begin(), s.end(), a) != s.end() && std::find(s.begin(), s.end(), b) != s.end());
            if (!seeded) continue;
            ++seed_in_optimum;
            const bool is_optimal = std::find(opt.optima.begin(), opt.optima.end(), plan.kept) != opt.optima.end();
            if (!is_optimal)
                r.fail(t, "seed pair {" + std::to_string(a) + "," + std::to_string(b) +
                              "} lies in an optimum but the greedy set is not optimal; " + ctx.str());
        }
        std::ostringstream s;
        s << "worst greedy/optimum=" << worst_ratio << ", seed pair in an optimum on " << seed_in_optimum << "/"
          << instances;
        r.stats = s.str();
    });
}

/// segment_dp against enumeration of all partitions (F <= 8, M <= 4). Both
/// objectives are evaluated left to right by the same function, so they
/// must agree exactly; the chosen cut lists must agree as well.
inline SuiteResult segment_dp_suite(std::uint64_t seed, std::size_t instances = 200) {
    return detail::timed("segment_dp", [&](SuiteResult& r) {
        oracle::Rng rng(seed);
        std::uint64_t enumerated = 0;
        for (std::size_t t = 0; t < instances; ++t) {
            const std::size_t F = oracle::uniform_index(rng, 1, 8);
            const std::size_t M = oracle::uniform_index(rng, 1, std::min<std::size_t>(4, F));
            const auto series = oracle::random_series(rng, F);
            ++r.instances;
            OpCounters c;
            const auto p = segment_dp(series, M, &c);
            const auto ref = oracle::brute_force_segmentation(series, M);
            enumerated += ref.partitions_checked;
            const double got = oracle::segmentation_objective(series, p.boundaries());
            const double want = oracle::segmentation_objective(series, ref.cuts);
            std::ostringstream ctx;
            ctx.precision(17);
            ctx << "F=" << F << " M=" << M << " dp=" << detail::join(p.boundaries()) << " (" << got
                << ") brute=" << detail::join(ref.cuts) << " (" << want << ")";
            if (p.size() > M) r.fail(t, "too many segments; " + ctx.str());
            else if (got != want) r.fail(t, "objective differs; " + ctx.str());
            else if (p.boundaries() != ref.cuts) r.fail(t, "tie broken differently; " + ctx.str());
            else if (c.dp_cells != M * F * (F + 1) / 2) r.fail(t, "dp cell count " + std::to_string(c.dp_cells));
        }
        r.stats = std::to_string(enumerated) + " partitions enumerated";
    });
}

/// Bipartite merging: steps * r merges remove exactly steps * r tokens,
/// mass is conserved, and merging identical vectors leaves them unchanged
/// to 1e-7.
inline SuiteResult tome_suite(std::uint64_t seed, std::size_t instances = 100) {
    return detail::timed("tome", [&](SuiteResult& r) {
        oracle::Rng rng(seed);
        double worst_drift = 0.0;
        for (std::size_t t = 0; t < instances; ++t) {
            const std::size_t n = oracle::uniform_index(rng, 4, 48);
            const std::size_t dim = oracle::uniform_index(rng, 2, 8);
            const std::size_t steps = oracle::uniform_index(rng, 1, 3);
            const std::size_t r_step = oracle::uniform_index(rng, 0, n / (steps + 1));
            ++r.instances;
            const auto tokens = oracle::random_tokens(rng, {1, 1, n}, dim);
            const auto plan = tome_merge(tokens, r_step, steps);
            const auto out = apply_plan(tokens, plan);
            std::ostringstream ctx;
            ctx << "n=" << n << " r=" << r_step << " steps=" << steps;
            if (out.size() != n - steps * r_step) {
                r.fail(t, "retained " + std::to_string(out.size()) + "; " + ctx.str());
                continue;
            }
            if (out.total_weight() != n) {
                r.fail(t, "mass " + std::to_string(out.total_weight()) + "; " + ctx.str());
                continue;
            }

            // Fixed point: every token equal.
            std::vector<float> v(dim);
            for (auto& x : v) x = static_cast<float>(oracle::uniform(rng, -1.0, 1.0));
            std::vector<float> data;
            for (std::size_t i = 0; i < n; ++i) data.insert(data.end(), v.begin(), v.end());
            const TokenSet same(dim, {1, 1, n}, data);
            const auto merged = apply_plan(same, tome_merge(same, r_step, steps));
            double drift = 0.0;
            for (std::size_t i = 0; i < merged.size(); ++i)
                for (std::size_t c = 0; c < dim; ++c)
                    drift = std::max(drift, std::abs(static_cast<double>(merged.row(i)[c]) - v[c]));
            worst_drift = std::max(worst_drift, drift);
            if (drift > 1e-7) r.fail(t, "equal vectors drifted by " + std::to_string(drift) + "; " + ctx.str());
        }
        r.stats = "worst fixed-point drift=" + std::to_string(worst_drift);
    });
}

/// RateReport accounting across every operator: retained_tokens equals the
/// surviving count, RR * original_n recovers it up to the one rounding of
/// the division, and temporal prune/merge agree for equal (partition, MR).
inline SuiteResult retention_suite(std::uint64_t seed, std::size_t configs = 100) {
    return detail::timed("retention", [&](SuiteResult& r) {
        oracle::Rng rng(seed);
        std::size_t checks = 0;
        for (std::size_t t = 0; t < configs; ++t) {
            const GridShape grid{oracle::uniform_index(rng, 2, 6), oracle::uniform_index(rng, 2, 5),
                                 oracle::uniform_index(rng, 2, 5)};
            const std::size_t dim = oracle::uniform_index(rng, 2, 8);
            const auto video = oracle::random_video(rng, grid, dim, oracle::uniform(rng, 0.0, 0.5), 0.2);
            const std::size_t n = video.size();
            ScoreVector scores;
            for (std::size_t i = 0; i < n; ++i) scores.scores.push_back(oracle::uniform(rng, 0.0, 1.0));
            ++r.instances;

            auto check = [&](const std::string& op, const ReductionPlan& plan) {
                ++checks;
                const auto out = apply_plan(video, plan);
                const auto rep = rate_report(plan, n);
                const double rr_n = rep.retention_rate() * static_cast<double>(n);
                const double ulp = static_cast<double>(n) * std::numeric_limits<double>::epsilon();
                if (rep.retained_tokens != out.size() || std::abs(rr_n - static_cast<double>(out.size())) > ulp) {
                    std::ostringstream s;
                    s.precision(17);
                    s << op << ": RR*n=" << rr_n << " retained=" << rep.retained_tokens << " survivors=" << out.size();
                    r.fail(t, s.str());
                }
            };

            const std::size_t k = oracle::uniform_index(rng, 1, n);
            check("prune_topk", prune_topk(scores, Budget::tokens(k)));
            check("prune_topk+merge", prune_then_merge(video, prune_topk(scores, Budget::tokens(k)), true));
            check("divprune", divprune_select(video, Budget::ratio(oracle::uniform(rng, 0.05, 1.0))));
            const std::size_t steps = oracle::uniform_index(rng, 1, 3);
            check("tome", tome_merge(video, oracle::uniform_index(rng, 0, n / (steps + 1)), steps));
            check("window_merge", window_merge(video, oracle::uniform_index(rng, 1, 3), oracle::uniform_index(rng, 1, 3),
                                               oracle::uniform(rng, 0.0, 1.0)));
            const std::size_t kd = oracle::uniform_index(rng, 0, n - 1);
            const std::size_t kc = oracle::uniform_index(rng, kd == 0 ? 1 : 0, n - kd);
            check("dominant_contextual", dominant_contextual(video, scores, kd, kc));
            check("vispruner", vispruner_select(video, scores, kd, kc));

            const auto series = frame_similarity(video);
            const double mr = oracle::uniform(rng, 0.0, 0.99);
            for (const auto& part : {segment_fixed(grid.frames, oracle::uniform_index(rng, 1, grid.frames)),
                                     segment_threshold(series, oracle::uniform(rng, -1.0, 1.0)),
                                     segment_dp(series, oracle::uniform_index(rng, 1, grid.frames))}) {
                const auto merge = temporal_merge(video, part, mr);
                const auto prune = temporal_prune(video, part, mr);
                check("temporal_merge", merge);
                check("temporal_prune", prune);
                if (rate_report(merge, n).retention_rate() != rate_report(prune, n).retention_rate())
                    r.fail(t, "temporal merge and prune retain different counts at MR=" + std::to_string(mr));
            }
        }
        r.stats = std::to_string(checks) + " plan checks";
    });
}

/// compose_plans against owner simulation on random plan pairs.
inline SuiteResult composition_suite(std::uint64_t seed, std::size_t instances = 200) {
    return detail::timed("composition", [&](SuiteResult& r) {
        oracle::Rng rng(seed);
        for (std::size_t t = 0; t < instances; ++t) {
            const std::size_t n = oracle::uniform_index(rng, 1, 24);
            const auto first = oracle::random_plan(rng, n, rng() % 2 == 0, rng() % 2 == 0);
            const auto second = oracle::random_plan(rng, first.retained(), rng() % 2 == 0, rng() % 2 == 0);
            ++r.instances;
            const auto composed = compose_plans(first, second);
            try {
                validate_plan(composed, n);
            } catch (const Error& e) {
                r.fail(t, e.what());
                continue;
            }
            if (oracle::plan_owners(composed) != oracle::simulate_owners(first, second))
                r.fail(t, "owner labels differ for n=" + std::to_string(n));
            const auto dim = oracle::uniform_index(rng, 1, 4);
            const auto tokens = oracle::random_tokens(rng, {1, 1, n}, dim);
            const auto two_step = apply_plan(apply_plan(tokens, first), second);
            const auto one_step = apply_plan(tokens, composed);
            if (two_step.token_ids().size() != one_step.token_ids().size() ||
                !std::equal(two_step.token_ids().begin(), two_step.token_ids().end(), one_step.token_ids().begin()) ||
                !std::equal(two_step.weights().begin(), two_step.weights().end(), one_step.weights().begin()))
                r.fail(t, "lineage differs between sequential and composed application");
            else {
                double diff = 0.0;
                for (std::size_t i = 0; i < one_step.data().size(); ++i)
                    diff = std::max(diff, std::abs(static_cast<double>(one_step.data()[i]) - two_step.data()[i]));
                if (diff > 1e-5) r.fail(t, "embeddings differ by " + std::to_string(diff));
            }
        }
    });
}

struct SuiteEntry {
    const char* name;
    std::function<SuiteResult(std::uint64_t)> run;
};

inline const std::vector<SuiteEntry>& all_suites() {
    static const std::vector<SuiteEntry> suites{
        {"divprune", [](std::uint64_t s) { return divprune_suite(s); }},
        {"segment_dp", [](std::uint64_t s) { return segment_dp_suite(s); }},
        {"tome", [](std::uint64_t s) { return tome_suite(s); }},
        {"retention", [](std::uint64_t s) { return retention_suite(s); }},
        {"composition", [](std::uint64_t s) { return composition_suite(s); }},
    };
    return suites;
}

}  // namespace tokcomp::suites
