// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tokcomp/core.hpp"

namespace tokcomp {

enum class ScoreSource { ClsAttention, TextAttention, Diversity, Redundancy };

/// Per-token importance; higher means more important. Never renormalized,
/// since every consumer is rank based.
struct ScoreVector {
    std::vector<double> scores;
    ScoreSource source = ScoreSource::ClsAttention;

    std::size_t size() const noexcept { return scores.size(); }
    double operator[](std::size_t i) const noexcept { return scores[i]; }
};

/// Symmetric cosine similarity matrix with unit diagonal.
struct SimMatrix {
    std::size_t n = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const noexcept { return values[i * n + j]; }
};

inline constexpr double kZeroNorm = 1e-12;

inline double l2_norm(std::span<const float> v) noexcept {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

/// Cosine similarity given precomputed norms. Rows with norm below
/// kZeroNorm are dissimilar (0) to everything else.
inline double cosine_with_norms(std::span<const float> a, double na, std::span<const float> b, double nb) noexcept {
    if (na < kZeroNorm || nb < kZeroNorm) return 0.0;
    double dot = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) dot += static_cast<double>(a[k]) * b[k];
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

inline double cosine(std::span<const float> a, std::span<const float> b) noexcept {
    return cosine_with_norms(a, l2_norm(a), b, l2_norm(b));
}

inline std::vector<double> row_norms(const TokenSet& tokens) {
    std::vector<double> norms(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) norms[i] = l2_norm(tokens.row(i));
    return norms;
}

inline ScoreVector cls_scores(const AttentionBundle& bundle) {
    TOKCOMP_CHECK(bundle.cls_to_patch.has_value(), Errc::MissingClsAttention, "bundle has no [CLS] attention");
    ScoreVector out;
    out.source = ScoreSource::ClsAttention;
    out.scores.assign(bundle.cls_to_patch->begin(), bundle.cls_to_patch->end());
    return out;
}

enum class TextReduce { Mean, LastRow };

inline ScoreVector text_scores(const AttentionBundle& bundle, TextReduce reduce = TextReduce::Mean) {
    TOKCOMP_CHECK(bundle.text_to_visual.has_value() && bundle.text_to_visual->n_text >= 1,
                  Errc::MissingTextAttention, "bundle has no text-to-visual attention");
    const auto& t = *bundle.text_to_visual;
    ScoreVector out;
    out.source = ScoreSource::TextAttention;
    if (reduce == TextReduce::LastRow) {
        auto last = t.row(t.n_text - 1);
        out.scores.assign(last.begin(), last.end());
        return out;
    }
    out.scores.assign(t.n_tokens, 0.0);
    for (std::size_t r = 0; r < t.n_text; ++r) {
        auto row = t.row(r);
        for (std::size_t j = 0; j < t.n_tokens; ++j) out.scores[j] += row[j];
    }
    for (auto& s : out.scores) s /= static_cast<double>(t.n_text);
    return out;
}

inline SimMatrix cosine_sim(const TokenSet& tokens, OpCounters* counters = nullptr) {
    const std::size_t n = tokens.size();
    const auto norms = row_norms(tokens);
    SimMatrix s;
    s.n = n;
    s.values.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s.values[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = cosine_with_norms(tokens.row(i), norms[i], tokens.row(j), norms[j]);
            s.values[i * n + j] = v;
            s.values[j * n + i] = v;
        }
    }
    count_sims(counters, n * (n - (n > 0 ? 1 : 0)) / 2);
    return s;
}

/// Duplicate-based importance: -max_{j != i} S[i][j].
inline ScoreVector redundancy_scores(const SimMatrix& sim) {
    ScoreVector out;
    out.source = ScoreSource::Redundancy;
    out.scores.assign(sim.n, 0.0);
    if (sim.n < 2) return out;
    for (std::size_t i = 0; i < sim.n; ++i) {
        double best = -2.0;
        for (std::size_t j = 0; j < sim.n; ++j)
            if (j != i) best = std::max(best, sim.at(i, j));
        out.scores[i] = -best;
    }
    return out;
}

/// Carries scores through a plan: each survivor keeps its own score.
inline ScoreVector select_scores(const ScoreVector& scores, const ReductionPlan& plan) {
    TOKCOMP_CHECK(scores.size() == plan.n_tokens, Errc::ShapeMismatch, "score length does not match plan");
    ScoreVector out;
    out.source = scores.source;
    out.scores.reserve(plan.kept.size());
    for (auto k : plan.kept) out.scores.push_back(scores.scores[k]);
    return out;
}

}  // namespace tokcomp
