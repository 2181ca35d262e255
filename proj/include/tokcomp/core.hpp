// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tokcomp/error.hpp"

namespace tokcomp {

/// Frame-major layout of a visual token sequence. Token at spatial slot
/// `slot` of frame `f` has global index `slot + f * rows * cols`.
struct GridShape {
    std::size_t frames = 1;
    std::size_t rows = 1;
    std::size_t cols = 1;

    std::size_t per_frame() const noexcept { return rows * cols; }
    std::size_t total() const noexcept { return frames * rows * cols; }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Portable efficiency signal emitted by operators in place of wall-clock time.
struct OpCounters {
    std::uint64_t similarity_evals = 0;
    std::uint64_t dp_cells = 0;

    OpCounters& operator+=(const OpCounters& o) noexcept {
        similarity_evals += o.similarity_evals;
        dp_cells += o.dp_cells;
        return *this;
    }
    friend bool operator==(const OpCounters&, const OpCounters&) = default;
};

inline void count_sims(OpCounters* c, std::uint64_t n) noexcept {
    if (c != nullptr) c->similarity_evals += n;
}

/// A set of d-dimensional visual token embeddings together with their
/// lineage: original (global) indices and merge mass.
///
/// A freshly constructed set covers the full grid (n = F*H*W) with ids
/// 0..n-1 and unit weights. Reduced sets keep the grid of their origin so
/// that frame and slot can still be recovered from each token id.
class TokenSet {
public:
    TokenSet() = default;

    TokenSet(std::size_t dim, GridShape grid, std::vector<float> data)
        : dim_(dim), grid_(grid), data_(std::move(data)) {
        TOKCOMP_CHECK(dim_ >= 1, Errc::InvalidArgument, "token dim must be >= 1");
        TOKCOMP_CHECK(grid_.frames >= 1 && grid_.rows >= 1 && grid_.cols >= 1,
                      Errc::InvalidArgument, "grid extents must be >= 1");
        TOKCOMP_CHECK(data_.size() == grid_.total() * dim_, Errc::ShapeMismatch,
                      "data size " + std::to_string(data_.size()) + " != frames*rows*cols*dim");
        ids_.resize(grid_.total());
        std::iota(ids_.begin(), ids_.end(), std::size_t{0});
        weights_.assign(grid_.total(), 1);
    }

    /// Builds a (possibly reduced) set with explicit lineage.
    static TokenSet from_parts(std::size_t dim, GridShape grid, std::vector<float> data,
                               std::vector<std::size_t> ids, std::vector<std::uint64_t> weights) {
        TOKCOMP_CHECK(dim >= 1, Errc::InvalidArgument, "token dim must be >= 1");
        TOKCOMP_CHECK(!ids.empty(), Errc::EmptyResult, "token set must not be empty");
        TOKCOMP_CHECK(data.size() == ids.size() * dim && weights.size() == ids.size(),
                      Errc::ShapeMismatch, "lineage arrays disagree with data size");
        for (std::size_t i = 0; i < ids.size(); ++i) {
            TOKCOMP_CHECK(ids[i] < grid.total(), Errc::IndexOutOfRange, "token id outside grid");
            TOKCOMP_CHECK(i == 0 || ids[i - 1] < ids[i], Errc::InvalidArgument,
                          "token ids must be strictly increasing");
            TOKCOMP_CHECK(weights[i] >= 1, Errc::InvalidArgument, "token weight must be >= 1");
        }
        TokenSet t;
        t.dim_ = dim;
        t.grid_ = grid;
        t.data_ = std::move(data);
        t.ids_ = std::move(ids);
        t.weights_ = std::move(weights);
        return t;
    }

    std::size_t size() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const GridShape& grid() const noexcept { return grid_; }
    bool full_grid() const noexcept { return ids_.size() == grid_.total(); }

    std::span<const float> row(std::size_t i) const noexcept {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<const float> data() const noexcept { return data_; }
    std::span<const std::size_t> token_ids() const noexcept { return ids_; }
    std::span<const std::uint64_t> weights() const noexcept { return weights_; }

    std::size_t token_id(std::size_t i) const noexcept { return ids_[i]; }
    std::uint64_t weight(std::size_t i) const noexcept { return weights_[i]; }
    std::size_t frame_of(std::size_t i) const noexcept { return ids_[i] / grid_.per_frame(); }
    std::size_t slot_of(std::size_t i) const noexcept { return ids_[i] % grid_.per_frame(); }

    std::uint64_t total_weight() const noexcept {
        return std::accumulate(weights_.begin(), weights_.end(), std::uint64_t{0});
    }

    friend bool operator==(const TokenSet&, const TokenSet&) = default;

private:
    std::size_t dim_ = 0;
    GridShape grid_{};
    std::vector<float> data_;
    std::vector<std::size_t> ids_;
    std::vector<std::uint64_t> weights_;
};

/// Row-major n_text x n_tokens attention from text tokens onto visual tokens.
struct TextAttention {
    std::size_t n_text = 0;
    std::size_t n_tokens = 0;
    std::vector<float> data;

    std::span<const float> row(std::size_t r) const noexcept {
        return {data.data() + r * n_tokens, n_tokens};
    }
    friend bool operator==(const TextAttention&, const TextAttention&) = default;
};

/// Attention evidence accompanying a TokenSet.
struct AttentionBundle {
    std::optional<std::vector<float>> cls_to_patch;
    std::optional<TextAttention> text_to_visual;
    int source_layer = -1;

    /// Softmax rows of dumped attention may overshoot 1 by rounding.
    static constexpr double kRowSumTolerance = 1e-4;

    void validate(std::size_t n_tokens) const {
        auto check_row = [](std::span<const float> row, const char* what) {
            double sum = 0.0;
            for (float v : row) {
                TOKCOMP_CHECK(std::isfinite(v), Errc::NonFiniteValue, std::string(what) + " has non-finite value");
                TOKCOMP_CHECK(v >= 0.0f, Errc::InvalidArgument, std::string(what) + " has negative value");
                sum += v;
            }
            TOKCOMP_CHECK(sum > 0.0 && sum <= 1.0 + kRowSumTolerance, Errc::InvalidArgument,
                          std::string(what) + " row sum " + std::to_string(sum) + " outside (0, 1+eps]");
        };
        if (cls_to_patch) {
            TOKCOMP_CHECK(cls_to_patch->size() == n_tokens, Errc::ShapeMismatch,
                          "cls attention length does not match token count");
            check_row(*cls_to_patch, "cls attention");
        }
        if (text_to_visual) {
            const auto& t = *text_to_visual;
            TOKCOMP_CHECK(t.n_tokens == n_tokens && t.n_text >= 1 && t.data.size() == t.n_text * t.n_tokens,
                          Errc::ShapeMismatch, "text attention shape does not match token count");
            for (std::size_t r = 0; r < t.n_text; ++r) check_row(t.row(r), "text attention");
        }
    }

    friend bool operator==(const AttentionBundle&, const AttentionBundle&) = default;
};

enum class PlanMode { Prune, Merge, PruneThenMerge };

inline const char* plan_mode_name(PlanMode m) noexcept {
    switch (m) {
        case PlanMode::Prune: return "prune";
        case PlanMode::Merge: return "merge";
        case PlanMode::PruneThenMerge: return "prune_then_merge";
    }
    return "?";
}

struct MergeGroup {
    std::size_t target = 0;
    std::vector<std::size_t> sources;

    friend bool operator==(const MergeGroup&, const MergeGroup&) = default;
};

/// Declarative output of every reduction operator. Indices are positions in
/// the TokenSet the plan was computed for, not original token ids.
struct ReductionPlan {
    std::size_t n_tokens = 0;
    std::vector<std::size_t> kept;
    std::vector<MergeGroup> merges;
    PlanMode mode = PlanMode::Prune;
    /// Set when a requested budget exceeded the token count and was clamped.
    bool budget_clamped = false;

    static ReductionPlan identity(std::size_t n) {
        ReductionPlan p;
        p.n_tokens = n;
        p.kept.resize(n);
        std::iota(p.kept.begin(), p.kept.end(), std::size_t{0});
        return p;
    }

    std::size_t retained() const noexcept { return kept.size(); }

    bool is_identity() const noexcept {
        if (kept.size() != n_tokens || !merges.empty()) return false;
        for (std::size_t i = 0; i < kept.size(); ++i)
            if (kept[i] != i) return false;
        return true;
    }

    /// Sorts groups by target and sources ascending; drops empty groups.
    void normalize() {
        std::erase_if(merges, [](const MergeGroup& g) { return g.sources.empty(); });
        for (auto& g : merges) std::sort(g.sources.begin(), g.sources.end());
        std::sort(merges.begin(), merges.end(),
                  [](const MergeGroup& a, const MergeGroup& b) { return a.target < b.target; });
    }

    /// Same survivors and groups; mode and warning flag are not compared.
    bool same_effect(const ReductionPlan& o) const {
        ReductionPlan a = *this, b = o;
        a.normalize();
        b.normalize();
        return a.n_tokens == b.n_tokens && a.kept == b.kept && a.merges == b.merges;
    }

    friend bool operator==(const ReductionPlan&, const ReductionPlan&) = default;
};

/// Throws on any structural violation of the plan invariants against a set of n tokens.
inline void validate_plan(const ReductionPlan& plan, std::size_t n) {
    TOKCOMP_CHECK(plan.n_tokens == n, Errc::InvalidPlan,
                  "plan built for " + std::to_string(plan.n_tokens) + " tokens, applied to " + std::to_string(n));
    TOKCOMP_CHECK(!plan.kept.empty(), Errc::EmptyResult, "plan keeps no tokens");

    // 0 = untouched, 1 = kept, 2 = merge source
    std::vector<std::uint8_t> role(n, 0);
    for (std::size_t i = 0; i < plan.kept.size(); ++i) {
        const auto k = plan.kept[i];
        TOKCOMP_CHECK(k < n, Errc::IndexOutOfRange, "kept index " + std::to_string(k) + " out of range");
        TOKCOMP_CHECK(i == 0 || plan.kept[i - 1] < k, Errc::InvalidPlan, "kept indices must be strictly increasing");
        role[k] = 1;
    }
    std::vector<std::uint8_t> is_target(n, 0);
    std::size_t sources = 0;
    for (const auto& g : plan.merges) {
        TOKCOMP_CHECK(g.target < n, Errc::IndexOutOfRange, "merge target out of range");
        TOKCOMP_CHECK(role[g.target] == 1, Errc::InvalidPlan,
                      "merge target " + std::to_string(g.target) + " is not kept");
        TOKCOMP_CHECK(!is_target[g.target], Errc::OverlappingGroups,
                      "target " + std::to_string(g.target) + " appears in two groups");
        is_target[g.target] = 1;
        for (auto s : g.sources) {
            TOKCOMP_CHECK(s < n, Errc::IndexOutOfRange, "merge source " + std::to_string(s) + " out of range");
            TOKCOMP_CHECK(role[s] == 0, Errc::OverlappingGroups,
                          "index " + std::to_string(s) + " is kept or appears in two groups");
            role[s] = 2;
            ++sources;
        }
    }
    switch (plan.mode) {
        case PlanMode::Prune:
            TOKCOMP_CHECK(plan.merges.empty(), Errc::InvalidPlan, "prune plan carries merge groups");
            break;
        case PlanMode::Merge:
            TOKCOMP_CHECK(plan.kept.size() + sources == n, Errc::InvalidPlan,
                          "merge plan must account for every token");
            break;
        case PlanMode::PruneThenMerge:
            break;
    }
}

/// Applies a plan: survivors in ascending original order, each merge target
/// replaced by the weight-weighted mean of itself and its sources.
inline TokenSet apply_plan(const TokenSet& tokens, const ReductionPlan& plan) {
    validate_plan(plan, tokens.size());
    const std::size_t d = tokens.dim();

    std::vector<const MergeGroup*> group_of(tokens.size(), nullptr);
    for (const auto& g : plan.merges) group_of[g.target] = &g;

    std::vector<float> data;
    data.reserve(plan.kept.size() * d);
    std::vector<std::size_t> ids;
    ids.reserve(plan.kept.size());
    std::vector<std::uint64_t> weights;
    weights.reserve(plan.kept.size());
    std::vector<double> acc(d);

    for (auto k : plan.kept) {
        ids.push_back(tokens.token_id(k));
        const MergeGroup* g = group_of[k];
        if (g == nullptr || g->sources.empty()) {
            auto r = tokens.row(k);
            data.insert(data.end(), r.begin(), r.end());
            weights.push_back(tokens.weight(k));
            continue;
        }
        std::vector<std::size_t> members{k};
        members.insert(members.end(), g->sources.begin(), g->sources.end());
        std::sort(members.begin() + 1, members.end());
        std::fill(acc.begin(), acc.end(), 0.0);
        std::uint64_t mass = 0;
        for (auto m : members) {
            const double w = static_cast<double>(tokens.weight(m));
            auto r = tokens.row(m);
            for (std::size_t j = 0; j < d; ++j) acc[j] += w * static_cast<double>(r[j]);
            mass += tokens.weight(m);
        }
        for (std::size_t j = 0; j < d; ++j)
            data.push_back(static_cast<float>(acc[j] / static_cast<double>(mass)));
        weights.push_back(mass);
    }
    return TokenSet::from_parts(d, tokens.grid(), std::move(data), std::move(ids), std::move(weights));
}

/// Composes `first` with `second`, where `second` indexes the output of
/// `first`. Applying the result equals applying both in sequence up to
/// floating-point rounding of the intermediate means.
inline ReductionPlan compose_plans(const ReductionPlan& first, const ReductionPlan& second) {
    validate_plan(first, first.n_tokens);
    validate_plan(second, first.kept.size());
    constexpr auto kDropped = static_cast<std::size_t>(-1);

    auto owners = [&](const ReductionPlan& p) {
        std::vector<std::size_t> pos(p.n_tokens, kDropped);
        for (std::size_t i = 0; i < p.kept.size(); ++i) pos[p.kept[i]] = i;
        std::vector<std::size_t> own = pos;
        for (const auto& g : p.merges)
            for (auto s : g.sources) own[s] = pos[g.target];
        return own;
    };
    const auto own_first = owners(first);
    const auto own_second = owners(second);

    ReductionPlan out;
    out.n_tokens = first.n_tokens;
    out.budget_clamped = first.budget_clamped || second.budget_clamped;
    out.kept.reserve(second.kept.size());
    for (auto k : second.kept) out.kept.push_back(first.kept[k]);

    std::vector<std::vector<std::size_t>> members(second.kept.size());
    bool dropped_any = false;
    for (std::size_t i = 0; i < first.n_tokens; ++i) {
        std::size_t q = own_first[i] == kDropped ? kDropped : own_second[own_first[i]];
        if (q == kDropped) {
            dropped_any = true;
            continue;
        }
        if (out.kept[q] != i) members[q].push_back(i);
    }
    for (std::size_t q = 0; q < members.size(); ++q)
        if (!members[q].empty()) out.merges.push_back({out.kept[q], std::move(members[q])});

    if (out.merges.empty())
        out.mode = PlanMode::Prune;
    else
        out.mode = dropped_any ? PlanMode::PruneThenMerge : PlanMode::Merge;
    return out;
}

/// Ordered, disjoint half-open frame ranges covering [0, frames).
class SegmentPartition {
public:
    struct Segment {
        std::size_t begin = 0;
        std::size_t end = 0;
        std::size_t length() const noexcept { return end - begin; }
        friend bool operator==(const Segment&, const Segment&) = default;
    };

    SegmentPartition() = default;

    explicit SegmentPartition(std::vector<Segment> segments) : segments_(std::move(segments)) {
        TOKCOMP_CHECK(!segments_.empty(), Errc::InvalidArgument, "partition needs at least one segment");
        TOKCOMP_CHECK(segments_.front().begin == 0, Errc::InvalidArgument, "partition must start at frame 0");
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            TOKCOMP_CHECK(segments_[i].begin < segments_[i].end, Errc::InvalidArgument, "empty segment");
            TOKCOMP_CHECK(i == 0 || segments_[i - 1].end == segments_[i].begin, Errc::InvalidArgument,
                          "segments must be contiguous");
        }
    }

    /// From interior boundaries, e.g. {2} over 4 frames gives [0,2),[2,4).
    static SegmentPartition from_boundaries(std::size_t frames, std::span<const std::size_t> boundaries) {
        std::vector<Segment> segs;
        std::size_t start = 0;
        for (auto b : boundaries) {
            segs.push_back({start, b});
            start = b;
        }
        segs.push_back({start, frames});
        return SegmentPartition(std::move(segs));
    }

    const std::vector<Segment>& segments() const noexcept { return segments_; }
    std::size_t size() const noexcept { return segments_.size(); }
    std::size_t frames() const noexcept { return segments_.empty() ? 0 : segments_.back().end; }

    std::vector<std::size_t> boundaries() const {
        std::vector<std::size_t> b;
        for (std::size_t i = 1; i < segments_.size(); ++i) b.push_back(segments_[i].begin);
        return b;
    }

    friend bool operator==(const SegmentPartition&, const SegmentPartition&) = default;

private:
    std::vector<Segment> segments_;
};

}  // namespace tokcomp
