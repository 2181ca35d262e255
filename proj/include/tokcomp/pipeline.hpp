// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Config-driven runs: parse a YAML pipeline description, execute it over a
// set of token dumps, and emit deterministic CSV tables plus a manifest that
// replays the run.
//
// Config layout:
//
//   seed: 7
//   workers: 2
//   inputs:
//     - dump: data/sample.tokd          # relative to the config file
//     - synthetic: {frames: 4, rows: 6, cols: 6, dim: 16}
//   stages:
//     - metrics: cls
//     - spatial: prune_topk
//       k: [64, 128, 192]               # a list sweeps one parameter
//     - eval: cost
//   output: out/
//
// Each stage is a map whose single kind key (metrics, spatial, temporal,
// quant, eval) names the operator; remaining keys are its parameters.

#include <yaml-cpp/yaml.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "tokcomp/core.hpp"
#include "tokcomp/dump.hpp"
#include "tokcomp/error.hpp"
#include "tokcomp/eval.hpp"
#include "tokcomp/metrics.hpp"
#include "tokcomp/oracle.hpp"
#include "tokcomp/quant.hpp"
#include "tokcomp/spatial.hpp"
#include "tokcomp/temporal.hpp"

namespace tokcomp {

enum class StageKind { Metrics, Spatial, Temporal, Quant, Eval };

inline const char* stage_kind_name(StageKind k) noexcept {
    switch (k) {
        case StageKind::Metrics: return "metrics";
        case StageKind::Spatial: return "spatial";
        case StageKind::Temporal: return "temporal";
        case StageKind::Quant: return "quant";
        case StageKind::Eval: return "eval";
    }
    return "?";
}

/// Position in the stage order. Spatial and temporal stages share a rank
/// and may interleave freely.
inline int stage_rank(StageKind k) noexcept {
    switch (k) {
        case StageKind::Metrics: return 0;
        case StageKind::Spatial:
        case StageKind::Temporal: return 1;
        case StageKind::Quant: return 2;
        case StageKind::Eval: return 3;
    }
    return 0;
}

using ParamValue = std::variant<bool, std::int64_t, double, std::string>;

enum class ParamType { Int, Real, Bool, Choice, Path };

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::Int;
    bool required = false;
    std::optional<ParamValue> fallback;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool lo_open = false;
    bool hi_open = false;
    std::vector<std::string> choices;
};

struct StageConfig {
    StageKind kind = StageKind::Metrics;
    std::string op;
    /// Resolved parameters, defaults filled in. A swept parameter holds its
    /// first value here.
    std::map<std::string, ParamValue> params;
    std::string sweep_param;
    std::vector<ParamValue> sweep_values;
    int line = 0;

    bool has(const std::string& name) const { return params.count(name) != 0; }

    const ParamValue& at(const std::string& name) const {
        auto it = params.find(name);
        TOKCOMP_CHECK(it != params.end(), Errc::InvalidParameter, op + ": missing parameter '" + name + "'");
        return it->second;
    }
    std::int64_t get_int(const std::string& name) const { return std::get<std::int64_t>(at(name)); }
    double get_real(const std::string& name) const {
        const auto& v = at(name);
        return std::holds_alternative<std::int64_t>(v) ? static_cast<double>(std::get<std::int64_t>(v))
                                                       : std::get<double>(v);
    }
    bool get_bool(const std::string& name) const { return std::get<bool>(at(name)); }
    const std::string& get_string(const std::string& name) const { return std::get<std::string>(at(name)); }
};

struct SyntheticInput {
    std::size_t frames = 1;
    std::size_t rows = 8;
    std::size_t cols = 8;
    std::size_t dim = 16;
    /// Number of text rows of text-to-visual attention; 0 omits it.
    std::size_t text = 4;
    bool cls = true;
    /// Per-frame random-walk step of the embeddings.
    double drift = 0.1;
    /// Probability that a frame starts a new scene.
    double cut_prob = 0.0;
};

struct InputConfig {
    std::optional<std::filesystem::path> dump;
    std::optional<SyntheticInput> synthetic;

    std::string label(std::size_t index) const {
        return dump ? dump->filename().string() : "synthetic-" + std::to_string(index);
    }
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::vector<InputConfig> inputs;
    std::vector<StageConfig> stages;
    std::optional<std::filesystem::path> output;

    const StageConfig* sweep_stage() const {
        for (const auto& s : stages)
            if (!s.sweep_param.empty()) return &s;
        return nullptr;
    }
    std::size_t variant_count() const {
        const auto* s = sweep_stage();
        return s ? s->sweep_values.size() : 1;
    }

    /// Stage list for one sweep variant.
    std::vector<StageConfig> variant_stages(std::size_t v) const {
        auto out = stages;
        for (auto& s : out)
            if (!s.sweep_param.empty()) s.params[s.sweep_param] = s.sweep_values.at(v);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Operator registry

struct OperatorSpec {
    StageKind kind;
    std::string name;
    std::vector<ParamSpec> params;
    /// Cross-parameter checks on a resolved stage; throws InvalidParameter.
    std::function<void(const StageConfig&)> check;
};

namespace detail {

inline ParamSpec make_param(std::string name, ParamType type, bool required) {
    ParamSpec p;
    p.name = std::move(name);
    p.type = type;
    p.required = required;
    return p;
}

inline ParamSpec p_int(std::string name, double lo, std::optional<std::int64_t> fallback = std::nullopt,
                       bool required = false) {
    auto p = make_param(std::move(name), ParamType::Int, required);
    p.lo = lo;
    if (fallback) p.fallback = *fallback;
    return p;
}

inline ParamSpec p_real(std::string name, double lo, double hi, bool lo_open, bool hi_open,
                        std::optional<double> fallback = std::nullopt, bool required = false) {
    auto p = make_param(std::move(name), ParamType::Real, required);
    p.lo = lo;
    p.hi = hi;
    p.lo_open = lo_open;
    p.hi_open = hi_open;
    if (fallback) p.fallback = *fallback;
    return p;
}

inline ParamSpec p_bool(std::string name, bool fallback) {
    auto p = make_param(std::move(name), ParamType::Bool, false);
    p.fallback = fallback;
    return p;
}

inline ParamSpec p_choice(std::string name, std::vector<std::string> choices,
                          std::optional<std::string> fallback = std::nullopt, bool required = false) {
    auto p = make_param(std::move(name), ParamType::Choice, required);
    p.choices = std::move(choices);
    if (fallback) p.fallback = *fallback;
    return p;
}

inline ParamSpec p_path(std::string name, bool required) { return make_param(std::move(name), ParamType::Path, required); }

inline void require(bool cond, const std::string& msg) { TOKCOMP_CHECK(cond, Errc::InvalidParameter, msg); }

inline void exactly_one_budget(const StageConfig& s) {
    require(s.has("k") != s.has("ratio"), s.op + ": give exactly one of 'k' or 'ratio'");
}

inline std::vector<ParamSpec> quant_params(std::int64_t bits) {
    return {p_int("bits", 4, bits),
            p_choice("granularity", {"per-tensor", "per-channel", "group"}, "per-channel"),
            p_int("group_size", 1),
            p_bool("symmetric", true),
            p_path("weights", false),
            p_path("calib", false),
            p_int("rows", 1, 64),
            p_int("cols", 1, 64),
            p_int("calib_rows", 1, 128)};
}

inline void check_quant(const StageConfig& s) {
    const auto bits = s.get_int("bits");
    require(bits == 4 || bits == 8, s.op + ": bits must be 4 or 8");
    require(s.get_string("granularity") != "group" || s.has("group_size"),
            s.op + ": group granularity needs 'group_size'");
    require(!s.has("calib") || s.has("weights"), s.op + ": 'calib' requires 'weights'");
}

}  // namespace detail

inline const std::vector<OperatorSpec>& operator_registry() {
    using namespace detail;
    static const std::vector<OperatorSpec> registry = [] {
        const auto score_choice = p_choice("score", {"cls", "text", "redundancy"});
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<OperatorSpec> r;
        r.push_back({StageKind::Metrics, "cls", {}, nullptr});
        r.push_back({StageKind::Metrics, "text", {p_choice("reduce", {"mean", "last_row"}, "mean")}, nullptr});
        r.push_back({StageKind::Metrics, "redundancy", {}, nullptr});

        r.push_back({StageKind::Spatial,
                     "prune_topk",
                     {p_int("k", 1), p_real("ratio", 0.0, 1.0, true, false), score_choice,
                      p_bool("merge_dropped", false)},
                     exactly_one_budget});
        r.push_back({StageKind::Spatial,
                     "divprune",
                     {p_int("k", 1), p_real("ratio", 0.0, 1.0, true, false),
                      p_choice("distance", {"cosine", "euclidean"}, "cosine"), p_bool("merge_dropped", false)},
                     exactly_one_budget});
        r.push_back({StageKind::Spatial, "tome", {p_int("r", 0, std::nullopt, true), p_int("steps", 1, 1)}, nullptr});
        r.push_back({StageKind::Spatial,
                     "window_merge",
                     {p_int("window_h", 1, 2), p_int("window_w", 1, 2),
                      p_real("threshold", -1.0, inf, false, false, std::nullopt, true)},
                     nullptr});
        r.push_back({StageKind::Spatial,
                     "dominant_contextual",
                     {p_int("k_dominant", 0, std::nullopt, true), p_int("k_contextual", 0, std::nullopt, true),
                      score_choice},
                     [](const StageConfig& s) {
                         require(s.get_int("k_dominant") + s.get_int("k_contextual") >= 1,
                                 s.op + ": must keep at least one token");
                     }});
        r.push_back({StageKind::Spatial,
                     "vispruner",
                     {p_int("k_important", 0, std::nullopt, true), p_int("k_diverse", 0, std::nullopt, true),
                      score_choice},
                     [](const StageConfig& s) {
                         require(s.get_int("k_important") + s.get_int("k_diverse") >= 1,
                                 s.op + ": must keep at least one token");
                     }});

        for (const char* name : {"temporal_merge", "temporal_prune"}) {
            r.push_back({StageKind::Temporal,
                         name,
                         {p_choice("segment", {"fixed", "threshold", "dp"}, std::nullopt, true), p_int("length", 1),
                          p_real("tau", -1.0, 1.0, false, false), p_int("max_segments", 1),
                          p_real("merge_rate", 0.0, 1.0, false, true, std::nullopt, true)},
                         [](const StageConfig& s) {
                             const auto& seg = s.get_string("segment");
                             const char* needed = seg == "fixed" ? "length" : seg == "threshold" ? "tau" : "max_segments";
                             for (const char* p : {"length", "tau", "max_segments"})
                                 require(s.has(p) == (std::string(p) == needed),
                                         s.op + ": segment '" + seg + "' takes '" + needed + "' and no other "
                                                                                            "segmentation parameter");
                         }});
        }

        r.push_back({StageKind::Quant, "rtn", quant_params(8), check_quant});
        r.push_back({StageKind::Quant, "gptq", quant_params(4), check_quant});
        auto sq = quant_params(8);
        sq.push_back(p_real("alpha", 0.0, 1.0, false, false, 0.5));
        r.push_back({StageKind::Quant, "smoothquant", sq, check_quant});

        r.push_back({StageKind::Eval, "aggregate", {p_path("scores", true)}, nullptr});
        r.push_back({StageKind::Eval, "conditional", {p_path("records", true)}, nullptr});
        r.push_back({StageKind::Eval,
                     "cost",
                     {p_int("hidden", 1, 4096), p_int("layers", 1, 32), p_real("attn_coeff", 0.0, inf, true, false, 4.0),
                      p_real("mlp_coeff", 0.0, inf, true, false, 24.0), p_real("parameters", 0.0, inf, false, false, 0.0),
                      p_real("kv_bytes_per_element", 0.0, inf, true, false, 2.0), p_int("bits", 1)},
                     nullptr});
        return r;
    }();
    return registry;
}

inline const OperatorSpec* find_operator(StageKind kind, const std::string& name) {
    for (const auto& op : operator_registry())
        if (op.kind == kind && op.name == name) return &op;
    return nullptr;
}

/// Levenshtein distance.
inline std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Registered operator name closest to `name`, across all stage kinds.
inline std::string nearest_operator(const std::string& name) {
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& op : operator_registry()) {
        const auto d = edit_distance(name, op.name);
        if (d < best_d) {
            best_d = d;
            best = op.name;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

[[noreturn]] inline void config_error(Errc code, const YAML::Node& node, const std::string& msg) {
    const auto mark = node.Mark();
    const std::string where = mark.is_null() ? std::string("config") : "line " + std::to_string(mark.line + 1);
    throw Error(code, where + ": " + msg);
}

inline bool parse_scalar_bool(const std::string& s, bool& out) {
    if (s == "true" || s == "True" || s == "TRUE" || s == "yes") return out = true, true;
    if (s == "false" || s == "False" || s == "FALSE" || s == "no") return out = false, true;
    return false;
}

inline bool parse_scalar_int(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

inline bool parse_scalar_real(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size() && std::isfinite(out);
}

inline std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = base / path;
    return std::filesystem::absolute(path).lexically_normal();
}

inline ParamValue convert_param(const ParamSpec& spec, const YAML::Node& node, const std::string& op,
                                const std::filesystem::path& base) {
    if (!node.IsScalar()) config_error(Errc::InvalidParameter, node, op + "." + spec.name + " must be a scalar");
    const auto text = node.Scalar();
    auto bad = [&](const std::string& why) { config_error(Errc::InvalidParameter, node, op + "." + spec.name + " " + why); };
    auto check_range = [&](double v) {
        const bool lo_ok = spec.lo_open ? v > spec.lo : v >= spec.lo;
        const bool hi_ok = spec.hi_open ? v < spec.hi : v <= spec.hi;
        if (!lo_ok || !hi_ok) {
            std::string range = std::string(spec.lo_open ? "(" : "[") + format_fixed(spec.lo) + ", " +
                                (std::isinf(spec.hi) ? std::string("inf") : format_fixed(spec.hi)) +
                                (spec.hi_open || std::isinf(spec.hi) ? ")" : "]");
            bad("= " + text + " outside " + range);
        }
    };
    switch (spec.type) {
        case ParamType::Int: {
            std::int64_t v = 0;
            if (!parse_scalar_int(text, v)) bad("must be an integer, got '" + text + "'");
            check_range(static_cast<double>(v));
            return v;
        }
        case ParamType::Real: {
            double v = 0.0;
            if (!parse_scalar_real(text, v)) bad("must be a finite number, got '" + text + "'");
            check_range(v);
            return v;
        }
        case ParamType::Bool: {
            bool v = false;
            if (!parse_scalar_bool(text, v)) bad("must be true or false, got '" + text + "'");
            return v;
        }
        case ParamType::Choice: {
            if (std::find(spec.choices.begin(), spec.choices.end(), text) == spec.choices.end()) {
                std::string opts;
                for (const auto& c : spec.choices) opts += (opts.empty() ? "" : ", ") + c;
                bad("must be one of {" + opts + "}, got '" + text + "'");
            }
            return text;
        }
        case ParamType::Path:
            if (text.empty()) bad("must be a non-empty path");
            return resolve_path(text, base).string();
    }
    return text;
}

inline std::optional<StageKind> stage_kind_from(const std::string& key) {
    for (auto k : {StageKind::Metrics, StageKind::Spatial, StageKind::Temporal, StageKind::Quant, StageKind::Eval})
        if (key == stage_kind_name(k)) return k;
    return std::nullopt;
}

inline StageConfig parse_stage(const YAML::Node& node, const std::filesystem::path& base) {
    if (!node.IsMap()) config_error(Errc::SyntaxError, node, "each stage must be a map");
    StageConfig stage;
    stage.line = node.Mark().line + 1;
    // A default YAML::Node converts to true, so presence is tracked separately.
    std::optional<YAML::Node> kind_node;
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (auto kind = stage_kind_from(key)) {
            if (kind_node) config_error(Errc::SyntaxError, kv.first, "stage names more than one kind");
            stage.kind = *kind;
            kind_node = kv.second;
        }
    }
    if (!kind_node)
        config_error(Errc::SyntaxError, node, "stage needs one of metrics/spatial/temporal/quant/eval");
    const YAML::Node kind_value = *kind_node;
    if (!kind_value.IsScalar()) config_error(Errc::SyntaxError, kind_value, "operator name must be a string");
    stage.op = kind_value.Scalar();

    const auto* spec = find_operator(stage.kind, stage.op);
    if (spec == nullptr) {
        const auto near = nearest_operator(stage.op);
        std::string msg = "unknown " + std::string(stage_kind_name(stage.kind)) + " operator '" + stage.op +
                          "'; did you mean '" + near + "'";
        const auto* other = [&]() -> const OperatorSpec* {
            for (const auto& o : operator_registry())
                if (o.name == near) return &o;
            return nullptr;
        }();
        if (other != nullptr && other->kind != stage.kind)
            msg += " (a " + std::string(stage_kind_name(other->kind)) + " operator)";
        config_error(Errc::UnknownOperator, kind_value, msg + "?");
    }

    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (stage_kind_from(key)) continue;
        auto ps = std::find_if(spec->params.begin(), spec->params.end(), [&](const ParamSpec& p) { return p.name == key; });
        if (ps == spec->params.end()) {
            std::string known;
            for (const auto& p : spec->params) known += (known.empty() ? "" : ", ") + p.name;
            config_error(Errc::InvalidParameter, kv.first,
                         stage.op + " has no parameter '" + key + "' (known: " + (known.empty() ? "none" : known) + ")");
        }
        if (kv.second.IsSequence()) {
            if (ps->type == ParamType::Path || ps->type == ParamType::Choice || ps->type == ParamType::Bool)
                config_error(Errc::InvalidParameter, kv.second, stage.op + "." + key + " cannot be swept");
            if (kv.second.size() == 0) config_error(Errc::InvalidParameter, kv.second, "empty sweep list");
            stage.sweep_param = key;
            for (const auto& v : kv.second) stage.sweep_values.push_back(convert_param(*ps, v, stage.op, base));
            stage.params[key] = stage.sweep_values.front();
        } else {
            stage.params[key] = convert_param(*ps, kv.second, stage.op, base);
        }
    }
    for (const auto& p : spec->params) {
        if (stage.has(p.name)) continue;
        if (p.required) config_error(Errc::InvalidParameter, node, stage.op + " requires '" + p.name + "'");
        if (p.fallback) stage.params[p.name] = *p.fallback;
    }
    if (spec->check) {
        try {
            if (stage.sweep_param.empty()) {
                spec->check(stage);
            } else {
                for (const auto& v : stage.sweep_values) {
                    auto copy = stage;
                    copy.params[stage.sweep_param] = v;
                    spec->check(copy);
                }
            }
        } catch (const Error& e) {
            config_error(e.code(), node, e.message());
        }
    }
    return stage;
}

inline std::size_t get_size(const YAML::Node& node, const std::string& what, std::size_t lo) {
    std::int64_t v = 0;
    if (!node.IsScalar() || !parse_scalar_int(node.Scalar(), v) || v < static_cast<std::int64_t>(lo))
        config_error(Errc::InvalidParameter, node, what + " must be an integer >= " + std::to_string(lo));
    return static_cast<std::size_t>(v);
}

inline double get_real(const YAML::Node& node, const std::string& what, double lo, double hi) {
    double v = 0.0;
    if (!node.IsScalar() || !parse_scalar_real(node.Scalar(), v) || v < lo || v > hi)
        config_error(Errc::InvalidParameter, node,
                     what + " must be a number in [" + format_fixed(lo) + ", " + format_fixed(hi) + "]");
    return v;
}

inline InputConfig parse_input(const YAML::Node& node, const std::filesystem::path& base) {
    if (!node.IsMap() || node.size() != 1)
        config_error(Errc::SyntaxError, node, "each input must be {dump: path} or {synthetic: {...}}");
    InputConfig in;
    const auto key = node.begin()->first.as<std::string>();
    const auto value = node.begin()->second;
    if (key == "dump") {
        if (!value.IsScalar() || value.Scalar().empty())
            config_error(Errc::InvalidParameter, value, "dump must be a path");
        in.dump = resolve_path(value.Scalar(), base);
    } else if (key == "synthetic") {
        SyntheticInput s;
        if (!value.IsNull() && !value.IsMap()) config_error(Errc::SyntaxError, value, "synthetic takes a map");
        if (value.IsMap())
            for (const auto& kv : value) {
                const auto k = kv.first.as<std::string>();
                if (k == "frames") s.frames = get_size(kv.second, k, 1);
                else if (k == "rows") s.rows = get_size(kv.second, k, 1);
                else if (k == "cols") s.cols = get_size(kv.second, k, 1);
                else if (k == "dim") s.dim = get_size(kv.second, k, 1);
                else if (k == "text") s.text = get_size(kv.second, k, 0);
                else if (k == "drift") s.drift = get_real(kv.second, k, 0.0, 1e6);
                else if (k == "cut_prob") s.cut_prob = get_real(kv.second, k, 0.0, 1.0);
                else if (k == "cls") {
                    bool b = false;
                    if (!kv.second.IsScalar() || !parse_scalar_bool(kv.second.Scalar(), b))
                        config_error(Errc::InvalidParameter, kv.second, "cls must be true or false");
                    s.cls = b;
                } else {
                    config_error(Errc::InvalidParameter, kv.first, "unknown synthetic input key '" + k + "'");
                }
            }
        in.synthetic = s;
    } else {
        config_error(Errc::InvalidParameter, node.begin()->first, "unknown input kind '" + key + "'");
    }
    return in;
}

}  // namespace detail

/// Parses and validates a pipeline config. Relative paths resolve against
/// `base_dir`. The first problem found is reported with its line number.
inline PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".") {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw Error(Errc::SyntaxError, "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root.IsMap()) throw Error(Errc::SyntaxError, "line 1: config must be a map");

    PipelineConfig cfg;
    bool saw_inputs = false;
    try {
        for (const auto& kv : root) {
            const auto key = kv.first.as<std::string>();
            const auto& v = kv.second;
            if (key == "seed") {
                std::int64_t s = 0;
                if (!v.IsScalar() || !detail::parse_scalar_int(v.Scalar(), s) || s < 0)
                    detail::config_error(Errc::InvalidParameter, v, "seed must be a nonnegative integer");
                cfg.seed = static_cast<std::uint64_t>(s);
            } else if (key == "workers") {
                cfg.workers = detail::get_size(v, "workers", 1);
            } else if (key == "inputs") {
                if (!v.IsSequence()) detail::config_error(Errc::SyntaxError, v, "inputs must be a list");
                for (const auto& in : v) cfg.inputs.push_back(detail::parse_input(in, base_dir));
                saw_inputs = true;
            } else if (key == "stages") {
                if (!v.IsSequence() && !v.IsNull()) detail::config_error(Errc::SyntaxError, v, "stages must be a list");
                for (const auto& st : v) cfg.stages.push_back(detail::parse_stage(st, base_dir));
            } else if (key == "output") {
                if (!v.IsScalar() || v.Scalar().empty())
                    detail::config_error(Errc::InvalidParameter, v, "output must be a directory path");
                cfg.output = detail::resolve_path(v.Scalar(), base_dir);
            } else {
                detail::config_error(Errc::InvalidParameter, kv.first, "unknown top-level key '" + key + "'");
            }
        }
    } catch (const YAML::Exception& e) {
        throw Error(Errc::SyntaxError, "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!saw_inputs || cfg.inputs.empty())
        throw Error(Errc::InvalidParameter, "config: 'inputs' must list at least one dump or synthetic input");

    int prev_rank = -1;
    const StageConfig* swept = nullptr;
    bool has_quant = false;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& s = cfg.stages[i];
        const auto where = "line " + std::to_string(s.line) + ": ";
        TOKCOMP_CHECK(stage_rank(s.kind) >= prev_rank, Errc::InvalidParameter,
                      where + std::string(stage_kind_name(s.kind)) + " stage '" + s.op +
                          "' is out of order (metrics < spatial/temporal < quant < eval)");
        prev_rank = stage_rank(s.kind);
        if (!s.sweep_param.empty()) {
            TOKCOMP_CHECK(swept == nullptr, Errc::InvalidParameter,
                          where + "only one parameter may be swept per config (already sweeping " + swept->op + "." +
                              swept->sweep_param + ")");
            swept = &s;
        }
        if (s.kind == StageKind::Quant) {
            TOKCOMP_CHECK(!has_quant, Errc::InvalidParameter, where + "at most one quant stage");
            has_quant = true;
        }
    }
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    const auto text = detail::slurp(path);
    return parse_config(text, std::filesystem::absolute(path).parent_path());
}

/// Resolved config as JSON (which is also valid YAML, so the manifest can be
/// fed back to parse_config). Worker count and output directory are left
/// out: neither affects results.
inline nlohmann::ordered_json manifest_json(const PipelineConfig& cfg) {
    using J = nlohmann::ordered_json;
    auto value = [](const ParamValue& v) -> J { return std::visit([](const auto& x) { return J(x); }, v); };
    J m;
    m["seed"] = cfg.seed;
    J inputs = J::array();
    for (const auto& in : cfg.inputs) {
        if (in.dump) {
            inputs.push_back({{"dump", in.dump->string()}});
        } else {
            const auto& s = *in.synthetic;
            inputs.push_back({{"synthetic",
                               {{"frames", s.frames},
                                {"rows", s.rows},
                                {"cols", s.cols},
                                {"dim", s.dim},
                                {"text", s.text},
                                {"cls", s.cls},
                                {"drift", s.drift},
                                {"cut_prob", s.cut_prob}}}});
        }
    }
    m["inputs"] = inputs;
    J stages = J::array();
    for (const auto& s : cfg.stages) {
        J st;
        st[stage_kind_name(s.kind)] = s.op;
        for (const auto& [k, v] : s.params) {
            if (k == s.sweep_param) {
                J list = J::array();
                for (const auto& sv : s.sweep_values) list.push_back(value(sv));
                st[k] = list;
            } else {
                st[k] = value(v);
            }
        }
        stages.push_back(st);
    }
    m["stages"] = stages;
    return m;
}

// ---------------------------------------------------------------------------
// Execution

struct StageRecord {
    std::size_t stage = 0;
    std::string op;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    OpCounters counters;
};

struct SampleOutcome {
    RateReport rates;
    bool budget_clamped = false;
    std::optional<CostEstimate> cost;
    std::vector<StageRecord> stages;
    double wall_ms = 0.0;
};

struct QuantOutcome {
    std::string op;
    QuantSpec spec;
    std::size_t rows = 0;
    std::size_t cols = 0;
    QuantErrorReport error;
    /// Round-to-nearest output MSE with the same spec, for reference.
    double rtn_output_mse = 0.0;
    /// Relative Frobenius error of the simulated W8A8 product (smoothquant only).
    std::optional<double> w8a8_rel_error;
};

struct RunReport {
    ReportTable rates;
    ReportTable counters;
    ReportTable curves;
    std::optional<ReportTable> quant;
    std::optional<ReportTable> aggregate;
    std::optional<ReportTable> conditional;
    std::string manifest;
    /// Wall-clock measurements; not covered by determinism guarantees.
    nlohmann::ordered_json timings;
};

namespace detail {

struct LoadedInput {
    TokenSet tokens;
    std::optional<AttentionBundle> bundle;
};

inline oracle::Rng input_rng(std::uint64_t seed, std::size_t index, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), stream};
    return oracle::Rng(seq);
}

inline LoadedInput load_input(const InputConfig& in, std::uint64_t seed, std::size_t index) {
    if (in.dump) {
        auto c = read_dump(*in.dump);
        return {std::move(c.tokens), std::move(c.bundle)};
    }
    const auto& s = *in.synthetic;
    auto rng = input_rng(seed, index, 0);
    const GridShape grid{s.frames, s.rows, s.cols};
    LoadedInput out{oracle::random_video(rng, grid, s.dim, s.drift, s.cut_prob), std::nullopt};
    if (s.cls || s.text > 0) {
        AttentionBundle b;
        if (s.cls) b.cls_to_patch = oracle::random_attention_row(rng, grid.total());
        if (s.text > 0) {
            TextAttention t{s.text, grid.total(), {}};
            for (std::size_t r = 0; r < s.text; ++r) {
                auto row = oracle::random_attention_row(rng, grid.total());
                t.data.insert(t.data.end(), row.begin(), row.end());
            }
            b.text_to_visual = std::move(t);
        }
        out.bundle = std::move(b);
    }
    return out;
}

/// Attention scores of the original grid restricted to the surviving ids.
inline ScoreVector scores_for(const ScoreVector& full, const TokenSet& tokens) {
    ScoreVector out;
    out.source = full.source;
    for (auto id : tokens.token_ids()) out.scores.push_back(full.scores[id]);
    return out;
}

inline ScoreVector compute_scores(const std::string& which, const std::string& reduce, const TokenSet& tokens,
                                  const std::optional<AttentionBundle>& bundle, OpCounters* counters) {
    if (which == "redundancy") return redundancy_scores(cosine_sim(tokens, counters));
    if (which == "cls") {
        TOKCOMP_CHECK(bundle.has_value(), Errc::MissingClsAttention, "input has no attention bundle");
        return scores_for(cls_scores(*bundle), tokens);
    }
    TOKCOMP_CHECK(bundle.has_value(), Errc::MissingTextAttention, "input has no attention bundle");
    return scores_for(text_scores(*bundle, reduce == "last_row" ? TextReduce::LastRow : TextReduce::Mean), tokens);
}

inline Budget budget_of(const StageConfig& s) {
    return s.has("k") ? Budget::tokens(static_cast<std::size_t>(s.get_int("k"))) : Budget::ratio(s.get_real("ratio"));
}

inline QuantSpec quant_spec_of(const StageConfig& s) {
    QuantSpec q;
    q.bits = static_cast<int>(s.get_int("bits"));
    const auto& g = s.get_string("granularity");
    q.granularity = g == "per-tensor" ? Granularity::PerTensor : g == "group" ? Granularity::Group : Granularity::PerChannel;
    if (s.has("group_size")) q.group_size = static_cast<std::size_t>(s.get_int("group_size"));
    q.symmetric = s.get_bool("symmetric");
    return q;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline SampleOutcome run_sample(const std::vector<StageConfig>& stages, const LoadedInput& input,
                                const std::optional<QuantSpec>& quant) {
    const auto t_start = std::chrono::steady_clock::now();
    SampleOutcome out;
    TokenSet current = input.tokens;
    const std::size_t original = current.size();
    ReductionPlan total = ReductionPlan::identity(original);
    std::optional<ScoreVector> scores;
    double merge_rate = 0.0;
    double segment_ms = 0.0;

    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& st = stages[i];
        StageRecord rec{i, st.op, current.size(), current.size(), {}};
        auto* ctr = &rec.counters;
        try {
            auto scores_or_default = [&]() -> ScoreVector {
                if (st.has("score")) return compute_scores(st.get_string("score"), "mean", current, input.bundle, ctr);
                if (scores) return *scores;
                return compute_scores("cls", "mean", current, input.bundle, ctr);
            };
            std::optional<ReductionPlan> plan;
            switch (st.kind) {
                case StageKind::Metrics:
                    scores = compute_scores(st.op, st.has("reduce") ? st.get_string("reduce") : "mean", current,
                                            input.bundle, ctr);
                    break;
                case StageKind::Spatial: {
                    if (st.op == "prune_topk") {
                        plan = prune_then_merge(current, prune_topk(scores_or_default(), budget_of(st)),
                                                st.get_bool("merge_dropped"), ctr);
                    } else if (st.op == "divprune") {
                        const auto metric = st.get_string("distance") == "euclidean" ? DiversityDistance::Euclidean
                                                                                      : DiversityDistance::Cosine;
                        plan = prune_then_merge(current, divprune_select(current, budget_of(st), metric, ctr),
                                                st.get_bool("merge_dropped"), ctr);
                    } else if (st.op == "tome") {
                        plan = tome_merge(current, static_cast<std::size_t>(st.get_int("r")),
                                          static_cast<std::size_t>(st.get_int("steps")), ctr);
                    } else if (st.op == "window_merge") {
                        plan = window_merge(current, static_cast<std::size_t>(st.get_int("window_h")),
                                            static_cast<std::size_t>(st.get_int("window_w")), st.get_real("threshold"),
                                            ctr);
                    } else if (st.op == "dominant_contextual") {
                        plan = dominant_contextual(current, scores_or_default(),
                                                   static_cast<std::size_t>(st.get_int("k_dominant")),
                                                   static_cast<std::size_t>(st.get_int("k_contextual")), ctr);
                    } else if (st.op == "vispruner") {
                        plan = vispruner_select(current, scores_or_default(),
                                                static_cast<std::size_t>(st.get_int("k_important")),
                                                static_cast<std::size_t>(st.get_int("k_diverse")), ctr);
                    }
                    break;
                }
                case StageKind::Temporal: {
                    const auto t0 = std::chrono::steady_clock::now();
                    const auto& seg = st.get_string("segment");
                    const std::size_t F = current.grid().frames;
                    const auto partition =
                        seg == "fixed" ? segment_fixed(F, static_cast<std::size_t>(st.get_int("length")))
                        : seg == "threshold"
                            ? segment_threshold(frame_similarity(current, ctr), st.get_real("tau"))
                            : segment_dp(frame_similarity(current, ctr),
                                         std::min<std::size_t>(static_cast<std::size_t>(st.get_int("max_segments")), F),
                                         ctr);
                    segment_ms += elapsed_ms(t0);
                    merge_rate = st.get_real("merge_rate");
                    plan = temporal_reduce(current, partition, merge_rate,
                                           st.op == "temporal_merge" ? TemporalMode::Merge : TemporalMode::Prune, ctr);
                    break;
                }
                case StageKind::Quant:
                    break;
                case StageKind::Eval:
                    if (st.op == "cost") {
                        CostModel m;
                        m.hidden = static_cast<std::size_t>(st.get_int("hidden"));
                        m.layers = static_cast<std::size_t>(st.get_int("layers"));
                        m.attn_coeff = st.get_real("attn_coeff");
                        m.mlp_coeff = st.get_real("mlp_coeff");
                        m.parameters = st.get_real("parameters");
                        m.kv_bytes_per_element = st.get_real("kv_bytes_per_element");
                        std::optional<QuantSpec> q = quant;
                        if (st.has("bits")) {
                            q = QuantSpec{};
                            q->bits = static_cast<int>(st.get_int("bits"));
                        }
                        out.cost = cost_estimate(m, current.size(), q ? &*q : nullptr);
                    }
                    break;
            }
            if (plan) {
                out.budget_clamped = out.budget_clamped || plan->budget_clamped;
                if (scores) scores = select_scores(*scores, *plan);
                current = apply_plan(current, *plan);
                total = compose_plans(total, *plan);
                rec.tokens_out = current.size();
            }
        } catch (const Error& e) {
            throw Error(e.code(), "stage " + std::to_string(i) + " (" + st.op + "): " + e.message());
        }
        out.stages.push_back(std::move(rec));
    }
    StageTimings timings{segment_ms, out.cost ? out.cost->prefill_flops : 0.0};
    out.rates = rate_report(total, original, merge_rate, timings);
    out.wall_ms = elapsed_ms(t_start);
    return out;
}

inline Matrix load_or_synthesize(const StageConfig& st, const char* key, std::size_t rows, std::size_t cols,
                                 oracle::Rng& rng, bool outliers) {
    if (st.has(key)) {
        auto m = to_matrix(read_matrix(st.get_string(key)));
        return m;
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = oracle::gaussian(rng);
    if (outliers && cols > 0) {
        // A few activation channels an order of magnitude larger.
        for (Eigen::Index c = 0; c < m.cols(); c += std::max<Eigen::Index>(1, m.cols() / 4)) m.col(c) *= 20.0;
    }
    return m;
}

inline QuantOutcome run_quant(const StageConfig& st, std::uint64_t seed) {
    auto rng = input_rng(seed, 0, 1);
    const auto spec = quant_spec_of(st);
    Matrix w = load_or_synthesize(st, "weights", static_cast<std::size_t>(st.get_int("rows")),
                                  static_cast<std::size_t>(st.get_int("cols")), rng, false);
    Matrix x = load_or_synthesize(st, "calib", static_cast<std::size_t>(st.get_int("calib_rows")),
                                  static_cast<std::size_t>(w.cols()), rng, st.op == "smoothquant");
    TOKCOMP_CHECK(x.cols() == w.cols(), Errc::ShapeMismatch,
                  "calibration data has " + std::to_string(x.cols()) + " columns, weights have " +
                      std::to_string(w.cols()));

    QuantOutcome out{st.op, spec, static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()), {}, 0.0,
                     std::nullopt};
    const Matrix rtn_hat = quantize_rtn(w, spec).dequantize();
    out.rtn_output_mse = quant_eval(w, rtn_hat, x).output_mse;
    if (st.op == "rtn") {
        out.error = quant_eval(w, rtn_hat, x);
    } else if (st.op == "gptq") {
        out.error = quant_eval(w, gptq_quantize(w, x, spec).dequantize(), x);
    } else {
        const double alpha = st.get_real("alpha");
        const Vector s = smooth_scales(column_absmax(x), w, alpha);
        const auto [xs, ws] = apply_smoothing(x, w, s);
        auto q = quantize_rtn(ws, spec);
        const Matrix w_hat = q.dequantize() * s.cwiseInverse().asDiagonal();
        out.error = quant_eval(w, w_hat, x);
        const Matrix ref = x * w.transpose();
        out.w8a8_rel_error = (simulated_w8a8_matmul(x, w, alpha) - ref).norm() / ref.norm();
    }
    return out;
}

inline Cell sweep_cell(const PipelineConfig& cfg, std::size_t v) {
    const auto* s = cfg.sweep_stage();
    if (s == nullptr) return std::monostate{};
    return std::visit(
        [](const auto& x) -> Cell {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>) return std::int64_t{x ? 1 : 0};
            else return x;
        },
        s->sweep_values[v]);
}

}  // namespace detail

/// Executes a parsed config. Inputs are processed in parallel across
/// `workers` threads; results are reduced in input order so every table is
/// independent of the worker count.
inline RunReport run_pipeline(const PipelineConfig& cfg, std::size_t workers = 1) {
    using Clock = std::chrono::steady_clock;
    const auto t_run = Clock::now();
    const std::size_t V = cfg.variant_count();
    const std::size_t N = cfg.inputs.size();
    std::vector<std::vector<StageConfig>> variants;
    for (std::size_t v = 0; v < V; ++v) variants.push_back(cfg.variant_stages(v));

    std::vector<std::optional<QuantOutcome>> quant(V);
    const auto t_quant = Clock::now();
    for (std::size_t v = 0; v < V; ++v)
        for (std::size_t i = 0; i < variants[v].size(); ++i) {
            const auto& st = variants[v][i];
            if (st.kind != StageKind::Quant) continue;
            try {
                quant[v] = detail::run_quant(st, cfg.seed);
            } catch (const Error& e) {
                throw Error(e.code(), "stage " + std::to_string(i) + " (" + st.op + "): " + e.message());
            }
        }
    const double quant_ms = detail::elapsed_ms(t_quant);

    // results[sample][variant]
    std::vector<std::vector<SampleOutcome>> results(N, std::vector<SampleOutcome>(V));
    std::vector<std::exception_ptr> errors(N);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t n = next++; n < N; n = next++) {
            try {
                const auto input = detail::load_input(cfg.inputs[n], cfg.seed, n);
                for (std::size_t v = 0; v < V; ++v) {
                    std::optional<QuantSpec> qs;
                    if (quant[v]) qs = quant[v]->spec;
                    results[n][v] = detail::run_sample(variants[v], input, qs);
                }
            } catch (const Error& e) {
                errors[n] = std::make_exception_ptr(
                    Error(e.code(), "input " + std::to_string(n) + " (" + cfg.inputs[n].label(n) + "): " + e.message()));
            } catch (...) {
                errors[n] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(workers, N));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    RunReport rep;
    const auto* sweep = cfg.sweep_stage();
    const std::string sweep_name = sweep ? sweep->op + "." + sweep->sweep_param : "";
    rep.rates.columns = {"variant",         "sweep_value",     "sample",         "input",         "original_tokens",
                         "retained_tokens", "retention_rate",  "merge_rate",     "budget_clamped", "prefill_flops",
                         "weight_bytes",    "kv_bytes"};
    rep.counters.columns = {"variant", "sample", "stage", "op", "tokens_in", "tokens_out", "similarity_evals", "dp_cells"};
    rep.curves.columns = {"variant",         "sweep",          "sweep_value",       "samples",
                          "original_tokens", "retained_tokens", "retention_rate",   "merge_rate",
                          "mean_prefill_flops", "similarity_evals", "dp_cells"};
    auto i64 = [](auto x) { return static_cast<std::int64_t>(x); };
    auto opt_cell = [](const std::optional<CostEstimate>& c, double CostEstimate::*field) -> Cell {
        if (!c) return std::monostate{};
        return (*c).*field;
    };

    for (std::size_t v = 0; v < V; ++v) {
        std::size_t orig = 0, kept = 0;
        double flops = 0.0;
        bool any_cost = false;
        OpCounters totals;
        double mr = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const auto& r = results[n][v];
            rep.rates.add_row({i64(v), detail::sweep_cell(cfg, v), i64(n), cfg.inputs[n].label(n),
                               i64(r.rates.original_tokens), i64(r.rates.retained_tokens), r.rates.retention_rate(),
                               r.rates.merge_rate, i64(r.budget_clamped ? 1 : 0),
                               opt_cell(r.cost, &CostEstimate::prefill_flops),
                               opt_cell(r.cost, &CostEstimate::weight_bytes), opt_cell(r.cost, &CostEstimate::kv_bytes)});
            for (const auto& s : r.stages) {
                rep.counters.add_row({i64(v), i64(n), i64(s.stage), s.op, i64(s.tokens_in), i64(s.tokens_out),
                                      i64(s.counters.similarity_evals), i64(s.counters.dp_cells)});
                totals += s.counters;
            }
            orig += r.rates.original_tokens;
            kept += r.rates.retained_tokens;
            mr = r.rates.merge_rate;
            if (r.cost) {
                any_cost = true;
                flops += r.cost->prefill_flops;
            }
        }
        rep.curves.add_row({i64(v), sweep_name, detail::sweep_cell(cfg, v), i64(N), i64(orig), i64(kept),
                            static_cast<double>(kept) / static_cast<double>(orig), mr,
                            any_cost ? Cell{flops / static_cast<double>(N)} : Cell{}, i64(totals.similarity_evals),
                            i64(totals.dp_cells)});
    }

    if (std::any_of(quant.begin(), quant.end(), [](const auto& q) { return q.has_value(); })) {
        ReportTable t{{"variant", "sweep_value", "op", "bits", "granularity", "symmetric", "rows", "cols",
                       "max_abs_error", "mean_abs_error", "output_mse", "rtn_output_mse", "w8a8_rel_error"},
                      {}};
        for (std::size_t v = 0; v < V; ++v) {
            if (!quant[v]) continue;
            const auto& q = *quant[v];
            t.add_row({i64(v), detail::sweep_cell(cfg, v), q.op, i64(q.spec.bits),
                       std::string(granularity_name(q.spec.granularity)), i64(q.spec.symmetric ? 1 : 0), i64(q.rows),
                       i64(q.cols), q.error.max_abs_error, q.error.mean_abs_error, q.error.output_mse, q.rtn_output_mse,
                       q.w8a8_rel_error ? Cell{*q.w8a8_rel_error} : Cell{}});
        }
        rep.quant = std::move(t);
    }

    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& st = cfg.stages[i];
        if (st.kind != StageKind::Eval) continue;
        try {
            if (st.op == "aggregate") rep.aggregate = aggregate_table(read_bench_scores(st.get_string("scores")));
            if (st.op == "conditional") rep.conditional = conditional_table(read_multiturn(st.get_string("records")));
        } catch (const Error& e) {
            throw Error(e.code(), "stage " + std::to_string(i) + " (" + st.op + "): " + e.message());
        }
    }

    rep.manifest = manifest_json(cfg).dump(2) + "\n";

    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t v = 0; v < V; ++v)
            samples.push_back({{"variant", v},
                               {"sample", n},
                               {"wall_ms", results[n][v].wall_ms},
                               {"segment_time_ms", results[n][v].rates.segment_time_ms}});
    rep.timings = {{"workers", threads}, {"quant_ms", quant_ms}, {"samples", samples},
                   {"total_ms", detail::elapsed_ms(t_run)}};
    return rep;
}

/// Files written by write_run that are covered by the determinism guarantee.
inline std::vector<std::string> deterministic_outputs(const RunReport& rep) {
    std::vector<std::string> files{"manifest.json", "rates.csv", "curves.csv", "counters.csv"};
    if (rep.quant) files.push_back("quant.csv");
    if (rep.aggregate) files.push_back("aggregate.csv");
    if (rep.conditional) files.push_back("conditional.csv");
    return files;
}

inline void write_run(const RunReport& rep, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    TOKCOMP_CHECK(!ec, Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
    auto text = [&](const std::filesystem::path& p, const std::string& s) {
        const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
        detail::write_file(dir / p, bytes);
    };
    text("manifest.json", rep.manifest);
    emit_report(rep.rates, dir / "rates.csv", ReportFormat::Csv);
    emit_report(rep.curves, dir / "curves.csv", ReportFormat::Csv);
    emit_report(rep.counters, dir / "counters.csv", ReportFormat::Csv);
    if (rep.quant) emit_report(*rep.quant, dir / "quant.csv", ReportFormat::Csv);
    if (rep.aggregate) emit_report(*rep.aggregate, dir / "aggregate.csv", ReportFormat::Csv);
    if (rep.conditional) emit_report(*rep.conditional, dir / "conditional.csv", ReportFormat::Csv);
    text("timings.json", rep.timings.dump(2) + "\n");
}

}  // namespace tokcomp
