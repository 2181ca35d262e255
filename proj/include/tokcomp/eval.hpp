// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tokcomp/error.hpp"
#include "tokcomp/quant.hpp"

namespace tokcomp {

struct BenchScore {
    std::string benchmark;
    std::string method;
    double score = 0.0;
    double upper_bound = 0.0;
    /// Optional retained-token budget label; groups rows into curve points.
    std::string budget;
};

struct Aggregate {
    /// Unweighted mean of method scores.
    double acc = 0.0;
    /// acc / mean(upper bounds), in percent (ratio of averages).
    double rel_percent = 0.0;
    std::size_t count = 0;
};

inline double round_to(double v, int decimals) {
    const double f = std::pow(10.0, decimals);
    return std::round(v * f) / f;
}

inline Aggregate aggregate(std::span<const BenchScore> scores) {
    TOKCOMP_CHECK(!scores.empty(), Errc::EmptyInput, "aggregate needs at least one score");
    double sum = 0.0, ub = 0.0;
    for (const auto& s : scores) {
        TOKCOMP_CHECK(std::isfinite(s.score) && std::isfinite(s.upper_bound), Errc::NonFiniteValue,
                      "non-finite score for " + s.benchmark);
        TOKCOMP_CHECK(s.upper_bound > 0.0, Errc::InvalidArgument, "upper bound must be positive for " + s.benchmark);
        sum += s.score;
        ub += s.upper_bound;
    }
    const double n = static_cast<double>(scores.size());
    return {sum / n, 100.0 * (sum / n) / (ub / n), scores.size()};
}

struct MethodAggregate {
    std::string method;
    std::string budget;
    Aggregate result;
};

/// Aggregates per (method, budget), in order of first appearance.
inline std::vector<MethodAggregate> aggregate_by_method(std::span<const BenchScore> scores) {
    using Key = std::pair<std::string, std::string>;
    std::vector<Key> order;
    std::map<Key, std::vector<BenchScore>> groups;
    for (const auto& s : scores) {
        auto [it, inserted] = groups.try_emplace(Key{s.method, s.budget});
        if (inserted) order.push_back(it->first);
        it->second.push_back(s);
    }
    std::vector<MethodAggregate> out;
    for (const auto& k : order) out.push_back({k.first, k.second, aggregate(groups[k])});
    return out;
}

enum class TurnOrder { Original, Swapped };

inline const char* turn_order_name(TurnOrder o) noexcept { return o == TurnOrder::Original ? "original" : "swapped"; }

struct MultiTurnRecord {
    std::string image_id;
    bool q1_correct = false;
    bool q2_correct = false;
    TurnOrder order = TurnOrder::Original;
};

struct ConditionalCounts {
    std::size_t first_correct = 0;
    std::size_t both_correct = 0;
};

inline ConditionalCounts conditional_counts(std::span<const MultiTurnRecord> records) {
    ConditionalCounts c;
    for (const auto& r : records) {
        if (!r.q1_correct) continue;
        ++c.first_correct;
        if (r.q2_correct) ++c.both_correct;
    }
    return c;
}

/// P(second turn correct | first turn correct) ~= N(Q2, Q1) / N(Q1).
/// Undefined (nullopt) when no first turn was answered correctly.
inline std::optional<double> conditional_accuracy(std::span<const MultiTurnRecord> records) {
    const auto c = conditional_counts(records);
    if (c.first_correct == 0) return std::nullopt;
    return static_cast<double>(c.both_correct) / static_cast<double>(c.first_correct);
}

struct QuestionPair {
    std::string image_id;
    std::string question_a;
    std::string question_b;
};

struct DialogueTask {
    std::string image_id;
    std::string first;
    std::string second;
    TurnOrder order = TurnOrder::Original;
};

/// Two dialogues per image, (a, b) and (b, a), so every question is asked
/// once in each turn.
inline std::vector<DialogueTask> build_pairs(std::span<const QuestionPair> questions) {
    std::vector<DialogueTask> out;
    out.reserve(questions.size() * 2);
    std::set<std::string> seen;
    for (const auto& q : questions) {
        TOKCOMP_CHECK(!q.question_a.empty() && !q.question_b.empty(), Errc::InvalidArgument,
                      "empty question for image " + q.image_id);
        TOKCOMP_CHECK(q.question_a != q.question_b, Errc::DuplicateQuestions,
                      "image " + q.image_id + " has two identical questions");
        TOKCOMP_CHECK(seen.insert(q.image_id).second, Errc::InvalidArgument, "image " + q.image_id + " listed twice");
        out.push_back({q.image_id, q.question_a, q.question_b, TurnOrder::Original});
        out.push_back({q.image_id, q.question_b, q.question_a, TurnOrder::Swapped});
    }
    return out;
}

/// Analytical transformer prefill/memory model. FLOPs per layer are
/// attn_coeff * n^2 * d + mlp_coeff * n * d^2.
struct CostModel {
    std::size_t hidden = 4096;
    std::size_t layers = 32;
    /// QK^T and AV, 2 FLOPs per MAC each.
    double attn_coeff = 4.0;
    /// Q/K/V/O projections plus a 4x MLP, 2 FLOPs per MAC.
    double mlp_coeff = 24.0;
    /// 0 means 12 * layers * hidden^2.
    double parameters = 0.0;
    int baseline_bits = 16;
    double kv_bytes_per_element = 2.0;

    void validate() const {
        TOKCOMP_CHECK(hidden >= 1 && layers >= 1 && attn_coeff > 0.0 && mlp_coeff > 0.0 && parameters >= 0.0 &&
                          baseline_bits > 0 && kv_bytes_per_element > 0.0,
                      Errc::InvalidParameter, "cost model coefficients must be positive");
    }

    double parameter_count() const noexcept {
        const double d = static_cast<double>(hidden);
        return parameters > 0.0 ? parameters : 12.0 * static_cast<double>(layers) * d * d;
    }
};

struct CostEstimate {
    double prefill_flops = 0.0;
    double weight_bytes = 0.0;
    double kv_bytes = 0.0;
};

inline CostEstimate cost_estimate(const CostModel& model, std::size_t n_tokens, const QuantSpec* quant = nullptr) {
    model.validate();
    TOKCOMP_CHECK(n_tokens >= 1, Errc::InvalidArgument, "cost estimate needs at least one token");
    const double n = static_cast<double>(n_tokens);
    const double d = static_cast<double>(model.hidden);
    const double L = static_cast<double>(model.layers);
    const int bits = quant != nullptr ? quant->bits : model.baseline_bits;
    CostEstimate c;
    c.prefill_flops = L * (model.attn_coeff * n * n * d + model.mlp_coeff * n * d * d);
    c.weight_bytes = model.parameter_count() * static_cast<double>(bits) / 8.0;
    c.kv_bytes = 2.0 * L * n * d * model.kv_bytes_per_element;
    return c;
}

// ---------------------------------------------------------------------------
// Tabular reports

using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct ReportTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_row(std::vector<Cell> row) {
        TOKCOMP_CHECK(row.size() == columns.size(), Errc::ShapeMismatch, "row width does not match columns");
        rows.push_back(std::move(row));
    }
};

enum class ReportFormat { Csv, Json };

inline constexpr int kReportPrecision = 6;

namespace detail {

inline std::string format_fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", kReportPrecision, v);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string cell_text(const Cell& c) {
    struct {
        std::string operator()(std::monostate) const { return ""; }
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(double v) const { return format_fixed(v); }
        std::string operator()(const std::string& v) const { return csv_escape(v); }
    } visit;
    return std::visit(visit, c);
}

}  // namespace detail

inline std::string to_csv(const ReportTable& t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + detail::csv_escape(t.columns[i]);
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + detail::cell_text(row[i]);
        out += '\n';
    }
    return out;
}

/// {"columns": [...], "rows": [{column: value, ...}, ...]}; doubles are
/// rounded to the report precision first.
inline std::string to_json(const ReportTable& t) {
    nlohmann::ordered_json doc;
    doc["columns"] = t.columns;
    doc["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : t.rows) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            const auto& c = row[i];
            if (std::holds_alternative<std::monostate>(c))
                obj[t.columns[i]] = nullptr;
            else if (auto* iv = std::get_if<std::int64_t>(&c))
                obj[t.columns[i]] = *iv;
            else if (auto* dv = std::get_if<double>(&c))
                obj[t.columns[i]] = std::stod(detail::format_fixed(*dv));
            else
                obj[t.columns[i]] = std::get<std::string>(c);
        }
        doc["rows"].push_back(std::move(obj));
    }
    return doc.dump(2) + "\n";
}

inline std::string render_report(const ReportTable& t, ReportFormat format) {
    return format == ReportFormat::Csv ? to_csv(t) : to_json(t);
}

inline void emit_report(const ReportTable& t, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    TOKCOMP_CHECK(out.good(), Errc::IoError, "cannot open " + path.string() + " for writing");
    const auto text = render_report(t, format);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    TOKCOMP_CHECK(out.good(), Errc::IoError, "short write to " + path.string());
}

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerated.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    TOKCOMP_CHECK(!quoted, Errc::SyntaxError, "unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace detail {

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    TOKCOMP_CHECK(in.good(), Errc::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline double parse_number(const std::string& s, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    TOKCOMP_CHECK(used == s.size() && !s.empty() && std::isfinite(v), Errc::InvalidArgument,
                  "line " + std::to_string(line) + ": '" + s + "' is not a finite number");
    return v;
}

inline bool parse_bool(const std::string& s, std::size_t line) {
    if (s == "1" || s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "0" || s == "false" || s == "False" || s == "FALSE") return false;
    throw Error(Errc::InvalidArgument, "line " + std::to_string(line) + ": '" + s + "' is not a boolean");
}

/// Column positions for the requested names, or nullopt if any is missing.
inline std::optional<std::vector<std::size_t>> find_columns(const std::vector<std::string>& header,
                                                            std::initializer_list<const char*> names) {
    std::vector<std::size_t> idx;
    for (const char* n : names) {
        auto it = std::find(header.begin(), header.end(), n);
        if (it == header.end()) return std::nullopt;
        idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    return idx;
}

}  // namespace detail

enum class ResultsKind { BenchScores, MultiTurn };

inline std::optional<ResultsKind> detect_results_kind(const std::vector<std::string>& header) {
    if (detail::find_columns(header, {"benchmark", "method", "score", "upper_bound"})) return ResultsKind::BenchScores;
    if (detail::find_columns(header, {"image_id", "order", "q1_correct", "q2_correct"})) return ResultsKind::MultiTurn;
    return std::nullopt;
}

inline std::vector<BenchScore> parse_bench_scores(const std::vector<std::vector<std::string>>& rows) {
    TOKCOMP_CHECK(!rows.empty(), Errc::EmptyInput, "scores CSV has no header");
    const auto cols = detail::find_columns(rows[0], {"benchmark", "method", "score", "upper_bound"});
    TOKCOMP_CHECK(cols.has_value(), Errc::InvalidArgument,
                  "scores CSV needs columns benchmark,method,score,upper_bound");
    const auto budget_col = detail::find_columns(rows[0], {"budget"});
    std::vector<BenchScore> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        TOKCOMP_CHECK(r.size() == rows[0].size(), Errc::InvalidArgument,
                      "line " + std::to_string(i + 1) + ": wrong field count");
        out.push_back({r[(*cols)[0]], r[(*cols)[1]], detail::parse_number(r[(*cols)[2]], i + 1),
                       detail::parse_number(r[(*cols)[3]], i + 1), budget_col ? r[(*budget_col)[0]] : ""});
    }
    return out;
}

inline std::vector<MultiTurnRecord> parse_multiturn(const std::vector<std::vector<std::string>>& rows) {
    TOKCOMP_CHECK(!rows.empty(), Errc::EmptyInput, "multi-turn CSV has no header");
    const auto cols = detail::find_columns(rows[0], {"image_id", "order", "q1_correct", "q2_correct"});
    TOKCOMP_CHECK(cols.has_value(), Errc::InvalidArgument,
                  "multi-turn CSV needs columns image_id,order,q1_correct,q2_correct");
    std::vector<MultiTurnRecord> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        TOKCOMP_CHECK(r.size() == rows[0].size(), Errc::InvalidArgument,
                      "line " + std::to_string(i + 1) + ": wrong field count");
        const auto& order = r[(*cols)[1]];
        TOKCOMP_CHECK(order == "original" || order == "swapped", Errc::InvalidArgument,
                      "line " + std::to_string(i + 1) + ": order must be original or swapped");
        out.push_back({r[(*cols)[0]], detail::parse_bool(r[(*cols)[2]], i + 1),
                       detail::parse_bool(r[(*cols)[3]], i + 1),
                       order == "original" ? TurnOrder::Original : TurnOrder::Swapped});
    }
    return out;
}

inline std::vector<BenchScore> read_bench_scores(const std::filesystem::path& path) {
    return parse_bench_scores(parse_csv(detail::slurp(path)));
}

inline std::vector<MultiTurnRecord> read_multiturn(const std::filesystem::path& path) {
    return parse_multiturn(parse_csv(detail::slurp(path)));
}

inline ReportTable aggregate_table(std::span<const BenchScore> scores) {
    ReportTable t{{"method", "budget", "benchmarks", "acc", "rel_percent", "acc_1dp", "rel_1dp"}, {}};
    for (const auto& m : aggregate_by_method(scores))
        t.add_row({m.method, m.budget, static_cast<std::int64_t>(m.result.count), m.result.acc,
                   m.result.rel_percent, round_to(m.result.acc, 1), round_to(m.result.rel_percent, 1)});
    return t;
}

/// One row per order tag plus an "all" row; undefined accuracy is an empty cell.
inline ReportTable conditional_table(std::span<const MultiTurnRecord> records) {
    ReportTable t{{"subset", "records", "n_q1", "n_q1_and_q2", "conditional_accuracy"}, {}};
    auto add = [&](const std::string& name, std::span<const MultiTurnRecord> rs) {
        const auto c = conditional_counts(rs);
        const auto acc = conditional_accuracy(rs);
        t.add_row({name, static_cast<std::int64_t>(rs.size()), static_cast<std::int64_t>(c.first_correct),
                   static_cast<std::int64_t>(c.both_correct), acc ? Cell{*acc} : Cell{std::monostate{}}});
    };
    add("all", records);
    for (auto order : {TurnOrder::Original, TurnOrder::Swapped}) {
        std::vector<MultiTurnRecord> subset;
        for (const auto& r : records)
            if (r.order == order) subset.push_back(r);
        add(turn_order_name(order), subset);
    }
    return t;
}

}  // namespace tokcomp
