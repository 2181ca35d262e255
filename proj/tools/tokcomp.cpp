// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

// tokcomp: run compression pipelines, inspect dumps, run oracle suites and
// render result tables.
//
// Exit codes: 0 success, 1 oracle failure, 2 config error, 3 data error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include "tokcomp/dump.hpp"
#include "tokcomp/error.hpp"
#include "tokcomp/eval.hpp"
#include "tokcomp/metrics.hpp"
#include "tokcomp/pipeline.hpp"
#include "tokcomp/suites.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOracleFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

int cmd_run(const std::string& config_path, std::optional<std::size_t> workers, std::optional<std::uint64_t> seed,
            std::optional<std::string> out) {
    // An unreadable config is a config problem, not a data problem.
    if (!std::filesystem::is_regular_file(config_path))
        throw tokcomp::Error(tokcomp::Errc::InvalidParameter, "cannot read config " + config_path);
    auto cfg = tokcomp::load_config(config_path);
    if (seed) cfg.seed = *seed;
    const std::size_t w = workers.value_or(cfg.workers);
    std::filesystem::path dir = out ? std::filesystem::path(*out) : cfg.output.value_or("tokcomp-out");
    const auto report = tokcomp::run_pipeline(cfg, w);
    tokcomp::write_run(report, dir);
    std::printf("%zu variant(s) x %zu input(s) -> %s\n", cfg.variant_count(), cfg.inputs.size(), dir.c_str());
    for (const auto& f : tokcomp::deterministic_outputs(report)) std::printf("  %s\n", f.c_str());
    std::printf("  timings.json\n");
    return kExitOk;
}

void print_stats(const char* label, std::span<const float> v) {
    if (v.empty()) return;
    double lo = v[0], hi = v[0], sum = 0.0;
    for (float x : v) {
        lo = std::min<double>(lo, x);
        hi = std::max<double>(hi, x);
        sum += x;
    }
    std::printf("%-14s min %.6g  max %.6g  mean %.6g\n", label, lo, hi, sum / static_cast<double>(v.size()));
}

int cmd_inspect(const std::string& path) {
    namespace d = tokcomp::detail;
    const auto bytes = d::read_file(path);
    const auto h = tokcomp::parse_dump_header(bytes);
    std::printf("file           %s (%zu bytes)\n", path.c_str(), bytes.size());
    std::printf("version        %u\n", h.version);
    std::printf("flags          0x%02x%s%s%s\n", h.flags, (h.flags & tokcomp::kFlagCls) ? " cls" : "",
                (h.flags & tokcomp::kFlagText) ? " text" : "", (h.flags & tokcomp::kFlagWeight) ? " weight" : "");
    if (h.flags & tokcomp::kFlagWeight) {
        const auto m = tokcomp::read_matrix(path);
        std::printf("shape          %zu x %zu weight matrix\n", m.rows, m.cols);
        std::printf("checksum       ok\n");
        print_stats("values", m.data);
        return kExitOk;
    }
    const auto c = tokcomp::decode_token_dump(bytes);
    const auto& g = c.tokens.grid();
    std::printf("grid           %zu frame(s) x %zu x %zu = %zu tokens, dim %zu\n", g.frames, g.rows, g.cols,
                c.tokens.size(), c.tokens.dim());
    std::printf("checksum       ok\n");
    print_stats("embeddings", c.tokens.data());
    if (c.bundle && c.bundle->cls_to_patch) print_stats("cls attention", *c.bundle->cls_to_patch);
    if (c.bundle && c.bundle->text_to_visual) {
        std::printf("text rows      %zu\n", c.bundle->text_to_visual->n_text);
        print_stats("text attention", c.bundle->text_to_visual->data);
    }
    if (g.frames >= 2) {
        const auto series = tokcomp::frame_similarity(c.tokens);
        std::printf("frame sim     ");
        for (double s : series.values) std::printf(" %.4f", s);
        std::printf("\n");
    }
    return kExitOk;
}

int cmd_oracle(const std::string& suite, std::uint64_t seed) {
    bool found = false, ok = true;
    for (const auto& s : tokcomp::suites::all_suites()) {
        if (suite != "all" && suite != s.name) continue;
        found = true;
        const auto r = s.run(seed);
        std::printf("%s %-12s %zu instances, %zu failure(s), %.3fs", r.passed() ? "PASS" : "FAIL", r.name.c_str(),
                    r.instances, r.failures, r.seconds);
        if (!r.stats.empty()) std::printf("; %s", r.stats.c_str());
        std::printf("\n");
        if (!r.passed()) std::printf("     first failure: %s\n", r.first_failure.c_str());
        ok = ok && r.passed();
    }
    if (!found) {
        std::string names = "all";
        for (const auto& s : tokcomp::suites::all_suites()) names += std::string(", ") + s.name;
        throw tokcomp::Error(tokcomp::Errc::InvalidParameter,
                             "unknown suite '" + suite + "' (choose from " + names + ")");
    }
    return ok ? kExitOk : kExitOracleFailed;
}

int cmd_report(const std::string& path, const std::string& format, std::optional<std::string> out) {
    const auto rows = tokcomp::parse_csv(tokcomp::detail::slurp(path));
    TOKCOMP_CHECK(!rows.empty(), tokcomp::Errc::EmptyInput, path + " is empty");
    const auto kind = tokcomp::detect_results_kind(rows[0]);
    TOKCOMP_CHECK(kind.has_value(), tokcomp::Errc::InvalidArgument,
                  path + ": header matches neither benchmark,method,score,upper_bound nor "
                         "image_id,order,q1_correct,q2_correct");
    const auto table = *kind == tokcomp::ResultsKind::BenchScores
                           ? tokcomp::aggregate_table(tokcomp::parse_bench_scores(rows))
                           : tokcomp::conditional_table(tokcomp::parse_multiturn(rows));
    const auto fmt = format == "json" ? tokcomp::ReportFormat::Json : tokcomp::ReportFormat::Csv;
    if (out) {
        tokcomp::emit_report(table, *out, fmt);
    } else {
        std::fputs(tokcomp::render_report(table, fmt).c_str(), stdout);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Token compression pipelines for vision-language models"};
    app.require_subcommand(1);

    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run a pipeline config");
    run->add_option("config", config_path, "YAML pipeline config")->required();
    run->add_option("--workers", workers, "Worker threads across inputs (default: config value)")
        ->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--out", out, "Output directory (default: config output, else ./tokcomp-out)");

    std::string dump_path;
    auto* inspect = app.add_subcommand("inspect", "Validate and summarize a dump file");
    inspect->add_option("dump", dump_path, "TOKD dump or weight blob")->required();

    std::string suite;
    std::uint64_t oracle_seed = 20260101;
    auto* oracle = app.add_subcommand("oracle", "Check operators against brute-force oracles");
    oracle->add_option("suite", suite, "divprune, segment_dp, tome, retention, composition or all")->required();
    oracle->add_option("--seed", oracle_seed, "Instance generator seed");

    std::string results_path, format = "csv";
    auto* report = app.add_subcommand("report", "Aggregate a results CSV");
    report->add_option("results", results_path, "Benchmark scores or multi-turn records CSV")->required();
    report->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    report->add_option("--out", out, "Write to this file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(config_path, workers, seed, out);
        if (*inspect) return cmd_inspect(dump_path);
        if (*oracle) return cmd_oracle(suite, oracle_seed);
        if (*report) return cmd_report(results_path, format, out);
    } catch (const tokcomp::Error& e) {
        std::fprintf(stderr, "tokcomp: %s\n", e.what());
        return tokcomp::is_config_error(e.code()) ? kExitConfig : kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "tokcomp: %s\n", e.what());
        return kExitData;
    }
    return kExitOk;
}
