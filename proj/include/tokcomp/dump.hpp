// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary token dump ("TOKD") and weight matrix files.
//
// Layout, all integers little-endian:
//   "TOKD" | u32 version | u32 dim | u32 frames | u32 grid_h | u32 grid_w |
//   u32 n_text | u8 flags | payload | u32 crc32(payload)
// flags: bit0 cls vector present, bit1 text attention present, bit2 weight blob.
// Payload is binary32: tokens (n_tokens x dim), then the cls vector
// (n_tokens), then text attention (n_text x n_tokens).
//
// A weight blob reuses the header with frames = 1, grid_h = rows,
// grid_w = 1, dim = cols, and carries the row-major matrix as payload.

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokcomp/core.hpp"
#include "tokcomp/error.hpp"

namespace tokcomp {

inline constexpr std::array<char, 4> kDumpMagic{'T', 'O', 'K', 'D'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 4 + 6 * 4 + 1;

enum DumpFlags : std::uint8_t {
    kFlagCls = 1u << 0,
    kFlagText = 1u << 1,
    kFlagWeight = 1u << 2,
};

struct DumpHeader {
    std::uint32_t version = kDumpVersion;
    std::uint32_t dim = 0;
    std::uint32_t frames = 0;
    std::uint32_t grid_h = 0;
    std::uint32_t grid_w = 0;
    std::uint32_t n_text = 0;
    std::uint8_t flags = 0;

    std::uint64_t n_tokens() const noexcept {
        return std::uint64_t{frames} * grid_h * grid_w;
    }
    std::uint64_t payload_floats() const noexcept {
        std::uint64_t n = n_tokens() * dim;
        if (flags & kFlagCls) n += n_tokens();
        if (flags & kFlagText) n += std::uint64_t{n_text} * n_tokens();
        return n;
    }
};

/// Dense row-major binary32 matrix, the on-disk weight representation.
struct FloatMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    float at(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
    friend bool operator==(const FloatMatrix&, const FloatMatrix&) = default;
};

struct DumpContents {
    TokenSet tokens;
    std::optional<AttentionBundle> bundle;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) noexcept {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
           std::uint32_t{p[3]} << 24;
}

inline std::uint64_t get_u64(const std::uint8_t* p) noexcept {
    return std::uint64_t{get_u32(p)} | std::uint64_t{get_u32(p + 4)} << 32;
}

inline float get_f32(const std::uint8_t* p) noexcept { return std::bit_cast<float>(get_u32(p)); }

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) noexcept {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for large payloads.
    constexpr std::size_t kChunk = 1u << 30;
    for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
        const auto len = static_cast<uInt>(std::min(kChunk, bytes.size() - off));
        crc = ::crc32(crc, bytes.data() + off, len);
    }
    return static_cast<std::uint32_t>(crc);
}

inline void check_finite(std::span<const float> v, const char* what) {
    for (float x : v)
        TOKCOMP_CHECK(std::isfinite(x), Errc::NonFiniteValue, std::string(what) + " contains a non-finite value");
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    TOKCOMP_CHECK(in.good(), Errc::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    TOKCOMP_CHECK(out.good(), Errc::IoError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    TOKCOMP_CHECK(out.good(), Errc::IoError, "short write to " + path.string());
}

inline std::vector<std::uint8_t> encode(const DumpHeader& h, std::span<const float> payload) {
    std::vector<std::uint8_t> out;
    out.reserve(kDumpHeaderBytes + payload.size() * 4 + 4);
    out.insert(out.end(), kDumpMagic.begin(), kDumpMagic.end());
    put_u32(out, h.version);
    put_u32(out, h.dim);
    put_u32(out, h.frames);
    put_u32(out, h.grid_h);
    put_u32(out, h.grid_w);
    put_u32(out, h.n_text);
    out.push_back(h.flags);
    for (float v : payload) put_f32(out, v);
    const auto crc = crc32_of(std::span(out).subspan(kDumpHeaderBytes));
    put_u32(out, crc);
    return out;
}

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
    TOKCOMP_CHECK(v <= 0xFFFFFFFFu, Errc::InvalidArgument, std::string(what) + " does not fit in u32");
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

/// Parses only the fixed header; no payload or checksum validation.
inline DumpHeader parse_dump_header(std::span<const std::uint8_t> bytes) {
    TOKCOMP_CHECK(bytes.size() >= 4, Errc::Truncated, "file shorter than magic");
    TOKCOMP_CHECK(std::memcmp(bytes.data(), kDumpMagic.data(), 4) == 0, Errc::BadMagic,
                  "expected magic TOKD");
    TOKCOMP_CHECK(bytes.size() >= kDumpHeaderBytes, Errc::Truncated, "file shorter than header");
    DumpHeader h;
    const std::uint8_t* p = bytes.data() + 4;
    h.version = detail::get_u32(p);
    TOKCOMP_CHECK(h.version == kDumpVersion, Errc::VersionMismatch,
                  "version " + std::to_string(h.version) + ", expected " + std::to_string(kDumpVersion));
    h.dim = detail::get_u32(p + 4);
    h.frames = detail::get_u32(p + 8);
    h.grid_h = detail::get_u32(p + 12);
    h.grid_w = detail::get_u32(p + 16);
    h.n_text = detail::get_u32(p + 20);
    h.flags = p[24];
    return h;
}

/// Decodes and validates a complete dump image held in memory.
inline std::pair<DumpHeader, std::vector<float>> decode_dump(std::span<const std::uint8_t> bytes) {
    DumpHeader h = parse_dump_header(bytes);
    TOKCOMP_CHECK(h.dim >= 1 && h.n_tokens() >= 1, Errc::InvalidArgument, "dump has zero-sized shape");
    TOKCOMP_CHECK((h.flags & ~(kFlagCls | kFlagText | kFlagWeight)) == 0, Errc::InvalidArgument,
                  "unknown flag bits set");
    const std::uint64_t n_floats = h.payload_floats();
    const std::uint64_t expected = kDumpHeaderBytes + n_floats * 4 + 4;
    TOKCOMP_CHECK(bytes.size() >= expected, Errc::Truncated,
                  "expected " + std::to_string(expected) + " bytes, have " + std::to_string(bytes.size()));
    TOKCOMP_CHECK(bytes.size() == expected, Errc::InvalidArgument, "trailing bytes after checksum");

    auto payload = bytes.subspan(kDumpHeaderBytes, n_floats * 4);
    const std::uint32_t stored = detail::get_u32(bytes.data() + kDumpHeaderBytes + n_floats * 4);
    TOKCOMP_CHECK(detail::crc32_of(payload) == stored, Errc::ChecksumMismatch, "payload CRC32 mismatch");

    std::vector<float> values(n_floats);
    for (std::size_t i = 0; i < n_floats; ++i) values[i] = detail::get_f32(payload.data() + 4 * i);
    detail::check_finite(values, "payload");
    return {h, std::move(values)};
}

inline std::vector<std::uint8_t> encode_dump(const TokenSet& tokens, const AttentionBundle* bundle = nullptr) {
    TOKCOMP_CHECK(tokens.full_grid(), Errc::NoGrid, "only full-grid token sets can be dumped");
    detail::check_finite(tokens.data(), "tokens");
    if (bundle != nullptr) bundle->validate(tokens.size());

    DumpHeader h;
    h.dim = detail::checked_u32(tokens.dim(), "dim");
    h.frames = detail::checked_u32(tokens.grid().frames, "frames");
    h.grid_h = detail::checked_u32(tokens.grid().rows, "grid_h");
    h.grid_w = detail::checked_u32(tokens.grid().cols, "grid_w");

    std::vector<float> payload(tokens.data().begin(), tokens.data().end());
    if (bundle != nullptr && bundle->cls_to_patch) {
        h.flags |= kFlagCls;
        payload.insert(payload.end(), bundle->cls_to_patch->begin(), bundle->cls_to_patch->end());
    }
    if (bundle != nullptr && bundle->text_to_visual) {
        h.flags |= kFlagText;
        h.n_text = detail::checked_u32(bundle->text_to_visual->n_text, "n_text");
        payload.insert(payload.end(), bundle->text_to_visual->data.begin(), bundle->text_to_visual->data.end());
    }
    return detail::encode(h, payload);
}

inline DumpContents decode_token_dump(std::span<const std::uint8_t> bytes) {
    auto [h, values] = decode_dump(bytes);
    TOKCOMP_CHECK(!(h.flags & kFlagWeight), Errc::InvalidArgument, "file is a weight blob, not a token dump");
    const std::size_t n = h.n_tokens();
    const std::size_t token_floats = n * h.dim;

    DumpContents out;
    out.tokens = TokenSet(h.dim, GridShape{h.frames, h.grid_h, h.grid_w},
                          std::vector<float>(values.begin(), values.begin() + token_floats));
    std::size_t off = token_floats;
    if (h.flags & (kFlagCls | kFlagText)) {
        AttentionBundle b;
        if (h.flags & kFlagCls) {
            b.cls_to_patch.emplace(values.begin() + off, values.begin() + off + n);
            off += n;
        }
        if (h.flags & kFlagText) {
            TextAttention t;
            t.n_text = h.n_text;
            t.n_tokens = n;
            t.data.assign(values.begin() + off, values.begin() + off + h.n_text * n);
            b.text_to_visual = std::move(t);
        }
        b.validate(n);
        out.bundle = std::move(b);
    }
    return out;
}

inline void write_dump(const std::filesystem::path& path, const TokenSet& tokens,
                       const AttentionBundle* bundle = nullptr) {
    detail::write_file(path, encode_dump(tokens, bundle));
}

inline DumpContents read_dump(const std::filesystem::path& path) {
    return decode_token_dump(detail::read_file(path));
}

inline void write_weight_dump(const std::filesystem::path& path, const FloatMatrix& w) {
    TOKCOMP_CHECK(w.rows >= 1 && w.cols >= 1 && w.data.size() == w.rows * w.cols, Errc::ShapeMismatch,
                  "weight matrix shape mismatch");
    detail::check_finite(w.data, "weights");
    DumpHeader h;
    h.dim = detail::checked_u32(w.cols, "cols");
    h.frames = 1;
    h.grid_h = detail::checked_u32(w.rows, "rows");
    h.grid_w = 1;
    h.flags = kFlagWeight;
    detail::write_file(path, detail::encode(h, w.data));
}

inline constexpr std::size_t kMatrixHeaderBytes = 16;

/// Plain matrix file: u64 rows | u64 cols | rows*cols binary32, no checksum.
inline void write_matrix_file(const std::filesystem::path& path, const FloatMatrix& m) {
    TOKCOMP_CHECK(m.data.size() == m.rows * m.cols, Errc::ShapeMismatch, "matrix shape mismatch");
    detail::check_finite(m.data, "matrix");
    std::vector<std::uint8_t> out;
    out.reserve(kMatrixHeaderBytes + m.data.size() * 4);
    detail::put_u64(out, m.rows);
    detail::put_u64(out, m.cols);
    for (float v : m.data) detail::put_f32(out, v);
    detail::write_file(path, out);
}

/// Reads a weight matrix from either a TOKD weight blob or a plain matrix file.
inline FloatMatrix read_matrix(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    FloatMatrix m;
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kDumpMagic.data(), 4) == 0) {
        auto [h, values] = decode_dump(bytes);
        TOKCOMP_CHECK(h.flags == kFlagWeight, Errc::InvalidArgument, path.string() + " is not a weight blob");
        m.rows = h.n_tokens();
        m.cols = h.dim;
        m.data = std::move(values);
        return m;
    }
    TOKCOMP_CHECK(bytes.size() >= kMatrixHeaderBytes, Errc::Truncated, "matrix file shorter than header");
    m.rows = detail::get_u64(bytes.data());
    m.cols = detail::get_u64(bytes.data() + 8);
    TOKCOMP_CHECK(m.rows >= 1 && m.cols >= 1, Errc::InvalidArgument, "matrix has zero-sized shape");
    TOKCOMP_CHECK(m.cols <= (bytes.size() - kMatrixHeaderBytes) / 4 / m.rows &&
                      bytes.size() == kMatrixHeaderBytes + m.rows * m.cols * 4,
                  Errc::Truncated, "matrix payload size does not match header");
    m.data.resize(m.rows * m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = detail::get_f32(bytes.data() + kMatrixHeaderBytes + 4 * i);
    detail::check_finite(m.data, "matrix");
    return m;
}

}  // namespace tokcomp
