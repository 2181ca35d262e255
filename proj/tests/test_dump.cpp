// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "tokcomp/dump.hpp"
#include "tokcomp/oracle.hpp"

using namespace tokcomp;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "tokcomp_test_dump";
    fs::create_directories(dir);
    return dir / name;
}

template <typename F>
Errc code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::InvalidArgument;
}

}  // namespace

TEST(Dump, ZeroGridRoundTrip) {
    const TokenSet t(1, {1, 2, 2}, std::vector<float>(4, 0.0f));
    const auto p = temp_path("zeros.tokd");
    write_dump(p, t);
    const auto back = read_dump(p);
    EXPECT_EQ(back.tokens, t);
    EXPECT_FALSE(back.bundle.has_value());
}

TEST(Dump, RandomRoundTripIsBitExact) {
    oracle::Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const GridShape g{oracle::uniform_index(rng, 1, 3), oracle::uniform_index(rng, 1, 4),
                          oracle::uniform_index(rng, 1, 4)};
        const auto t = oracle::random_tokens(rng, g, oracle::uniform_index(rng, 1, 6));
        AttentionBundle b;
        if (trial % 2 == 0) b.cls_to_patch = oracle::random_attention_row(rng, t.size());
        if (trial % 3 == 0) {
            TextAttention ta{2, t.size(), {}};
            for (int r = 0; r < 2; ++r) {
                auto row = oracle::random_attention_row(rng, t.size());
                ta.data.insert(ta.data.end(), row.begin(), row.end());
            }
            b.text_to_visual = ta;
        }
        const bool has_bundle = b.cls_to_patch || b.text_to_visual;
        const auto bytes = encode_dump(t, has_bundle ? &b : nullptr);
        const auto back = decode_token_dump(bytes);
        EXPECT_EQ(back.tokens, t);
        EXPECT_EQ(back.bundle.has_value(), has_bundle);
        if (has_bundle) {
            EXPECT_EQ(*back.bundle, b);
        }
        EXPECT_EQ(encode_dump(back.tokens, back.bundle ? &*back.bundle : nullptr), bytes);
    }
}

TEST(Dump, HeaderLayoutIsLittleEndian) {
    const TokenSet t(3, {2, 1, 2}, std::vector<float>(12, 1.0f));
    const auto bytes = encode_dump(t);
    ASSERT_EQ(bytes.size(), kDumpHeaderBytes + 12 * 4 + 4);
    EXPECT_EQ(std::memcmp(bytes.data(), "TOKD", 4), 0);
    EXPECT_EQ(bytes[4], 1);  // version
    EXPECT_EQ(bytes[8], 3);  // dim
    EXPECT_EQ(bytes[12], 2);  // frames
    EXPECT_EQ(bytes[16], 1);  // grid_h
    EXPECT_EQ(bytes[20], 2);  // grid_w
    EXPECT_EQ(bytes[28], 0);  // flags
    // Trailing CRC32 covers the payload only; compare against zlib directly.
    const auto crc = static_cast<std::uint32_t>(::crc32(0L, bytes.data() + kDumpHeaderBytes, 12 * 4));
    const std::uint8_t* tail = bytes.data() + bytes.size() - 4;
    EXPECT_EQ(tail[0] | (tail[1] << 8) | (tail[2] << 16) | (static_cast<std::uint32_t>(tail[3]) << 24), crc);
}

TEST(Dump, CorruptPayloadByteIsChecksumMismatch) {
    oracle::Rng rng(2);
    auto bytes = encode_dump(oracle::random_tokens(rng, {1, 2, 2}, 4));
    bytes[kDumpHeaderBytes + 5] ^= 0x01;
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::ChecksumMismatch);
}

TEST(Dump, BadMagic) {
    auto bytes = encode_dump(TokenSet(1, {1, 1, 1}, {1.0f}));
    std::memcpy(bytes.data(), "XXXX", 4);
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::BadMagic);
}

TEST(Dump, VersionMismatch) {
    auto bytes = encode_dump(TokenSet(1, {1, 1, 1}, {1.0f}));
    bytes[4] = 2;
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::VersionMismatch);
}

TEST(Dump, TruncatedFile) {
    auto bytes = encode_dump(TokenSet(2, {1, 1, 2}, {1, 2, 3, 4}));
    bytes.resize(bytes.size() - 3);
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::Truncated);
    bytes.resize(10);
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::Truncated);
}

TEST(Dump, NonFiniteRejectedOnWrite) {
    const TokenSet t(1, {1, 1, 2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    EXPECT_EQ(code_of([&] { encode_dump(t); }), Errc::NonFiniteValue);
}

TEST(Dump, NonFiniteRejectedOnRead) {
    // Hand-build a file whose payload holds +inf with a valid checksum.
    DumpHeader h;
    h.dim = 1;
    h.frames = 1;
    h.grid_h = 1;
    h.grid_w = 1;
    const float inf = std::numeric_limits<float>::infinity();
    const auto bytes = detail::encode(h, std::span<const float>(&inf, 1));
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::NonFiniteValue);
}

TEST(Dump, UnknownFlagsRejected) {
    DumpHeader h;
    h.dim = 1;
    h.frames = 1;
    h.grid_h = 1;
    h.grid_w = 1;
    h.flags = 0x80;
    const float one = 1.0f;
    const auto bytes = detail::encode(h, std::span<const float>(&one, 1));
    EXPECT_EQ(code_of([&] { decode_token_dump(bytes); }), Errc::InvalidArgument);
}

TEST(Dump, ReducedSetCannotBeDumped) {
    const TokenSet t(1, {1, 1, 3}, {1, 2, 3});
    ReductionPlan p;
    p.n_tokens = 3;
    p.kept = {0, 2};
    EXPECT_EQ(code_of([&] { encode_dump(apply_plan(t, p)); }), Errc::NoGrid);
}

TEST(Dump, MissingFileIsIoError) {
    EXPECT_EQ(code_of([] { read_dump("/nonexistent/file.tokd"); }), Errc::IoError);
}

TEST(Matrix, WeightBlobAndPlainFormatRoundTrip) {
    FloatMatrix m{3, 2, {1, -2, 3.5f, 4, 0, -0.25f}};
    const auto blob = temp_path("w.tokd");
    const auto plain = temp_path("w.bin");
    write_weight_dump(blob, m);
    write_matrix_file(plain, m);
    EXPECT_EQ(read_matrix(blob), m);
    EXPECT_EQ(read_matrix(plain), m);
    EXPECT_EQ(fs::file_size(plain), kMatrixHeaderBytes + 6 * 4);
    // A weight blob is not a token dump.
    EXPECT_EQ(code_of([&] { read_dump(blob); }), Errc::InvalidArgument);
}

TEST(Matrix, PlainFormatSizeMismatchIsTruncated) {
    const auto p = temp_path("short.bin");
    std::vector<std::uint8_t> bytes;
    detail::put_u64(bytes, 2);
    detail::put_u64(bytes, 2);
    detail::put_f32(bytes, 1.0f);
    detail::write_file(p, bytes);
    EXPECT_EQ(code_of([&] { read_matrix(p); }), Errc::Truncated);
}
