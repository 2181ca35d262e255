// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Post-training quantization at desk scale. Weights follow the usual
// linear-layer layout W[out, in] with y = x * W^T; granularity groups run
// along the input dimension of each output row.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "tokcomp/dump.hpp"
#include "tokcomp/error.hpp"

namespace tokcomp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

enum class Granularity { PerTensor, PerChannel, Group };
enum class QuantScope { WeightOnly, WeightActivation };

inline const char* granularity_name(Granularity g) noexcept {
    switch (g) {
        case Granularity::PerTensor: return "per-tensor";
        case Granularity::PerChannel: return "per-channel";
        case Granularity::Group: return "group";
    }
    return "?";
}

struct QuantSpec {
    int bits = 8;
    Granularity granularity = Granularity::PerChannel;
    std::size_t group_size = 0;
    bool symmetric = true;
    QuantScope scope = QuantScope::WeightOnly;

    /// Largest representable magnitude (symmetric) or code (asymmetric).
    std::int32_t qmax() const noexcept {
        return symmetric ? (std::int32_t{1} << (bits - 1)) - 1 : (std::int32_t{1} << bits) - 1;
    }
    std::int32_t qmin() const noexcept { return symmetric ? -qmax() : 0; }

    void validate(std::size_t cols) const {
        TOKCOMP_CHECK(bits == 4 || bits == 8, Errc::InvalidParameter, "bits must be 4 or 8");
        if (granularity == Granularity::Group)
            TOKCOMP_CHECK(group_size >= 1 && cols % group_size == 0, Errc::InvalidParameter,
                          "group size " + std::to_string(group_size) + " must divide " + std::to_string(cols) +
                              " columns");
    }

    std::size_t groups_per_row(std::size_t cols) const noexcept {
        switch (granularity) {
            case Granularity::PerTensor:
            case Granularity::PerChannel: return 1;
            case Granularity::Group: return cols / group_size;
        }
        return 1;
    }
};

/// Scale and zero point of one quantization group.
struct QuantParams {
    double scale = 1.0;
    std::int32_t zero = 0;
};

/// Chooses parameters covering [min, max] of the values. An all-zero group
/// gets scale 1 so that every code is 0.
template <typename Range>
QuantParams choose_params(const Range& values, const QuantSpec& spec) {
    double lo = 0.0, hi = 0.0, absmax = 0.0;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        absmax = std::max(absmax, std::abs(v));
    }
    QuantParams p;
    if (spec.symmetric) {
        if (absmax > 0.0) p.scale = absmax / spec.qmax();
        return p;
    }
    if (hi > lo) {
        p.scale = (hi - lo) / spec.qmax();
        p.zero = static_cast<std::int32_t>(std::clamp<double>(std::round(-lo / p.scale), 0, spec.qmax()));
    }
    return p;
}

inline std::int32_t quantize_value(double w, const QuantParams& p, const QuantSpec& spec) noexcept {
    const double q = std::round(w / p.scale) + p.zero;
    return static_cast<std::int32_t>(std::clamp<double>(q, spec.qmin(), spec.qmax()));
}

inline double dequantize_value(std::int32_t q, const QuantParams& p) noexcept {
    return static_cast<double>(q - p.zero) * p.scale;
}

struct QuantizedLinear {
    IntMatrix q;
    /// rows x groups_per_row; a per-tensor spec repeats one scale per row.
    Matrix scales;
    /// Present only for asymmetric specs, same shape as scales.
    std::optional<IntMatrix> zero_points;
    QuantSpec spec;
    /// Per-input-channel smoothing factors folded into the weights, if any.
    std::optional<Vector> smoothing_scales;

    Eigen::Index rows() const noexcept { return q.rows(); }
    Eigen::Index cols() const noexcept { return q.cols(); }

    QuantParams params_at(Eigen::Index r, Eigen::Index c) const noexcept {
        const Eigen::Index g = spec.granularity == Granularity::Group
                                   ? c / static_cast<Eigen::Index>(spec.group_size)
                                   : 0;
        return {scales(r, g), zero_points ? (*zero_points)(r, g) : 0};
    }

    Matrix dequantize() const {
        Matrix out(rows(), cols());
        for (Eigen::Index r = 0; r < rows(); ++r)
            for (Eigen::Index c = 0; c < cols(); ++c) out(r, c) = dequantize_value(q(r, c), params_at(r, c));
        return out;
    }

    /// The originals clamped into each group's representable range.
    Matrix clamp_to_grid(const Matrix& w) const {
        Matrix out = w;
        for (Eigen::Index r = 0; r < rows(); ++r)
            for (Eigen::Index c = 0; c < cols(); ++c) {
                const auto p = params_at(r, c);
                out(r, c) = std::clamp(w(r, c), dequantize_value(spec.qmin(), p), dequantize_value(spec.qmax(), p));
            }
        return out;
    }
};

namespace detail {

inline QuantizedLinear empty_quantized(const Matrix& w, const QuantSpec& spec) {
    QuantizedLinear out;
    out.spec = spec;
    out.q = IntMatrix::Zero(w.rows(), w.cols());
    const auto groups = static_cast<Eigen::Index>(spec.groups_per_row(w.cols()));
    out.scales = Matrix::Ones(w.rows(), groups);
    if (!spec.symmetric) out.zero_points = IntMatrix::Zero(w.rows(), groups);
    return out;
}

inline void set_params(QuantizedLinear& out, Eigen::Index r, Eigen::Index g, const QuantParams& p) {
    out.scales(r, g) = p.scale;
    if (out.zero_points) (*out.zero_points)(r, g) = p.zero;
}

/// Fills scales/zero points from w for per-tensor and per-channel specs.
inline void fit_static_params(QuantizedLinear& out, const Matrix& w) {
    if (out.spec.granularity == Granularity::PerTensor) {
        const auto p = choose_params(w.reshaped(), out.spec);
        for (Eigen::Index r = 0; r < w.rows(); ++r) set_params(out, r, 0, p);
    } else if (out.spec.granularity == Granularity::PerChannel) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) set_params(out, r, 0, choose_params(w.row(r), out.spec));
    }
}

inline void check_finite(const Matrix& m, const char* what) {
    TOKCOMP_CHECK(m.allFinite(), Errc::NonFiniteValue, std::string(what) + " contains a non-finite value");
}

}  // namespace detail

/// Round-to-nearest quantization with per-group scales.
inline QuantizedLinear quantize_rtn(const Matrix& w, const QuantSpec& spec) {
    TOKCOMP_CHECK(w.rows() >= 1 && w.cols() >= 1, Errc::ShapeMismatch, "empty weight matrix");
    detail::check_finite(w, "weights");
    spec.validate(static_cast<std::size_t>(w.cols()));
    auto out = detail::empty_quantized(w, spec);
    detail::fit_static_params(out, w);
    if (spec.granularity == Granularity::Group) {
        const auto g = static_cast<Eigen::Index>(spec.group_size);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index k = 0; k < out.scales.cols(); ++k)
                detail::set_params(out, r, k, choose_params(w.row(r).segment(k * g, g), spec));
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) out.q(r, c) = quantize_value(w(r, c), out.params_at(r, c), spec);
    return out;
}

/// Upper Cholesky factor of (H + damp I)^-1, or nullopt if not positive definite.
inline std::optional<Matrix> inverse_hessian_factor(const Matrix& h, double damp) {
    Matrix damped = h;
    damped.diagonal().array() += damp;
    Eigen::LLT<Matrix> llt(damped);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Matrix inv = llt.solve(Matrix::Identity(h.rows(), h.cols()));
    Eigen::LLT<Matrix> llt_inv(inv);
    if (llt_inv.info() != Eigen::Success) return std::nullopt;
    return Matrix(llt_inv.matrixU());
}

/// GPTQ-style weight-only quantization.
///
/// Input columns are quantized one at a time; each column's rounding error,
/// scaled by the inverse-Hessian Cholesky factor, is subtracted from the
/// columns not yet quantized. H = 2 X^T X + lambda I with
/// lambda = 0.01 * mean(diag H), retried once at 10x before giving up.
/// Group parameters are fitted when the sweep enters each group.
inline QuantizedLinear gptq_quantize(const Matrix& w, const Matrix& x_calib, const QuantSpec& spec) {
    TOKCOMP_CHECK(spec.scope == QuantScope::WeightOnly, Errc::InvalidParameter, "GPTQ is weight-only");
    TOKCOMP_CHECK(w.rows() >= 1 && w.cols() >= 1, Errc::ShapeMismatch, "empty weight matrix");
    TOKCOMP_CHECK(x_calib.rows() >= 1 && x_calib.cols() == w.cols(), Errc::ShapeMismatch,
                  "calibration matrix must be n x " + std::to_string(w.cols()));
    detail::check_finite(w, "weights");
    detail::check_finite(x_calib, "calibration data");
    spec.validate(static_cast<std::size_t>(w.cols()));

    Matrix work = w;
    Matrix h = 2.0 * x_calib.transpose() * x_calib;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        if (h(i, i) == 0.0) {  // input never active: weight is irrelevant
            h(i, i) = 1.0;
            work.col(i).setZero();
        }
    }
    const double damp = 0.01 * h.diagonal().mean();
    auto u = inverse_hessian_factor(h, damp);
    if (!u) u = inverse_hessian_factor(h, 10.0 * damp);
    TOKCOMP_CHECK(u.has_value(), Errc::SingularHessian, "Hessian not positive definite after 10x dampening");

    auto out = detail::empty_quantized(w, spec);
    detail::fit_static_params(out, work);
    const Eigen::Index n = w.cols();
    const auto g = static_cast<Eigen::Index>(spec.group_size);
    for (Eigen::Index c = 0; c < n; ++c) {
        if (spec.granularity == Granularity::Group && c % g == 0)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                detail::set_params(out, r, c / g, choose_params(work.row(r).segment(c, g), spec));
        Vector err(w.rows());
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            const auto p = out.params_at(r, c);
            out.q(r, c) = quantize_value(work(r, c), p, spec);
            err(r) = (work(r, c) - dequantize_value(out.q(r, c), p)) / (*u)(c, c);
        }
        if (c + 1 < n) work.rightCols(n - c - 1).noalias() -= err * u->row(c).tail(n - c - 1);
    }
    return out;
}

/// SmoothQuant migration factors s_j = a_j^alpha / max|W[:, j]|^(1 - alpha),
/// clamped to [1e-5, 1e5]. Zero activation or weight maxima are pinned to
/// the smallest positive value observed in the same vector.
inline Vector smooth_scales(const Vector& act_absmax, const Matrix& w, double alpha = 0.5) {
    TOKCOMP_CHECK(alpha >= 0.0 && alpha <= 1.0, Errc::InvalidParameter, "alpha must lie in [0, 1]");
    TOKCOMP_CHECK(act_absmax.size() == w.cols(), Errc::ShapeMismatch, "activation maxima must match input channels");
    TOKCOMP_CHECK(act_absmax.allFinite() && (act_absmax.array() >= 0.0).all(), Errc::InvalidArgument,
                  "activation maxima must be finite and nonnegative");

    auto pin = [](Vector v) {
        double smallest = 0.0;
        for (double x : v)
            if (x > 0.0 && (smallest == 0.0 || x < smallest)) smallest = x;
        if (smallest == 0.0) smallest = 1.0;
        for (double& x : v)
            if (x <= 0.0) x = smallest;
        return v;
    };
    const Vector act = pin(act_absmax);
    const Vector wmax = pin(w.cwiseAbs().colwise().maxCoeff().transpose());
    Vector s(w.cols());
    for (Eigen::Index j = 0; j < s.size(); ++j)
        s(j) = std::clamp(std::pow(act(j), alpha) / std::pow(wmax(j), 1.0 - alpha), 1e-5, 1e5);
    return s;
}

/// X' = X diag(s)^-1 and W' = W diag(s), so X' W'^T = X W^T.
inline std::pair<Matrix, Matrix> apply_smoothing(const Matrix& x, const Matrix& w, const Vector& s) {
    TOKCOMP_CHECK(s.size() == x.cols() && s.size() == w.cols(), Errc::ShapeMismatch,
                  "smoothing scales must match the shared input dimension");
    TOKCOMP_CHECK((s.array() > 0.0).all() && s.allFinite(), Errc::NonPositiveScale,
                  "smoothing scales must be strictly positive");
    Matrix xs = x * s.cwiseInverse().asDiagonal();
    Matrix ws = w * s.asDiagonal();
    return {std::move(xs), std::move(ws)};
}

inline Vector column_absmax(const Matrix& x) { return x.cwiseAbs().colwise().maxCoeff().transpose(); }

/// Smooth, quantize both operands to symmetric per-tensor 8-bit, multiply
/// in 64-bit integers and rescale. Returns the simulated X W^T.
inline Matrix simulated_w8a8_matmul(const Matrix& x, const Matrix& w, double alpha = 0.5) {
    TOKCOMP_CHECK(x.cols() == w.cols(), Errc::ShapeMismatch, "X and W disagree on input dimension");
    const Vector s = smooth_scales(column_absmax(x), w, alpha);
    const auto [xs, ws] = apply_smoothing(x, w, s);
    QuantSpec spec{.bits = 8, .granularity = Granularity::PerTensor, .symmetric = true,
                   .scope = QuantScope::WeightActivation};
    const auto qx = quantize_rtn(xs, spec);
    const auto qw = quantize_rtn(ws, spec);
    const double rescale = qx.scales(0, 0) * qw.scales(0, 0);
    Matrix y(x.rows(), w.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
            std::int64_t acc = 0;
            for (Eigen::Index k = 0; k < x.cols(); ++k) acc += std::int64_t{qx.q(i, k)} * qw.q(o, k);
            y(i, o) = static_cast<double>(acc) * rescale;
        }
    return y;
}

struct QuantErrorReport {
    double max_abs_error = 0.0;
    double mean_abs_error = 0.0;
    /// Mean squared error of X (W - W_hat)^T.
    double output_mse = 0.0;
};

inline QuantErrorReport quant_eval(const Matrix& w, const Matrix& w_hat, const Matrix& x) {
    TOKCOMP_CHECK(w.rows() == w_hat.rows() && w.cols() == w_hat.cols(), Errc::ShapeMismatch,
                  "weight and reconstruction shapes differ");
    TOKCOMP_CHECK(x.cols() == w.cols() && x.rows() >= 1, Errc::ShapeMismatch, "X must be n x in_features");
    const Matrix diff = w - w_hat;
    QuantErrorReport r;
    r.max_abs_error = diff.cwiseAbs().maxCoeff();
    r.mean_abs_error = diff.cwiseAbs().mean();
    r.output_mse = (x * diff.transpose()).squaredNorm() / static_cast<double>(x.rows() * w.rows());
    return r;
}

inline Matrix to_matrix(const FloatMatrix& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = m.at(r, c);
    return out;
}

inline FloatMatrix to_float_matrix(const Matrix& m) {
    FloatMatrix out{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), {}};
    out.data.reserve(out.rows * out.cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.data.push_back(static_cast<float>(m(r, c)));
    return out;
}

}  // namespace tokcomp
