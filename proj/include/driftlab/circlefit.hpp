#pragma once

// Algebraic (KASA) circle fitting and its l1-regularized resilient variant.
//
// With z = x0^2 + y0^2 - r^2 the squared-radius residual of point t is linear
// in (x0, y0, z):
//
//     L_t = (x_t^2 + y_t^2) - 2 x_t x0 - 2 y_t y0 + z
//
// KASA minimizes sum L_t^2 (a 3x3 normal system). The resilient fit adds a
// per-point offset a_t and minimizes
//
//     sum (L_t + a_t)^2 + lambda * sum |a_t|
//
// which is jointly convex in (x0, y0, z, a). It is solved by block coordinate
// descent: exact 3x3 solve for (x0, y0, z) given a, then a_t = S_{lambda/2}(-L_t).
// All solves run on coordinates centered at the window mean, which keeps the
// normal matrix well conditioned and makes the fit translation equivariant.

#include <driftlab/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace driftlab::circlefit {

template <std::floating_point T = double>
struct Point {
    T x{};
    T y{};
};

template <std::floating_point T = double>
struct CircleFit {
    T x0{};
    T y0{};
    T r{};
    std::vector<T> a;  ///< per-point offsets (m^2); all zero for plain KASA
    int iterations = 0;
    bool converged = true;
    T residual{};      ///< objective value at the returned parameters
    T lambda{};        ///< l1 weight actually used (0 for KASA)
    std::vector<T> objective_trace; ///< objective after each descent sweep
};

template <std::floating_point T = double>
struct ResilientOptions {
    std::optional<T> lambda;  ///< unset: 2 x median |L_t| of the KASA pass
    T tol = T(1e-8);
    int max_iter = 200;
    /// Refit (x0, y0, z) with the offsets of the detected support left
    /// unpenalized. Removes the shrinkage the l1 term puts on inliers.
    bool refit_support = true;
    /// Cap on refit and re-screen rounds.
    int max_refit = 10;
};

/// Condition number above which the window is treated as collinear.
template <std::floating_point T>
inline constexpr T max_condition = T(1e12);

namespace detail {

template <std::floating_point T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
template <std::floating_point T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <std::floating_point T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <std::floating_point T>
using DesignMat = Eigen::Matrix<T, Eigen::Dynamic, 3>;

// Centered design: rows (-2x, -2y, 1), targets s = x^2 + y^2, so L = s + D p.
template <std::floating_point T>
struct Problem {
    T cx{};
    T cy{};
    DesignMat<T> design;
    VecX<T> s;
    Eigen::LDLT<Mat3<T>> normal;
};

template <std::floating_point T>
void check_conditioning(const Mat3<T>& m)
{
    Eigen::SelfAdjointEigenSolver<Mat3<T>> eig(m, Eigen::EigenvaluesOnly);
    const auto ev = eig.eigenvalues();
    const T lo = ev.minCoeff();
    const T hi = ev.maxCoeff();
    if (!(lo > T(0)) || hi / lo > max_condition<T>) {
        throw FitError("circle fit: normal matrix is singular or ill-conditioned (collinear points?)");
    }
}

template <std::floating_point T>
Problem<T> make_problem(std::span<const Point<T>> pts)
{
    const auto n = static_cast<Eigen::Index>(pts.size());
    if (n < 3) {
        throw FitError("circle fit: need at least 3 points");
    }
    Problem<T> pr;
    for (const auto& p : pts) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw FitError("circle fit: non-finite point");
        }
        pr.cx += p.x;
        pr.cy += p.y;
    }
    pr.cx /= T(n);
    pr.cy /= T(n);
    pr.design.resize(n, 3);
    pr.s.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const T x = pts[static_cast<std::size_t>(i)].x - pr.cx;
        const T y = pts[static_cast<std::size_t>(i)].y - pr.cy;
        pr.design(i, 0) = T(-2) * x;
        pr.design(i, 1) = T(-2) * y;
        pr.design(i, 2) = T(1);
        pr.s(i) = x * x + y * y;
    }
    const Mat3<T> m = pr.design.transpose() * pr.design;
    check_conditioning(m);
    pr.normal.compute(m);
    return pr;
}

// argmin_p |s + a + D p|^2
template <std::floating_point T>
Vec3<T> solve_block(const Problem<T>& pr, const VecX<T>& a)
{
    return pr.normal.solve(-(pr.design.transpose() * (pr.s + a)));
}

template <std::floating_point T>
T soft_threshold(T v, T k)
{
    if (v > k) {
        return v - k;
    }
    if (v < -k) {
        return v + k;
    }
    return T(0);
}

template <std::floating_point T>
T objective(const VecX<T>& residual_plus_a, const VecX<T>& a, T lambda)
{
    return residual_plus_a.squaredNorm() + lambda * a.template lpNorm<1>();
}

template <std::floating_point T>
CircleFit<T> finish(const Problem<T>& pr, const Vec3<T>& p)
{
    const T r2 = p(0) * p(0) + p(1) * p(1) - p(2);
    if (!(r2 > T(0))) {
        throw FitError("circle fit: fitted r^2 is not positive");
    }
    CircleFit<T> out;
    out.x0 = p(0) + pr.cx;
    out.y0 = p(1) + pr.cy;
    out.r = std::sqrt(r2);
    return out;
}

template <std::floating_point T>
T median_abs(const VecX<T>& v)
{
    std::vector<T> tmp(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        tmp[static_cast<std::size_t>(i)] = std::abs(v(i));
    }
    const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    if (tmp.size() % 2 == 1) {
        return *mid;
    }
    const T hi = *mid;
    const T lo = *std::max_element(tmp.begin(), mid);
    return T(0.5) * (lo + hi);
}

} // namespace detail

/// Classic algebraic circle fit. Throws FitError for fewer than 3 points,
/// (near-)collinear windows, or a non-positive fitted r^2.
template <std::floating_point T>
CircleFit<T> kasa_fit(std::span<const Point<T>> pts)
{
    const auto pr = detail::make_problem(pts);
    const detail::VecX<T> zero = detail::VecX<T>::Zero(pr.s.size());
    const auto p = detail::solve_block(pr, zero);
    auto out = detail::finish(pr, p);
    out.a.assign(pts.size(), T(0));
    out.residual = (pr.s + pr.design * p).squaredNorm();
    return out;
}

template <std::floating_point T>
CircleFit<T> kasa_fit(const std::vector<Point<T>>& pts)
{
    return kasa_fit(std::span<const Point<T>>(pts));
}

/// Default l1 weight: twice the median absolute KASA residual, floored so an
/// exact circle does not threshold round-off.
template <std::floating_point T>
T default_lambda(std::span<const Point<T>> pts)
{
    const auto pr = detail::make_problem(pts);
    const detail::VecX<T> zero = detail::VecX<T>::Zero(pr.s.size());
    const auto p = detail::solve_block(pr, zero);
    const detail::VecX<T> L = pr.s + pr.design * p;
    const T floor = T(1e-12) * std::max(pr.s.mean(), T(1e-300));
    return std::max(T(2) * detail::median_abs(L), floor);
}

/// l1-regularized circle fit tolerant to sparse outliers.
///
/// Returns converged = false (with the last iterate) when the parameter change
/// stays above tol after max_iter sweeps. Throws FitError for lambda <= 0 and
/// for the same degenerate windows as kasa_fit.
template <std::floating_point T>
CircleFit<T> resilient_fit(std::span<const Point<T>> pts, const ResilientOptions<T>& opt = {})
{
    using detail::VecX;
    const auto pr = detail::make_problem(pts);
    const auto n = pr.s.size();

    VecX<T> a = VecX<T>::Zero(n);
    auto p = detail::solve_block(pr, a);
    VecX<T> L = pr.s + pr.design * p;

    T lambda{};
    if (opt.lambda) {
        lambda = *opt.lambda;
    } else {
        const T floor = T(1e-12) * std::max(pr.s.mean(), T(1e-300));
        lambda = std::max(T(2) * detail::median_abs(L), floor);
    }
    if (!(lambda > T(0)) || !std::isfinite(lambda)) {
        throw FitError("resilient_fit: lambda must be positive and finite");
    }
    if (opt.max_iter < 1 || !(opt.tol > T(0)) || opt.max_refit < 0) {
        throw FitError("resilient_fit: max_iter must be >= 1, tol > 0 and max_refit >= 0");
    }

    const T half = lambda / T(2);
    std::vector<T> trace;
    trace.reserve(static_cast<std::size_t>(opt.max_iter));
    bool converged = false;
    int it = 0;
    while (it < opt.max_iter) {
        ++it;
        for (Eigen::Index i = 0; i < n; ++i) {
            a(i) = detail::soft_threshold(-L(i), half);
        }
        const auto next = detail::solve_block(pr, a);
        const T step = (next - p).template lpNorm<Eigen::Infinity>();
        p = next;
        L = pr.s + pr.design * p;
        trace.push_back(detail::objective<T>(L + a, a, lambda));
        if (step < opt.tol) {
            converged = true;
            break;
        }
    }

    CircleFit<T> out;
    if (opt.refit_support && (a.array() != T(0)).any()) {
        // Offsets on the support are free: those rows drop out of the fit.
        // The support is then re-screened against the unshrunk residuals,
        // which readmits inliers the l1 pass flagged only through shrinkage.
        std::vector<bool> support(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            support[static_cast<std::size_t>(i)] = a(i) != T(0);
        }
        for (int pass = 0; pass < opt.max_refit; ++pass) {
            std::vector<Eigen::Index> keep;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!support[static_cast<std::size_t>(i)]) {
                    keep.push_back(i);
                }
            }
            if (keep.size() < 3) {
                break;
            }
            detail::DesignMat<T> d(static_cast<Eigen::Index>(keep.size()), 3);
            VecX<T> s(static_cast<Eigen::Index>(keep.size()));
            for (std::size_t k = 0; k < keep.size(); ++k) {
                d.row(static_cast<Eigen::Index>(k)) = pr.design.row(keep[k]);
                s(static_cast<Eigen::Index>(k)) = pr.s(keep[k]);
            }
            const detail::Mat3<T> m = d.transpose() * d;
            Eigen::SelfAdjointEigenSolver<detail::Mat3<T>> eig(m, Eigen::EigenvaluesOnly);
            const T lo = eig.eigenvalues().minCoeff();
            const T hi = eig.eigenvalues().maxCoeff();
            if (!(lo > T(0) && hi / lo <= max_condition<T>)) {
                break;
            }
            p = m.ldlt().solve(-(d.transpose() * s));
            L = pr.s + pr.design * p;
            bool changed = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                const bool out_i = std::abs(L(i)) > half;
                changed = changed || out_i != support[static_cast<std::size_t>(i)];
                support[static_cast<std::size_t>(i)] = out_i;
            }
            for (Eigen::Index i = 0; i < n; ++i) {
                a(i) = support[static_cast<std::size_t>(i)] ? -L(i) : T(0);
            }
            if (!changed) {
                break;
            }
        }
    }

    auto fit = detail::finish(pr, p);
    out.x0 = fit.x0;
    out.y0 = fit.y0;
    out.r = fit.r;
    out.a.assign(a.data(), a.data() + n);
    out.iterations = it;
    out.converged = converged;
    out.lambda = lambda;
    out.residual = detail::objective<T>(L + a, a, lambda);
    out.objective_trace = std::move(trace);
    return out;
}

template <std::floating_point T>
CircleFit<T> resilient_fit(const std::vector<Point<T>>& pts, const ResilientOptions<T>& opt = {})
{
    return resilient_fit(std::span<const Point<T>>(pts), opt);
}

} // namespace driftlab::circlefit
