#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "market_data.hpp"

namespace statarb {

struct OLSFit {
    double alpha = 0.0; // 0 when fit without intercept
    Vector beta;
    Vector residuals; // in-sample
    double r2 = 0.0;
    bool intercept = false;
    bool rank_deficient = false;

    // beta' x, intercept excluded.
    double project(const Eigen::Ref<const Vector>& x) const { return beta.dot(x); }
};

// Least squares y ~ [1] X. Rank-deficient designs get the minimum-norm
// solution (complete orthogonal decomposition) and are flagged. R^2 is taken
// against the mean with an intercept and against raw y'y without.
inline OLSFit ols_fit(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y, bool intercept) {
    const Index T = X.rows(), k = X.cols();
    if (y.size() != T) throw DimensionError("ols_fit: X and y row counts differ");
    if (T <= k + 1) throw InsufficientDataError("ols_fit: need more than k+1 observations");
    if (!X.allFinite() || !y.allFinite()) throw NumericError("ols_fit: non-finite input");

    Matrix A(T, k + (intercept ? 1 : 0));
    if (intercept) {
        A.col(0).setOnes();
        A.rightCols(k) = X;
    } else {
        A = X;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    Vector coef = cod.solve(y);

    OLSFit fit;
    fit.intercept = intercept;
    fit.rank_deficient = cod.rank() < A.cols();
    fit.alpha = intercept ? coef(0) : 0.0;
    fit.beta = intercept ? Vector(coef.tail(k)) : coef;
    fit.residuals = y - A * coef;
    const double ssr = fit.residuals.squaredNorm();
    const double sst = intercept ? (y.array() - y.mean()).square().sum() : y.squaredNorm();
    fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
    return fit;
}

struct SymmetricEigen {
    Vector values;  // descending
    Matrix vectors; // column j pairs with values(j)
    int sweeps = 0;
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius mass falls below
// tol * ||A||_F. Eigenvectors are sign-normalized so each column's
// largest-magnitude entry is positive.
inline SymmetricEigen jacobi_eigen(const Eigen::Ref<const Matrix>& input, double tol = 1e-15,
                                   int max_sweeps = 100) {
    const Index n = input.rows();
    if (input.cols() != n) throw DimensionError("jacobi_eigen: matrix not square");
    Matrix a = 0.5 * (input + input.transpose());
    Matrix v = Matrix::Identity(n, n);
    const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

    auto off_norm = [&] {
        double s = 0.0;
        for (Index p = 0; p < n; ++p)
            for (Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    SymmetricEigen out;
    while (off_norm() > tol * scale) {
        if (out.sweeps >= max_sweeps) throw NumericError("jacobi_eigen: no convergence");
        ++out.sweeps;
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x, x) > a(y, y); });
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Index j = 0; j < n; ++j) {
        const Index src = order[static_cast<std::size_t>(j)];
        out.values(j) = a(src, src);
        Vector col = v.col(src);
        Index arg = 0;
        col.cwiseAbs().maxCoeff(&arg);
        if (col(arg) < 0) col = -col;
        out.vectors.col(j) = col;
    }
    return out;
}

} // namespace statarb
