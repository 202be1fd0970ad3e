#pragma once

// Test-side reference computations, independent of the library's own
// numerical paths: closed-form transitions, exact Ornstein-Uhlenbeck
// sampling, chi-square goodness of fit, and log-log slope fits.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracles {

// ---- closed forms ---------------------------------------------------------

/// Planar rotation: transition matrix of A = [[0,-w],[w,0]] over elapsed s.
inline Eigen::Matrix2d rotation(double w, double s) {
    Eigen::Matrix2d R;
    R << std::cos(w * s), -std::sin(w * s), std::sin(w * s), std::cos(w * s);
    return R;
}

/// Scalar time-varying drift -sin(b t): Phi(t1, t0) = exp[(cos(b t1) - cos(b t0)) / b].
inline double scalar_tv_phi(double t1, double t0, double b) {
    return std::exp((std::cos(b * t1) - std::cos(b * t0)) / b);
}

// ---- incomplete gamma / chi-square ----------------------------------------

inline double gamma_p_series(double a, double x) {
    double sum = 1.0 / a, term = sum, ap = a;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Upper regularized incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
    if (x == 0.0) return 1.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_contfrac(a, x);
}

/// p-value of a chi-square statistic with the given degrees of freedom.
inline double chi_square_pvalue(double stat, int dof) {
    return gamma_q(0.5 * dof, 0.5 * stat);
}

inline double poisson_pmf(int k, double mean) {
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

/// Chi-square GOF p-value of observed counts against Poisson(mean); bins with
/// expected count below 5 are pooled into the tail.
inline double poisson_gof_pvalue(const std::vector<long>& counts, double mean, long trials) {
    // counts[k] = number of trials with k events; overflow pooled by caller.
    std::vector<double> expected(counts.size());
    double tail = 1.0;
    for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
        expected[k] = trials * poisson_pmf(static_cast<int>(k), mean);
        tail -= poisson_pmf(static_cast<int>(k), mean);
    }
    expected.back() = trials * std::max(tail, 0.0);

    double stat = 0.0;
    int bins = 0;
    double obs_pool = 0.0, exp_pool = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        obs_pool += static_cast<double>(counts[k]);
        exp_pool += expected[k];
        if (exp_pool >= 5.0 || k + 1 == counts.size()) {
            if (exp_pool > 0.0) {
                stat += (obs_pool - exp_pool) * (obs_pool - exp_pool) / exp_pool;
                ++bins;
            }
            obs_pool = exp_pool = 0.0;
        }
    }
    return chi_square_pvalue(stat, bins - 1);
}

// ---- Ornstein-Uhlenbeck exact transition ----------------------------------

/// Exact OU step dX = a X dt + sigma dW over h, coupled to the increments
/// (dW, dZ) a strong order-1.5 scheme consumes, plus an independent remainder
/// z3 so the sample has exactly the transition distribution:
///   X(t+h) = e^{ah} X + sigma * I,   I = alpha dW + beta dZ + g z3.
struct OuCoupling {
    double a, h;
    double alpha, beta, resid_sd;

    OuCoupling(double a_, double h_) : a(a_), h(h_) {
        const double var_w = h;
        const double var_z = h * h * h / 3.0;
        const double cov_wz = 0.5 * h * h;
        const double e = std::exp(a * h);
        const double cov_iw = (e - 1.0) / a;
        // Cov(I, dZ) = int_0^h v e^{av} dv with v = h - u.
        const double cov_iz = (e * (a * h - 1.0) + 1.0) / (a * a);
        const double var_i = (std::exp(2.0 * a * h) - 1.0) / (2.0 * a);
        const double det = var_w * var_z - cov_wz * cov_wz;
        alpha = (cov_iw * var_z - cov_iz * cov_wz) / det;
        beta = (cov_iz * var_w - cov_iw * cov_wz) / det;
        const double explained = alpha * cov_iw + beta * cov_iz;
        resid_sd = std::sqrt(std::max(0.0, var_i - explained));
    }

    double step(double x, double sigma, double dw, double dz, double z3) const {
        return std::exp(a * h) * x + sigma * (alpha * dw + beta * dz + resid_sd * z3);
    }
};

// ---- slope fit -------------------------------------------------------------

/// Least-squares slope of log(err) against log(h).
inline double log_log_slope(const std::vector<double>& h, const std::vector<double>& err) {
    const std::size_t n = h.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(h[i]), y = std::log(err[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace oracles
