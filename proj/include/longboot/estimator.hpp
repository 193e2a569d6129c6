#pragma once

// Per-taxon marginal model on the arcsinh scale, empirical-Bayes shrinkage
// across taxa, and studentization.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/preprocess.hpp"

namespace longboot {

/// Standard errors below this are clamped (and counted by the caller).
inline constexpr double kSeFloor = 1e-8;

/// Clamp an SE to the floor; bumps `floored` when clamping happened.
inline double floor_se(double se, std::size_t& floored) noexcept {
    if (!(se >= kSeFloor)) {
        ++floored;
        return kSeFloor;
    }
    return se;
}

struct MarginalFit {
    std::vector<double> beta_raw;   ///< group-1 minus group-0 mean, arcsinh scale
    std::vector<double> intercept;  ///< group-0 mean
    std::vector<double> se_naive;   ///< working-independence OLS standard error
};

struct ShrunkenFit {
    std::vector<double> beta;
    double prior_mean = 0.0;
    double prior_var = 0.0;
    /// False when shrinkage was skipped (single taxon, or heterogeneity with a zero moment estimate).
    bool pooled = true;
    std::string warning;
};

namespace detail {

/// Accumulates one taxon's group sums; `fit` turns them into OLS estimates.
struct GroupMoments {
    double sum[2] = {0.0, 0.0};
    double sumsq[2] = {0.0, 0.0};

    void add(int g, double y) noexcept {
        sum[g] += y;
        sumsq[g] += y * y;
    }

    /// OLS of y on (1, group) for fixed group sizes n0, n1 (both > 0).
    void fit(double n0, double n1, double& intercept, double& beta, double& se) const noexcept {
        const double m0 = sum[0] / n0;
        const double m1 = sum[1] / n1;
        intercept = m0;
        beta = m1 - m0;
        const double rss = std::max(0.0, sumsq[0] - n0 * m0 * m0) + std::max(0.0, sumsq[1] - n1 * m1 * m1);
        const double df = n0 + n1 - 2.0;
        se = df > 0.0 ? std::sqrt(rss / df * (1.0 / n0 + 1.0 / n1)) : 0.0;
    }
};

}  // namespace detail

/**
 * Fit the marginal model for every taxon.
 *
 * With the response already on the link scale and a working-independence
 * correlation, the estimating equations reduce to least squares on (1, group),
 * so beta_raw is the difference of group means.
 */
inline MarginalFit fit_marginal(const LongitudinalDataset& ds, const TransformedMatrix& tm) {
    const std::size_t m = tm.values.rows();
    const std::size_t n = tm.values.cols();
    if (m != ds.n_taxa() || n != ds.n_samples())
        throw ValidationError("estimator", "transformed matrix does not match dataset shape");
    double ng[2] = {0.0, 0.0};
    for (std::size_t s = 0; s < n; ++s) ng[ds.column_group(s)] += 1.0;
    if (ng[0] == 0.0 || ng[1] == 0.0) throw ValidationError("estimator", "degenerate design");

    MarginalFit fit;
    fit.beta_raw.resize(m);
    fit.intercept.resize(m);
    fit.se_naive.resize(m);
    std::size_t floored = 0;
    for (std::size_t i = 0; i < m; ++i) {
        detail::GroupMoments mom;
        const auto row = tm.values.row(i);
        for (std::size_t s = 0; s < n; ++s) mom.add(ds.column_group(s), row[s]);
        double se = 0.0;
        mom.fit(ng[0], ng[1], fit.intercept[i], fit.beta_raw[i], se);
        fit.se_naive[i] = floor_se(se, floored);
    }
    return fit;
}

/**
 * Normal-normal posterior-mean shrinkage with method-of-moments prior.
 *
 * prior_mean is the 1/se^2-weighted mean of beta_raw and prior_var the weighted
 * variance minus mean(se^2), floored at zero. A zero prior variance pools every
 * taxon to prior_mean, unless the homogeneity statistic
 * Q = sum w_i (b_i - prior_mean)^2 exceeds its null expectation m - 1; then the
 * zero is an artifact of very unequal SEs and no shrinkage is applied.
 */
inline ShrunkenFit shrink(std::span<const double> beta_raw, std::span<const double> se) {
    if (beta_raw.size() != se.size())
        throw ValidationError("estimator", "beta and se lengths differ");
    const std::size_t m = beta_raw.size();
    ShrunkenFit out;
    out.beta.assign(beta_raw.begin(), beta_raw.end());
    if (m == 0) throw ValidationError("estimator", "no taxa to shrink");
    if (m == 1) {
        out.pooled = false;
        out.prior_mean = beta_raw[0];
        out.warning = "single taxon: no cross-taxon pooling possible";
        return out;
    }
    for (double s : se)
        if (!(s > 0.0) || !std::isfinite(s))
            throw ValidationError("estimator", "standard errors must be finite and positive");

    double wsum = 0.0;
    double wb = 0.0;
    double mean_se2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double w = 1.0 / (se[i] * se[i]);
        wsum += w;
        wb += w * beta_raw[i];
        mean_se2 += se[i] * se[i];
    }
    mean_se2 /= static_cast<double>(m);
    const double pm = wb / wsum;
    double q_stat = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = beta_raw[i] - pm;
        q_stat += d * d / (se[i] * se[i]);
    }
    const double wvar = q_stat / wsum;
    const double pv = std::max(0.0, wvar - mean_se2);
    out.prior_mean = pm;
    out.prior_var = pv;

    if (pv > 0.0) {
        for (std::size_t i = 0; i < m; ++i) {
            const double prec = 1.0 / (se[i] * se[i]);
            out.beta[i] = (beta_raw[i] * prec + pm / pv) / (prec + 1.0 / pv);
        }
    } else if (q_stat > static_cast<double>(m - 1)) {
        out.pooled = false;
        out.warning = "zero prior variance despite heterogeneous estimates: shrinkage skipped";
    } else {
        std::fill(out.beta.begin(), out.beta.end(), pm);
    }
    return out;
}

inline ShrunkenFit shrink(const MarginalFit& fit, std::span<const double> se) {
    return shrink(std::span<const double>(fit.beta_raw), se);
}

/// (beta_hat - beta_null) / se. se must be positive; callers apply floor_se first.
inline double studentize(double beta_hat, double beta_null, double se) {
    if (!(se > 0.0)) throw NumericalError("estimator", "studentize needs a positive standard error");
    return (beta_hat - beta_null) / se;
}

}  // namespace longboot
