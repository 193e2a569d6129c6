#pragma once

// Library-size normalization (median of ratios) and the arcsinh transform.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/matrix.hpp"

namespace longboot {

/// One positive normalization constant per sample.
struct SizeFactors {
    std::vector<double> delta;
    /// True when no taxon was positive in every sample and the sparse scheme was used.
    bool fallback = false;
};

/// arcsinh(count / delta) for every cell.
struct TransformedMatrix {
    Matrix<double> values;
};

namespace detail {

/// Median of a scratch buffer (reorders it). Even sizes average the two middle values.
inline double median_inplace(std::span<double> v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

struct SizeFactorScratch {
    std::vector<double> log_geo;
    std::vector<double> geo;
    std::vector<char> usable;
    std::vector<double> ratios;
};

/**
 * Median-of-ratios size factors over a column selection (columns may repeat).
 *
 * log_counts(i, s) must hold log(counts(i, s)) for positive cells; other cells
 * are never read.
 */
inline void size_factors_into(const Matrix<count_t>& counts, const Matrix<double>& log_counts,
                              std::span<const std::size_t> cols, SizeFactorScratch& scratch,
                              std::vector<double>& delta, bool& fallback) {
    const std::size_t m = counts.rows();
    const std::size_t n = cols.size();
    scratch.log_geo.assign(m, 0.0);
    scratch.geo.assign(m, 0.0);
    scratch.usable.assign(m, 0);
    delta.assign(n, 0.0);

    // Strict scheme: reference taxa are positive in every selected sample.
    std::size_t n_ref = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto crow = counts.row(i);
        const auto lrow = log_counts.row(i);
        double acc = 0.0;
        bool all_positive = true;
        for (auto c : cols) {
            if (crow[c] <= 0) {
                all_positive = false;
                break;
            }
            acc += lrow[c];
        }
        if (all_positive) {
            scratch.usable[i] = 1;
            scratch.geo[i] = std::exp(acc / static_cast<double>(n));
            ++n_ref;
        }
    }
    fallback = n_ref == 0;

    if (fallback) {
        // Sparse scheme: geometric mean over positive entries only.
        for (std::size_t i = 0; i < m; ++i) {
            const auto crow = counts.row(i);
            const auto lrow = log_counts.row(i);
            double acc = 0.0;
            std::size_t k = 0;
            for (auto c : cols) {
                if (crow[c] > 0) {
                    acc += lrow[c];
                    ++k;
                }
            }
            if (k > 0) {
                scratch.usable[i] = 1;
                scratch.geo[i] = std::exp(acc / static_cast<double>(k));
            }
        }
    }

    scratch.ratios.resize(m);
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t c = cols[p];
        std::size_t k = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (!scratch.usable[i]) continue;
            const count_t v = counts(i, c);
            if (fallback && v <= 0) continue;
            scratch.ratios[k++] = static_cast<double>(v) / scratch.geo[i];
        }
        if (k == 0) throw NumericalError("preprocess", "no reference taxa for a sample");
        const double d = median_inplace(std::span<double>(scratch.ratios.data(), k));
        if (!(d > 0.0) || !std::isfinite(d))
            throw NumericalError("preprocess", "non-positive size factor");
        delta[p] = d;
    }
}

inline Matrix<double> log_counts(const Matrix<count_t>& counts) {
    Matrix<double> out(counts.rows(), counts.cols(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < counts.rows(); ++i)
        for (std::size_t s = 0; s < counts.cols(); ++s)
            if (counts(i, s) > 0) out(i, s) = std::log(static_cast<double>(counts(i, s)));
    return out;
}

}  // namespace detail

/**
 * Median-of-ratios size factors, one per sample.
 *
 * delta_s = median over reference taxa of counts[i][s] / g_i, g_i the geometric
 * mean of taxon i. Reference taxa are those positive everywhere; when there are
 * none, g_i is taken over positive entries and each sample's median runs over
 * the taxa positive in that sample.
 */
inline SizeFactors size_factors(const CountMatrix& cm) {
    std::vector<std::size_t> cols(cm.n_samples());
    for (std::size_t s = 0; s < cols.size(); ++s) cols[s] = s;
    const auto logs = detail::log_counts(cm.counts);
    detail::SizeFactorScratch scratch;
    SizeFactors sf;
    detail::size_factors_into(cm.counts, logs, cols, scratch, sf.delta, sf.fallback);
    return sf;
}

inline TransformedMatrix transform(const CountMatrix& cm, const SizeFactors& sf) {
    if (sf.delta.size() != cm.n_samples())
        throw ValidationError("preprocess", "size factor count does not match sample count");
    for (double d : sf.delta)
        if (!(d > 0.0) || !std::isfinite(d))
            throw ValidationError("preprocess", "size factors must be positive and finite");
    TransformedMatrix tm{Matrix<double>(cm.n_taxa(), cm.n_samples())};
    for (std::size_t i = 0; i < cm.n_taxa(); ++i)
        for (std::size_t s = 0; s < cm.n_samples(); ++s)
            tm.values(i, s) = std::asinh(static_cast<double>(cm.counts(i, s)) / sf.delta[s]);
    return tm;
}

}  // namespace longboot
