#pragma once

// Comparison methods: merge-by-subject (MBS) and presume-independent-samples
// (PIS), both a per-taxon gamma-Poisson Wald test with median-ratio offsets.

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/inference.hpp"
#include "longboot/preprocess.hpp"

namespace longboot {

struct GlmFit {
    double b0 = 0.0;
    double b1 = 0.0;  ///< natural-log group effect
    double se_b1 = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/**
 * log mu = b0 + b1 x + offset, Var = mu + alpha mu^2, alpha fixed; IRLS.
 * x is 0/1. Standard error from the inverse Fisher information.
 */
inline GlmFit fit_nb_glm(std::span<const double> y, std::span<const int> x, std::span<const double> offset,
                         double alpha, int max_iter = 100, double tol = 1e-12) {
    const std::size_t n = y.size();
    if (x.size() != n || offset.size() != n) throw ValidationError("baselines", "GLM inputs differ in length");
    GlmFit fit;
    double sy[2] = {0.0, 0.0};
    double se_off[2] = {0.0, 0.0};
    for (std::size_t s = 0; s < n; ++s) {
        sy[x[s]] += y[s];
        se_off[x[s]] += std::exp(offset[s]);
    }
    if (se_off[0] == 0.0 || se_off[1] == 0.0) throw ValidationError("baselines", "degenerate design");
    if (sy[0] + sy[1] == 0.0) {
        fit.b0 = -std::numeric_limits<double>::infinity();
        fit.converged = true;
        return fit;
    }
    // Poisson MLE as the start; a zero group sum gets a small pseudo-count.
    const double r0 = std::max(sy[0], 0.1) / se_off[0];
    const double r1 = std::max(sy[1], 0.1) / se_off[1];
    fit.b0 = std::log(r0);
    fit.b1 = std::log(r1) - std::log(r0);

    double i00 = 0.0, i01 = 0.0, i11 = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        double a00 = 0.0, a01 = 0.0, a11 = 0.0, v0 = 0.0, v1 = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double xs = static_cast<double>(x[s]);
            const double eta = fit.b0 + fit.b1 * xs;
            const double mu = std::exp(eta + offset[s]);
            const double w = mu / (1.0 + alpha * mu);
            const double z = eta + (y[s] - mu) / mu;
            a00 += w;
            a01 += w * xs;
            a11 += w * xs * xs;
            v0 += w * z;
            v1 += w * xs * z;
        }
        const double det = a00 * a11 - a01 * a01;
        if (!(det > 0.0) || !std::isfinite(det)) break;
        const double nb0 = (a11 * v0 - a01 * v1) / det;
        const double nb1 = (a00 * v1 - a01 * v0) / det;
        const double change = std::abs(nb0 - fit.b0) + std::abs(nb1 - fit.b1);
        fit.b0 = nb0;
        fit.b1 = nb1;
        fit.iterations = it + 1;
        if (change < tol * (1.0 + std::abs(nb0) + std::abs(nb1))) {
            fit.converged = true;
            break;
        }
    }
    for (std::size_t s = 0; s < n; ++s) {
        const double xs = static_cast<double>(x[s]);
        const double mu = std::exp(fit.b0 + fit.b1 * xs + offset[s]);
        const double w = mu / (1.0 + alpha * mu);
        i00 += w;
        i01 += w * xs;
        i11 += w * xs * xs;
    }
    const double det = i00 * i11 - i01 * i01;
    fit.se_b1 = det > 0.0 ? std::sqrt(i00 / det) : std::numeric_limits<double>::infinity();
    return fit;
}

/**
 * Method-of-moments dispersion from the Poisson fit (closed form for a 0/1
 * design): alpha = max(0, sum((y - mu)^2 - mu) / mu^2 / (n - 2)).
 */
inline double mom_dispersion(std::span<const double> y, std::span<const int> x, std::span<const double> offset) {
    const std::size_t n = y.size();
    double sy[2] = {0.0, 0.0};
    double so[2] = {0.0, 0.0};
    for (std::size_t s = 0; s < n; ++s) {
        sy[x[s]] += y[s];
        so[x[s]] += std::exp(offset[s]);
    }
    if (n <= 2) return 0.0;
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const double mu = std::exp(offset[s]) * sy[x[s]] / so[x[s]];
        if (mu <= 0.0) continue;
        const double d = y[s] - mu;
        acc += (d * d - mu) / (mu * mu);
    }
    return std::max(0.0, acc / static_cast<double>(n - 2));
}

struct BaselineResult {
    std::vector<std::string> taxa;
    std::vector<double> lfc;  ///< log2
    std::vector<double> se;   ///< log2
    std::vector<double> wald;
    std::vector<double> p;
    std::vector<double> p_adj;
    std::vector<double> dispersion;
};

/// Per-taxon Wald tests on every column of `ds`.
inline BaselineResult nb_wald_test(const LongitudinalDataset& ds) {
    const std::size_t m = ds.n_taxa();
    const std::size_t n = ds.n_samples();
    const auto sf = size_factors(ds.counts);
    std::vector<double> offset(n);
    std::vector<int> x(n);
    for (std::size_t s = 0; s < n; ++s) {
        offset[s] = std::log(sf.delta[s]);
        x[s] = ds.column_group(s);
    }
    BaselineResult out;
    out.taxa = ds.counts.taxa_ids;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t s = 0; s < n; ++s) y[s] = static_cast<double>(ds.counts.counts(i, s));
        const double alpha = mom_dispersion(y, x, offset);
        const GlmFit f = fit_nb_glm(y, x, offset, alpha);
        double wald = std::isfinite(f.se_b1) && f.se_b1 > 0.0 ? f.b1 / f.se_b1 : 0.0;
        if (!std::isfinite(wald)) wald = 0.0;
        double p = std::erfc(std::abs(wald) / std::numbers::sqrt2);
        p = std::clamp(p, std::numeric_limits<double>::min(), 1.0);
        out.lfc.push_back(std::isfinite(f.b1) ? f.b1 / std::numbers::ln2 : 0.0);
        out.se.push_back(f.se_b1 / std::numbers::ln2);
        out.wald.push_back(wald);
        out.p.push_back(p);
        out.dispersion.push_back(alpha);
    }
    out.p_adj = bh_adjust(out.p);
    return out;
}

/// One column per subject holding its rounded mean counts.
inline LongitudinalDataset merge_by_subject(const LongitudinalDataset& ds) {
    CountMatrix cm;
    cm.taxa_ids = ds.counts.taxa_ids;
    cm.counts = Matrix<count_t>(ds.n_taxa(), ds.n_subjects());
    SampleTable meta;
    meta.group_labels = ds.meta.group_labels;
    for (std::size_t j = 0; j < ds.n_subjects(); ++j) {
        const auto& v = ds.subjects[j];
        cm.sample_ids.push_back(v.subject_id);
        meta.rows.push_back({v.subject_id, v.subject_id, 1, v.group});
        for (std::size_t i = 0; i < ds.n_taxa(); ++i) {
            double sum = 0.0;
            for (auto c : v.columns) sum += static_cast<double>(ds.counts.counts(i, c));
            cm.counts(i, j) = static_cast<count_t>(std::round(sum / static_cast<double>(v.q())));
        }
    }
    return assemble(std::move(cm), meta);
}

inline BaselineResult mbs_test(const LongitudinalDataset& ds) {
    const auto per = ds.subjects_per_group();
    if (per[0] < 2 || per[1] < 2)
        throw ValidationError("baselines", "merge-by-subject needs at least 2 subjects per group");
    return nb_wald_test(merge_by_subject(ds));
}

inline BaselineResult pis_test(const LongitudinalDataset& ds) {
    std::size_t n[2] = {0, 0};
    for (std::size_t s = 0; s < ds.n_samples(); ++s) ++n[ds.column_group(s)];
    if (n[0] < 2 || n[1] < 2)
        throw ValidationError("baselines", "independent-samples test needs at least 2 samples per group");
    return nb_wald_test(ds);
}

/// Results table on the log2 scale with Wald intervals.
inline ResultsTable baseline_results(const BaselineResult& r, const RunMetadata& meta) {
    std::vector<Interval> ci(r.lfc.size());
    constexpr double z = 1.959963984540054;
    for (std::size_t i = 0; i < ci.size(); ++i) {
        const double half = std::isfinite(r.se[i]) ? z * r.se[i] : std::numeric_limits<double>::infinity();
        ci[i] = {r.lfc[i] - half, r.lfc[i] + half};
    }
    return assemble_results(r.taxa, r.lfc, ci, r.p, r.p_adj, meta);
}

}  // namespace longboot
