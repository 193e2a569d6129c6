#pragma once

// Moving-block resampling within subjects and the nested (double) bootstrap of
// the studentized group effect.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/matrix.hpp"
#include "longboot/parallel.hpp"
#include "longboot/pipeline.hpp"
#include "longboot/rng.hpp"

namespace longboot {

/// Number of overlapping blocks L and of drawn blocks L0 for one series.
struct SubjectBlocks {
    std::size_t block_len;  ///< min(l, q): a block longer than the series is the series
    std::size_t n_blocks;   ///< L = q - block_len + 1
    std::size_t n_draws;    ///< L0 = ceil(q / block_len)
};

inline SubjectBlocks subject_blocks(std::size_t q, std::size_t l) {
    if (q == 0 || l == 0) throw ValidationError("mbb_engine", "series length and block size must be >= 1");
    const std::size_t len = std::min(l, q);
    return {len, q - len + 1, (q + len - 1) / len};
}

struct BlockPlan {
    std::size_t l = 1;
    std::vector<SubjectBlocks> subjects;
};

inline BlockPlan make_block_plan(const LongitudinalDataset& ds, std::size_t l) {
    BlockPlan plan{l, {}};
    for (const auto& v : ds.subjects) plan.subjects.push_back(subject_blocks(v.q(), l));
    return plan;
}

/**
 * Draw L0 block starts uniformly from {0..L-1}, concatenate the blocks and keep
 * the first q positions. Returned values index the subject's ordered series.
 */
template <class Urbg>
void resample_subject_indices(std::size_t q, std::size_t l, Urbg& rng, std::vector<std::size_t>& out) {
    const auto sb = subject_blocks(q, l);
    out.clear();
    for (std::size_t d = 0; d < sb.n_draws; ++d) {
        const std::size_t start = uniform_below(rng, static_cast<std::uint32_t>(sb.n_blocks));
        for (std::size_t k = 0; k < sb.block_len && out.size() < q; ++k) out.push_back(start + k);
    }
}

template <class Urbg>
std::vector<std::size_t> resample_subject_indices(std::size_t q, std::size_t l, Urbg& rng) {
    std::vector<std::size_t> out;
    resample_subject_indices(q, l, rng, out);
    return out;
}

/// Resample every subject of `src` independently into `dst` (same layout).
inline void realize_panel(const Panel& src, std::size_t l, const StreamKey& key, Panel& dst,
                          std::vector<std::size_t>& idx) {
    dst.offsets = src.offsets;
    dst.subject_group = src.subject_group;
    dst.columns.resize(src.columns.size());
    for (std::size_t j = 0; j < src.n_subjects(); ++j) {
        PhiloxStream rng(key.with_subject(static_cast<std::uint32_t>(j)));
        const auto series = src.subject(j);
        resample_subject_indices(series.size(), l, rng, idx);
        for (std::size_t p = 0; p < idx.size(); ++p) dst.columns[src.offsets[j] + p] = series[idx[p]];
    }
}

/// One pairwise MBB realization: same shape, each subject keeps its covariate.
inline LongitudinalDataset mbb_realization(const LongitudinalDataset& ds, std::size_t l,
                                           const StreamKey& key) {
    const Panel src = full_panel(ds);
    Panel dst;
    std::vector<std::size_t> idx;
    realize_panel(src, l, key, dst, idx);
    return materialize(ds, dst);
}

struct BootstrapOptions {
    std::size_t outer_reps = 200;  ///< R
    std::size_t inner_reps = 50;   ///< RR
    std::uint64_t seed = 1;
    unsigned threads = 1;
    EstimatorOptions estimator;
};

/// Outcome of the nested bootstrap; matrices are taxa x R.
struct BootstrapDistribution {
    std::size_t block_size = 1;
    std::size_t outer_reps = 0;
    std::size_t inner_reps = 0;
    std::uint64_t seed = 0;

    std::vector<double> beta_hat;  ///< observed shrunken estimates
    std::vector<double> se_outer;  ///< sd of beta_star rows (floored)
    Matrix<double> beta_star;
    Matrix<double> t_star;
    Matrix<double> se_inner;
    std::size_t floored_se_count = 0;
    std::size_t redraws = 0;

    [[nodiscard]] std::size_t n_taxa() const noexcept { return beta_hat.size(); }

    /// Observed studentized statistic beta_hat / se_outer (null effect zero).
    [[nodiscard]] std::vector<double> observed_t() const {
        std::vector<double> t(beta_hat.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = studentize(beta_hat[i], 0.0, se_outer[i]);
        return t;
    }
};

namespace detail {

inline constexpr std::uint32_t kMaxRedraws = 10;

/// Realize and estimate; degenerate realizations are redrawn on the next substream.
inline std::uint32_t realize_and_estimate(const PreparedData& data, const Panel& src, std::size_t l,
                                          StreamKey key, Panel& dst, std::vector<std::size_t>& idx,
                                          Workspace& ws, Estimate& est) {
    for (std::uint32_t attempt = 0;; ++attempt) {
        key.attempt = attempt;
        realize_panel(src, l, key, dst, idx);
        try {
            estimate(data, dst.columns, ws, est);
            return attempt;
        } catch (const NumericalError&) {
            if (attempt >= kMaxRedraws)
                throw NumericalError("mbb_engine", "bootstrap replicate failed after " +
                                                       std::to_string(kMaxRedraws) + " redraws");
        }
    }
}

}  // namespace detail

/**
 * Nested moving-block bootstrap on a panel.
 *
 * For each outer replicate r a realization is drawn and the full estimator is
 * rerun (beta_star). RR inner realizations of that realization give
 * SE_*(beta_star), and t_star = (beta_star - beta_hat) / SE_*. Results are
 * written to fixed slots, so they do not depend on the thread count.
 */
inline BootstrapDistribution bootstrap_panel(const PreparedData& data, const Panel& panel,
                                             std::size_t l, const BootstrapOptions& opts) {
    if (l < 1) throw ValidationError("mbb_engine", "block size must be >= 1");
    if (opts.outer_reps < 2 || opts.inner_reps < 2)
        throw ValidationError("mbb_engine", "outer and inner replicate counts must be >= 2");
    if (opts.inner_reps > 0xFFFFFFu)
        throw ValidationError("mbb_engine", "inner replicate count too large");

    const std::size_t R = opts.outer_reps;
    const std::size_t RR = opts.inner_reps;

    BootstrapDistribution dist;
    dist.block_size = l;
    dist.outer_reps = R;
    dist.inner_reps = RR;
    dist.seed = opts.seed;
    {
        Workspace ws;
        Estimate est;
        estimate(data, panel.columns, ws, est);
        dist.beta_hat = std::move(est.beta);
    }
    const std::size_t m = dist.beta_hat.size();
    dist.beta_star = Matrix<double>(m, R);
    dist.t_star = Matrix<double>(m, R);
    dist.se_inner = Matrix<double>(m, R);

    std::vector<std::size_t> floored(R, 0);
    std::vector<std::size_t> redraws(R, 0);

    parallel_for(R, opts.threads, [&](std::size_t r) {
        Workspace ws;
        Estimate outer_est;
        Estimate inner_est;
        Panel outer;
        Panel inner;
        std::vector<std::size_t> idx;
        std::vector<double> mean(m);
        std::vector<double> m2(m);

        StreamKey key{opts.seed, StreamLevel::outer, static_cast<std::uint32_t>(r), 0, 0, 0};
        redraws[r] += detail::realize_and_estimate(data, panel, l, key, outer, idx, ws, outer_est);

        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(m2.begin(), m2.end(), 0.0);
        for (std::size_t rr = 0; rr < RR; ++rr) {
            StreamKey ikey{opts.seed, StreamLevel::inner, static_cast<std::uint32_t>(r),
                           static_cast<std::uint32_t>(rr), 0, 0};
            redraws[r] += detail::realize_and_estimate(data, outer, l, ikey, inner, idx, ws, inner_est);
            const double k = static_cast<double>(rr + 1);
            for (std::size_t i = 0; i < m; ++i) {
                const double d = inner_est.beta[i] - mean[i];
                mean[i] += d / k;
                m2[i] += d * (inner_est.beta[i] - mean[i]);
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double se = floor_se(std::sqrt(m2[i] / static_cast<double>(RR - 1)), floored[r]);
            dist.beta_star(i, r) = outer_est.beta[i];
            dist.se_inner(i, r) = se;
            dist.t_star(i, r) = studentize(outer_est.beta[i], dist.beta_hat[i], se);
        }
    });

    for (std::size_t r = 0; r < R; ++r) {
        dist.floored_se_count += floored[r];
        dist.redraws += redraws[r];
    }
    dist.se_outer.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = dist.beta_star.row(i);
        double mu = 0.0;
        for (double v : row) mu += v;
        mu /= static_cast<double>(R);
        double ss = 0.0;
        for (double v : row) ss += (v - mu) * (v - mu);
        dist.se_outer[i] = floor_se(std::sqrt(ss / static_cast<double>(R - 1)), dist.floored_se_count);
    }
    return dist;
}

inline BootstrapDistribution bootstrap_distribution(const LongitudinalDataset& ds, std::size_t l,
                                                    const BootstrapOptions& opts) {
    const PreparedData data(ds, opts.estimator);
    return bootstrap_panel(data, full_panel(ds), l, opts);
}

/// Monte-Carlo p-value (1 + #{|t*| >= |t_obs|}) / (R + 1) per taxon.
inline std::vector<double> p_values(std::span<const double> t_obs, const BootstrapDistribution& dist) {
    if (t_obs.size() != dist.n_taxa())
        throw ValidationError("mbb_engine", "observed statistics do not match the distribution");
    const std::size_t R = dist.t_star.cols();
    std::vector<double> p(t_obs.size());
    for (std::size_t i = 0; i < t_obs.size(); ++i) {
        const double k = std::abs(t_obs[i]);
        std::size_t exceed = 0;
        for (double t : dist.t_star.row(i)) exceed += std::abs(t) >= k ? 1 : 0;
        p[i] = static_cast<double>(1 + exceed) / static_cast<double>(R + 1);
    }
    return p;
}

/// Type-7 (linear interpolation) quantile of ascending-sorted data.
inline double quantile_type7(std::span<const double> sorted, double gamma) {
    if (sorted.empty()) throw ValidationError("mbb_engine", "quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * gamma;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Interval {
    double lcl = 0.0;
    double ucl = 0.0;
};

/// Bootstrap-t intervals: (b - t_{1-a/2} se, b - t_{a/2} se) with se = se_outer.
inline std::vector<Interval> conf_intervals(std::span<const double> beta_hat,
                                            const BootstrapDistribution& dist, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("mbb_engine", "alpha must lie in (0, 1)");
    if (beta_hat.size() != dist.n_taxa())
        throw ValidationError("mbb_engine", "estimates do not match the distribution");
    std::vector<Interval> ci(beta_hat.size());
    std::vector<double> sorted;
    for (std::size_t i = 0; i < beta_hat.size(); ++i) {
        const auto row = dist.t_star.row(i);
        sorted.assign(row.begin(), row.end());
        std::sort(sorted.begin(), sorted.end());
        const double t_hi = quantile_type7(sorted, 1.0 - alpha / 2.0);
        const double t_lo = quantile_type7(sorted, alpha / 2.0);
        ci[i] = {beta_hat[i] - t_hi * dist.se_outer[i], beta_hat[i] - t_lo * dist.se_outer[i]};
    }
    return ci;
}

}  // namespace longboot
