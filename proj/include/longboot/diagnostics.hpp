#pragma once

// Partial-autocorrelation profiles and the initial block-size heuristic,
// lag-pair tables, and the pivotality check under a dispersion perturbation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/io.hpp"
#include "longboot/mbb.hpp"
#include "longboot/preprocess.hpp"
#include "longboot/rng.hpp"

namespace longboot {

/**
 * Partial autocorrelations at lags 1..max_lag by Durbin-Levinson on the biased
 * sample autocovariances. A zero-variance series yields zeros and sets
 * `degenerate`.
 */
inline std::vector<double> pacf(std::span<const double> x, std::size_t max_lag, bool& degenerate) {
    const std::size_t n = x.size();
    std::vector<double> pac(max_lag, 0.0);
    degenerate = false;
    if (n < 2 || max_lag == 0) {
        degenerate = n < 2;
        return pac;
    }
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    std::vector<double> acov(max_lag + 1, 0.0);
    for (std::size_t h = 0; h <= max_lag && h < n; ++h) {
        double s = 0.0;
        for (std::size_t t = 0; t + h < n; ++t) s += (x[t] - mean) * (x[t + h] - mean);
        acov[h] = s / static_cast<double>(n);
    }
    if (!(acov[0] > 1e-20 * (1.0 + mean * mean))) {
        degenerate = true;
        return pac;
    }
    std::vector<double> phi(max_lag + 1, 0.0);
    std::vector<double> prev(max_lag + 1, 0.0);
    double v = acov[0];
    for (std::size_t k = 1; k <= max_lag && k < n; ++k) {
        double num = acov[k];
        for (std::size_t j = 1; j < k; ++j) num -= prev[j] * acov[k - j];
        if (!(v > 0.0)) break;
        const double a = std::clamp(num / v, -1.0, 1.0);
        phi[k] = a;
        for (std::size_t j = 1; j < k; ++j) phi[j] = prev[j] - a * prev[k - j];
        v *= 1.0 - a * a;
        pac[k - 1] = a;
        prev = phi;
    }
    return pac;
}

enum class PacMode {
    group_mean,       ///< PAC of the across-subject mean series per group
    subject_average,  ///< mean of per-subject PACs
};

struct PacEntry {
    std::size_t taxon = 0;
    int group = 0;
    std::size_t lag = 0;
    double pac = 0.0;
    std::size_t pairs = 0;  ///< within-subject (t, t+lag) pairs in this group
    bool degenerate = false;
};

struct PacTable {
    std::vector<std::size_t> taxa;  ///< selected taxa, most abundant first
    std::size_t max_lag = 0;
    std::vector<PacEntry> entries;
    std::vector<std::string> warnings;
};

/// Indices of the k taxa with largest total transformed abundance (ties: lower index).
inline std::vector<std::size_t> top_taxa(const TransformedMatrix& tm, std::size_t k) {
    const std::size_t m = tm.values.rows();
    std::vector<double> total(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (double v : tm.values.row(i)) total[i] += v;
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
    idx.resize(std::min(k, m));
    return idx;
}

inline PacTable pac_profile(const LongitudinalDataset& ds, const TransformedMatrix& tm, std::size_t top_k,
                            std::size_t max_lag, PacMode mode = PacMode::group_mean) {
    if (tm.values.rows() != ds.n_taxa() || tm.values.cols() != ds.n_samples())
        throw ValidationError("diagnostics", "transformed matrix does not match dataset shape");
    if (top_k == 0) throw ValidationError("diagnostics", "top_k must be >= 1");
    if (max_lag == 0) throw ValidationError("diagnostics", "max_lag must be >= 1");
    PacTable table;
    table.taxa = top_taxa(tm, top_k);
    table.max_lag = max_lag;
    if (max_lag >= ds.min_q()) {
        std::ostringstream msg;
        msg << "max_lag " << max_lag << " is not below the shortest series length " << ds.min_q()
            << "; lags beyond a series' length are truncated";
        table.warnings.push_back(msg.str());
    }

    std::array<std::vector<const SubjectView*>, 2> by_group;
    for (const auto& v : ds.subjects) by_group[static_cast<std::size_t>(v.group)].push_back(&v);

    std::vector<double> series;
    for (std::size_t i : table.taxa) {
        const auto row = tm.values.row(i);
        for (int g = 0; g < 2; ++g) {
            const auto& subs = by_group[static_cast<std::size_t>(g)];
            if (subs.empty()) continue;
            std::size_t q_max = 0;
            for (const auto* v : subs) q_max = std::max(q_max, v->q());

            std::vector<double> pac(max_lag, 0.0);
            bool degenerate = false;
            std::size_t usable_lags = 0;
            if (mode == PacMode::group_mean) {
                series.assign(q_max, 0.0);
                std::vector<double> n_at(q_max, 0.0);
                for (const auto* v : subs)
                    for (std::size_t t = 0; t < v->q(); ++t) {
                        series[t] += row[v->columns[t]];
                        n_at[t] += 1.0;
                    }
                for (std::size_t t = 0; t < q_max; ++t) series[t] /= n_at[t];
                usable_lags = std::min(max_lag, q_max - 1);
                pac = pacf(series, usable_lags, degenerate);
                pac.resize(max_lag, 0.0);
            } else {
                std::vector<double> n_lag(max_lag, 0.0);
                std::size_t n_degenerate = 0;
                for (const auto* v : subs) {
                    if (v->q() < 2) continue;
                    series.clear();
                    for (auto c : v->columns) series.push_back(row[c]);
                    const std::size_t h = std::min(max_lag, v->q() - 1);
                    bool d = false;
                    const auto p = pacf(series, h, d);
                    if (d) {
                        ++n_degenerate;
                        continue;
                    }
                    for (std::size_t k = 0; k < h; ++k) {
                        pac[k] += p[k];
                        n_lag[k] += 1.0;
                    }
                    usable_lags = std::max(usable_lags, h);
                }
                for (std::size_t k = 0; k < max_lag; ++k)
                    if (n_lag[k] > 0.0) pac[k] /= n_lag[k];
                degenerate = n_degenerate == subs.size();
            }
            for (std::size_t h = 1; h <= max_lag; ++h) {
                std::size_t pairs = 0;
                for (const auto* v : subs) pairs += v->q() > h ? v->q() - h : 0;
                table.entries.push_back({i, g, h, h <= usable_lags ? pac[h - 1] : 0.0, pairs, degenerate});
            }
        }
    }
    return table;
}

/// Lags supported by fewer within-subject pairs than this are treated as spurious.
inline constexpr std::size_t kMinLagPairs = 4;

struct InitialBlock {
    std::size_t l = 0;
    std::size_t lag = 0;  ///< qualifying lag, 0 when none qualified
    std::string warning;
};

/**
 * h* is the smallest lag at which every supported (taxon, group) entry has
 * |pac| < threshold; the suggestion is h* + 1.
 */
inline InitialBlock suggest_initial_block(const PacTable& table, double threshold = 0.25) {
    if (table.entries.empty()) throw ValidationError("diagnostics", "empty PAC table");
    for (std::size_t h = 1; h <= table.max_lag; ++h) {
        bool supported = false;
        bool below = true;
        for (const auto& e : table.entries) {
            if (e.lag != h || e.pairs < kMinLagPairs) continue;
            supported = true;
            if (!(std::abs(e.pac) < threshold)) {
                below = false;
                break;
            }
        }
        if (supported && below) return {h + 1, h, {}};
    }
    return {table.max_lag + 1, 0,
            "no lag up to " + std::to_string(table.max_lag) + " has all PAC below " + io::format_double(threshold)};
}

struct LagPair {
    std::string subject_id;
    int group = 0;
    std::size_t lag = 0;
    double x_t = 0.0;
    double x_t_plus_h = 0.0;
};

inline std::vector<LagPair> lag_table(const TransformedMatrix& tm, const LongitudinalDataset& ds,
                                      std::size_t taxon, std::span<const std::size_t> lags) {
    if (taxon >= tm.values.rows()) throw ValidationError("diagnostics", "taxon index out of range");
    std::vector<LagPair> out;
    const auto row = tm.values.row(taxon);
    for (std::size_t h : lags) {
        if (h == 0) throw ValidationError("diagnostics", "lags must be >= 1");
        for (const auto& v : ds.subjects)
            for (std::size_t t = 0; t + h < v.q(); ++t)
                out.push_back({v.subject_id, v.group, h, row[v.columns[t]], row[v.columns[t + h]]});
    }
    return out;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_distance(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw ValidationError("diagnostics", "KS distance of an empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return d;
}

/// Gamma-Poisson with mean mu and dispersion alpha (variance mu + alpha mu^2).
struct GammaPoisson {
    double mu = 0.0;
    double alpha = 0.0;

    /// P(Y <= k); k < 0 gives 0.
    [[nodiscard]] double cdf(double k) const {
        if (k < 0.0) return 0.0;
        if (mu <= 0.0) return 1.0;
        if (alpha <= 0.0) return boost::math::gamma_q(k + 1.0, mu);
        const double r = 1.0 / alpha;
        return boost::math::ibeta(r, k + 1.0, r / (r + mu));
    }

    /// Smallest k with cdf(k) >= u.
    [[nodiscard]] double quantile(double u) const {
        if (mu <= 0.0 || u <= 0.0) return 0.0;
        if (cdf(0.0) >= u) return 0.0;
        double hi = std::max(1.0, std::ceil(mu));
        while (cdf(hi) < u) {
            hi *= 2.0;
            if (hi > 1e15) return hi;
        }
        double lo = 0.0;  // cdf(lo) < u <= cdf(hi)
        while (hi - lo > 1.0) {
            const double mid = std::floor((lo + hi) / 2.0);
            if (cdf(mid) >= u)
                hi = mid;
            else
                lo = mid;
        }
        return hi;
    }
};

/// Moment fit: alpha = max(0, (var - mean) / mean^2), sample variance with n - 1.
inline GammaPoisson fit_gamma_poisson(std::span<const double> y) {
    GammaPoisson gp;
    if (y.empty()) return gp;
    const double n = static_cast<double>(y.size());
    gp.mu = std::accumulate(y.begin(), y.end(), 0.0) / n;
    if (y.size() < 2 || gp.mu <= 0.0) return gp;
    double ss = 0.0;
    for (double v : y) ss += (v - gp.mu) * (v - gp.mu);
    const double var = ss / (n - 1.0);
    gp.alpha = std::max(0.0, (var - gp.mu) / (gp.mu * gp.mu));
    return gp;
}

/**
 * Copy of `ds` whose counts follow a gamma-Poisson with the dispersion scaled
 * by `factor` (per taxon and group, same mean). Each count is mapped through
 * its randomized probability integral transform, so the within-subject ordering
 * of the original series, and with it the serial dependence, is retained.
 */
inline LongitudinalDataset perturb_dispersion(const LongitudinalDataset& ds, double factor, std::uint64_t seed) {
    if (!(factor > 0.0) || !std::isfinite(factor))
        throw ValidationError("diagnostics", "variance perturbation must be positive");
    LongitudinalDataset out = ds;
    std::vector<double> y;
    for (std::size_t i = 0; i < ds.n_taxa(); ++i) {
        PhiloxStream rng(StreamKey{seed, StreamLevel::perturb, static_cast<std::uint32_t>(i), 0, 0, 0});
        for (int g = 0; g < 2; ++g) {
            y.clear();
            for (std::size_t s = 0; s < ds.n_samples(); ++s)
                if (ds.column_group(s) == g) y.push_back(static_cast<double>(ds.counts.counts(i, s)));
            if (y.empty()) continue;
            const GammaPoisson fitted = fit_gamma_poisson(y);
            const GammaPoisson target{fitted.mu, fitted.alpha * factor};
            for (std::size_t s = 0; s < ds.n_samples(); ++s) {
                if (ds.column_group(s) != g) continue;
                const double v = static_cast<double>(ds.counts.counts(i, s));
                const double lo = fitted.cdf(v - 1.0);
                const double hi = fitted.cdf(v);
                const double u = std::clamp(lo + uniform01(rng) * (hi - lo), 1e-300, 1.0 - 1e-16);
                out.counts.counts(i, s) = static_cast<count_t>(target.quantile(u));
            }
        }
    }
    return out;
}

struct PivotOptions {
    std::size_t block_size = 2;
    std::size_t quantile_points = 99;
    BootstrapOptions bootstrap;
    std::uint64_t perturb_seed = 1;
};

struct PivotTaxon {
    double ks_t = 0.0;     ///< KS between studentized bootstrap samples
    double ks_root = 0.0;  ///< KS between beta_star - beta_hat samples
    std::vector<double> q_original;
    std::vector<double> q_perturbed;
};

struct PivotCheck {
    std::vector<PivotTaxon> taxa;
    double mean_ks_t = 0.0;
    double mean_ks_root = 0.0;
};

/// beta_star - beta_hat per taxon.
inline Matrix<double> bootstrap_roots(const BootstrapDistribution& d) {
    Matrix<double> out(d.beta_star.rows(), d.beta_star.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t r = 0; r < out.cols(); ++r) out(i, r) = d.beta_star(i, r) - d.beta_hat[i];
    return out;
}

/// Compare bootstrap pivots of two distributions over the same taxa.
inline PivotCheck compare_pivots(const BootstrapDistribution& a, const BootstrapDistribution& b,
                                 std::size_t quantile_points) {
    if (a.n_taxa() != b.n_taxa()) throw ValidationError("diagnostics", "pivot samples cover different taxa");
    PivotCheck out;
    const auto ra = bootstrap_roots(a);
    const auto rb = bootstrap_roots(b);
    std::vector<double> sa;
    std::vector<double> sb;
    for (std::size_t i = 0; i < a.n_taxa(); ++i) {
        PivotTaxon t;
        t.ks_t = ks_distance(a.t_star.row(i), b.t_star.row(i));
        t.ks_root = ks_distance(ra.row(i), rb.row(i));
        const auto ta = a.t_star.row(i);
        const auto tb = b.t_star.row(i);
        sa.assign(ta.begin(), ta.end());
        sb.assign(tb.begin(), tb.end());
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        for (std::size_t k = 1; k <= quantile_points; ++k) {
            const double p = static_cast<double>(k) / static_cast<double>(quantile_points + 1);
            t.q_original.push_back(quantile_type7(sa, p));
            t.q_perturbed.push_back(quantile_type7(sb, p));
        }
        out.mean_ks_t += t.ks_t;
        out.mean_ks_root += t.ks_root;
        out.taxa.push_back(std::move(t));
    }
    out.mean_ks_t /= static_cast<double>(a.n_taxa());
    out.mean_ks_root /= static_cast<double>(a.n_taxa());
    return out;
}

/// Bootstrap the original and a dispersion-perturbed copy and compare their pivots.
inline PivotCheck pivot_check(const LongitudinalDataset& ds, double perturbation, const PivotOptions& opts) {
    if (!(perturbation > 0.0)) throw ValidationError("diagnostics", "variance perturbation must be positive");
    const auto perturbed = perturb_dispersion(ds, perturbation, opts.perturb_seed);
    const auto a = bootstrap_distribution(ds, opts.block_size, opts.bootstrap);
    BootstrapOptions ob = opts.bootstrap;
    ob.seed = derive_seed(opts.bootstrap.seed, 0x50495654ull);
    const auto b = bootstrap_distribution(perturbed, opts.block_size, ob);
    return compare_pivots(a, b, opts.quantile_points);
}

/// Minimal SVG scatter/line rendering for diagnostic plots.
class SvgPlot {
public:
    SvgPlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_series(std::string name, std::vector<double> x, std::vector<double> y, bool lines) {
        series_.push_back({std::move(name), std::move(x), std::move(y), lines});
    }
    void add_hline(double y) { hlines_.push_back(y); }
    void set_diagonal(bool on) { diagonal_ = on; }

    [[nodiscard]] std::string str() const {
        constexpr double W = 640;
        constexpr double H = 480;
        constexpr double pad = 50;
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (const auto& s : series_)
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                x0 = std::min(x0, s.x[k]);
                x1 = std::max(x1, s.x[k]);
                y0 = std::min(y0, s.y[k]);
                y1 = std::max(y1, s.y[k]);
            }
        for (double h : hlines_) {
            y0 = std::min(y0, h);
            y1 = std::max(y1, h);
        }
        if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
        if (diagonal_) {
            x0 = y0 = std::min(x0, y0);
            x1 = y1 = std::max(x1, y1);
        }
        if (x1 == x0) x1 = x0 + 1;
        if (y1 == y0) y1 = y0 + 1;
        auto px = [&](double x) { return pad + (x - x0) / (x1 - x0) * (W - 2 * pad); };
        auto py = [&](double y) { return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad); };
        static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

        std::ostringstream o;
        o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
          << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
          << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title_ << "</text>\n"
          << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << x_label_ << "</text>\n"
          << "<text x=\"15\" y=\"" << H / 2 << "\" transform=\"rotate(-90 15 " << H / 2
          << ")\" text-anchor=\"middle\">" << y_label_ << "</text>\n"
          << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << W - 2 * pad << "\" height=\""
          << H - 2 * pad << "\" fill=\"none\" stroke=\"black\"/>\n";
        o << "<text x=\"" << pad << "\" y=\"" << H - pad + 15 << "\" font-size=\"10\">" << io::format_double(x0)
          << "</text><text x=\"" << W - pad << "\" y=\"" << H - pad + 15
          << "\" font-size=\"10\" text-anchor=\"end\">" << io::format_double(x1) << "</text>\n";
        o << "<text x=\"" << pad - 4 << "\" y=\"" << H - pad << "\" font-size=\"10\" text-anchor=\"end\">"
          << io::format_double(y0) << "</text><text x=\"" << pad - 4 << "\" y=\"" << pad + 10
          << "\" font-size=\"10\" text-anchor=\"end\">" << io::format_double(y1) << "</text>\n";
        if (diagonal_)
            o << "<line x1=\"" << px(x0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(y1)
              << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
        for (double h : hlines_)
            o << "<line x1=\"" << pad << "\" y1=\"" << py(h) << "\" x2=\"" << W - pad << "\" y2=\"" << py(h)
              << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
        for (std::size_t k = 0; k < series_.size(); ++k) {
            const auto& s = series_[k];
            const char* col = palette[k % 6];
            if (s.lines && !s.x.empty()) {
                o << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
                for (std::size_t p = 0; p < s.x.size(); ++p) o << px(s.x[p]) << ',' << py(s.y[p]) << ' ';
                o << "\"/>\n";
            }
            for (std::size_t p = 0; p < s.x.size(); ++p)
                o << "<circle cx=\"" << px(s.x[p]) << "\" cy=\"" << py(s.y[p]) << "\" r=\"2\" fill=\"" << col
                  << "\"/>\n";
            o << "<text x=\"" << W - pad - 5 << "\" y=\"" << pad + 15 + 14 * static_cast<double>(k)
              << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << col << "\">" << s.name << "</text>\n";
        }
        o << "</svg>\n";
        return o.str();
    }

private:
    struct Series {
        std::string name;
        std::vector<double> x;
        std::vector<double> y;
        bool lines = false;
    };
    std::string title_;
    std::string x_label_;
    std::string y_label_;
    std::vector<Series> series_;
    std::vector<double> hlines_;
    bool diagonal_ = false;
};

}  // namespace longboot
