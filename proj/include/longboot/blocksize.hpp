#pragma once

// Optimal block size by empirical subsampling of the two-sided bootstrap
// probability, with the rate-based scale-up to the full series length.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/io.hpp"
#include "longboot/matrix.hpp"
#include "longboot/mbb.hpp"
#include "longboot/parallel.hpp"
#include "longboot/pipeline.hpp"
#include "longboot/rng.hpp"

namespace longboot {

/// #{r : |t_star_r| >= |k|} / R.
inline double two_sided_prob(std::span<const double> t_star, double k) {
    if (t_star.empty()) throw ValidationError("blocksize_selector", "empty bootstrap sample");
    const double ak = std::abs(k);
    std::size_t hits = 0;
    for (double t : t_star) hits += std::abs(t) >= ak ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(t_star.size());
}

/**
 * Subsample size: a count of consecutive observations, or a proportion of the
 * longest series (the form used for ragged panels).
 */
struct Omega {
    enum class Mode { count, proportion };
    Mode mode = Mode::count;
    double value = 0.0;

    static Omega count(std::size_t n) { return {Mode::count, static_cast<double>(n)}; }
    static Omega proportion(double p) { return {Mode::proportion, p}; }

    /// "6" is a count, "0.7" a proportion.
    static Omega parse(const std::string& text) {
        const auto t = std::string(io::trim(text));
        if (t.find_first_of(".eE") == std::string::npos) {
            const auto v = io::parse_int(t);
            if (!v || *v < 1) throw UsageError("blocksize_selector", "omega must be a positive count or a proportion in (0, 1]");
            return count(static_cast<std::size_t>(*v));
        }
        const auto v = io::parse_double(t);
        if (!v || !(*v > 0.0 && *v <= 1.0))
            throw UsageError("blocksize_selector", "omega proportion must lie in (0, 1]");
        return proportion(*v);
    }

    [[nodiscard]] bool is_proportion() const noexcept { return mode == Mode::proportion; }
    [[nodiscard]] std::string str() const {
        return is_proportion() ? io::format_double(value) : std::to_string(static_cast<std::size_t>(value));
    }
};

/// Window length in observations for a panel whose longest series has q_max points.
inline std::size_t window_length(const Omega& omega, std::size_t q_max) {
    if (!omega.is_proportion()) return static_cast<std::size_t>(omega.value);
    const auto w = static_cast<std::size_t>(std::round(omega.value * static_cast<double>(q_max)));
    return std::clamp<std::size_t>(w, 1, q_max);
}

/**
 * Subsample j takes positions j..j+w-1 of every subject. A subject shorter than
 * the window start range uses its last w positions; one shorter than w is
 * kept whole. W = q_max - w + 1.
 */
inline std::vector<Panel> subsample_panels(const LongitudinalDataset& ds, const Omega& omega) {
    if (ds.n_subjects() == 0) throw ValidationError("blocksize_selector", "dataset has no subjects");
    const std::size_t q_min = ds.min_q();
    const std::size_t q_max = ds.max_q();
    if (!omega.is_proportion()) {
        if (omega.value < 1.0 || omega.value > static_cast<double>(q_min))
            throw ValidationError("blocksize_selector",
                                  "omega " + omega.str() + " outside [1, " + std::to_string(q_min) + "]");
    } else if (!(omega.value > 0.0 && omega.value <= 1.0)) {
        throw ValidationError("blocksize_selector", "omega proportion must lie in (0, 1]");
    }
    const std::size_t w = window_length(omega, q_max);
    const std::size_t n_windows = q_max - w + 1;

    std::vector<Panel> out(n_windows);
    for (std::size_t j = 0; j < n_windows; ++j) {
        for (const auto& v : ds.subjects) {
            const std::span<const std::size_t> cols(v.columns);
            if (v.q() < w) {
                out[j].add_subject(cols, v.group);
            } else {
                const std::size_t start = std::min(j, v.q() - w);
                out[j].add_subject(cols.subspan(start, w), v.group);
            }
        }
    }
    return out;
}

inline std::vector<LongitudinalDataset> make_subsamples(const LongitudinalDataset& ds, const Omega& omega) {
    std::vector<LongitudinalDataset> out;
    for (const auto& p : subsample_panels(ds, omega)) out.push_back(materialize(ds, p));
    return out;
}

struct MseProfile {
    std::vector<std::size_t> candidates;
    Matrix<double> mse;              ///< taxa x candidates
    std::vector<double> l1_norms;    ///< column sums of mse
    std::vector<double> psi_full;    ///< per taxon, full data at l_initial
    std::vector<Matrix<double>> psi_sub;  ///< per candidate: windows x taxa
    std::size_t n_windows = 0;
    std::size_t l_initial = 0;
    Omega omega;
};

/// MSE_i(c) = sum_j (psi_full_i - psi_sub[c](j, i))^2 / W and the l1 norms.
inline void fill_mse(MseProfile& p) {
    const std::size_t m = p.psi_full.size();
    const std::size_t nc = p.candidates.size();
    p.mse = Matrix<double>(m, nc);
    p.l1_norms.assign(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
        const auto& sub = p.psi_sub[c];
        const double w = static_cast<double>(sub.rows());
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < sub.rows(); ++j) {
                const double d = p.psi_full[i] - sub(j, i);
                acc += d * d;
            }
            p.mse(i, c) = acc / w;
            p.l1_norms[c] += p.mse(i, c);
        }
    }
}

/// Seed of the bootstrap run on the full data at the initial block size.
inline std::uint64_t full_run_seed(std::uint64_t seed) { return derive_seed(seed, 0xB10C0001ull); }

/// Seed of the bootstrap run on window j at candidate index c.
inline std::uint64_t subsample_seed(std::uint64_t seed, std::size_t window, std::size_t candidate) {
    return derive_seed(seed, 0xB10C0002ull, (static_cast<std::uint64_t>(window) << 20) | candidate);
}

inline std::vector<std::size_t> default_candidates(std::size_t l_initial) {
    std::vector<std::size_t> c;
    for (std::size_t l = 2; l < l_initial; ++l) c.push_back(l);
    return c;
}

/// Largest omega leaving at least five windows (or one observation if q < 5).
inline Omega default_omega(const LongitudinalDataset& ds) {
    const std::size_t q_max = ds.max_q();
    const std::size_t w = q_max > 5 ? q_max - 4 : 1;
    if (ds.equal_q()) return Omega::count(w);
    return Omega::proportion(static_cast<double>(w) / static_cast<double>(q_max));
}

struct MseOptions {
    std::size_t l_initial = 0;
    std::vector<std::size_t> candidates;  ///< empty: {2, ..., l_initial - 1}
    std::optional<Omega> omega;           ///< unset: default_omega
    BootstrapOptions bootstrap;           ///< R, RR, seed, threads for every run
};

/**
 * psi on the full data at l_initial, then on every window for every candidate,
 * with k fixed at the full-data studentized statistic.
 */
inline MseProfile mse_profile(const LongitudinalDataset& ds, const MseOptions& opts) {
    MseProfile prof;
    prof.l_initial = opts.l_initial;
    prof.candidates = opts.candidates.empty() ? default_candidates(opts.l_initial) : opts.candidates;
    if (prof.candidates.empty())
        throw ValidationError("blocksize_selector", "candidate list is empty (initial block size must exceed 2)");
    for (auto l : prof.candidates)
        if (!(l > 1 && l < opts.l_initial))
            throw ValidationError("blocksize_selector", "candidate block size " + std::to_string(l) +
                                                            " must satisfy 1 < l < " +
                                                            std::to_string(opts.l_initial));
    prof.omega = opts.omega.value_or(default_omega(ds));

    const PreparedData data(ds, opts.bootstrap.estimator);
    const auto windows = subsample_panels(ds, prof.omega);
    prof.n_windows = windows.size();

    BootstrapOptions full_opts = opts.bootstrap;
    full_opts.seed = full_run_seed(opts.bootstrap.seed);
    const auto full = bootstrap_panel(data, full_panel(ds), opts.l_initial, full_opts);
    const auto k = full.observed_t();
    const std::size_t m = ds.n_taxa();
    prof.psi_full.resize(m);
    for (std::size_t i = 0; i < m; ++i) prof.psi_full[i] = two_sided_prob(full.t_star.row(i), k[i]);

    const std::size_t nc = prof.candidates.size();
    const std::size_t nw = windows.size();
    prof.psi_sub.assign(nc, Matrix<double>(nw, m));
    parallel_for(nc * nw, opts.bootstrap.threads, [&](std::size_t cell) {
        const std::size_t c = cell / nw;
        const std::size_t j = cell % nw;
        BootstrapOptions o = opts.bootstrap;
        o.seed = subsample_seed(opts.bootstrap.seed, j, c);
        o.threads = 1;
        const auto d = bootstrap_panel(data, windows[j], prof.candidates[c], o);
        for (std::size_t i = 0; i < m; ++i) prof.psi_sub[c](j, i) = two_sided_prob(d.t_star.row(i), k[i]);
    });
    fill_mse(prof);
    return prof;
}

/// Candidate with the smallest l1 norm; ties go to the smaller block size.
inline std::size_t select_block_size(const MseProfile& p) {
    if (p.candidates.empty() || p.l1_norms.size() != p.candidates.size())
        throw ValidationError("blocksize_selector", "empty MSE profile");
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.candidates.size(); ++c) {
        if (p.l1_norms[c] < p.l1_norms[best] ||
            (p.l1_norms[c] == p.l1_norms[best] && p.candidates[c] < p.candidates[best]))
            best = c;
    }
    return p.candidates[best];
}

/**
 * l_o = round(f^(1/nu) * l_sub) with f = q / omega (count) or 1 / omega
 * (proportion); rounded half away from zero and clamped to [2, q_min].
 */
inline std::size_t scale_up(std::size_t l_sub, std::size_t q, const Omega& omega, std::size_t q_min,
                            unsigned nu = 5) {
    if (nu < 1) throw ValidationError("blocksize_selector", "nu must be >= 1");
    if (!(omega.value > 0.0)) throw ValidationError("blocksize_selector", "omega must be positive");
    const double f = omega.is_proportion() ? 1.0 / omega.value : static_cast<double>(q) / omega.value;
    const double l = std::round(std::pow(f, 1.0 / static_cast<double>(nu)) * static_cast<double>(l_sub));
    auto out = static_cast<std::size_t>(std::max(2.0, l));
    return std::max<std::size_t>(1, std::min(out, q_min));
}

struct BlockSizeChoice {
    std::size_t l_subsample = 0;
    std::size_t l_full = 0;
    unsigned nu = 5;
    MseProfile profile;
};

inline BlockSizeChoice select_optimal_block(const LongitudinalDataset& ds, const MseOptions& opts,
                                            unsigned nu = 5) {
    BlockSizeChoice out;
    out.nu = nu;
    out.profile = mse_profile(ds, opts);
    out.l_subsample = select_block_size(out.profile);
    out.l_full = scale_up(out.l_subsample, ds.max_q(), out.profile.omega, ds.min_q(), nu);
    return out;
}

}  // namespace longboot
