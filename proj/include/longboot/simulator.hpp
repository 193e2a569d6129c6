#pragma once

// Longitudinal count simulation with known differential abundance, ROC
// scoring, and the benchmark loop over MBB and the two baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "longboot/baselines.hpp"
#include "longboot/blocksize.hpp"
#include "longboot/data_core.hpp"
#include "longboot/diagnostics.hpp"
#include "longboot/error.hpp"
#include "longboot/inference.hpp"
#include "longboot/io.hpp"
#include "longboot/mbb.hpp"
#include "longboot/preprocess.hpp"
#include "longboot/rng.hpp"

#ifndef LONGBOOT_DATA_DIR
#define LONGBOOT_DATA_DIR "data"
#endif

namespace longboot {

enum class DepOrder { order1, order2, mixed };
enum class Generator { thinning, rounded_ar };

inline DepOrder parse_dep_order(const std::string& s) {
    if (s == "1" || s == "order1") return DepOrder::order1;
    if (s == "2" || s == "order2") return DepOrder::order2;
    if (s == "3" || s == "mixed") return DepOrder::mixed;
    throw UsageError("simulator", "unknown dependence order '" + s + "' (use 1, 2 or mixed)");
}

inline std::string to_string(DepOrder d) {
    switch (d) {
        case DepOrder::order1: return "order1";
        case DepOrder::order2: return "order2";
        case DepOrder::mixed: return "mixed";
    }
    return "?";
}

inline Generator parse_generator(const std::string& s) {
    if (s == "thinning" || s == "inar") return Generator::thinning;
    if (s == "rounded-ar" || s == "rounded") return Generator::rounded_ar;
    throw UsageError("simulator", "unknown generator '" + s + "' (use thinning or rounded-ar)");
}

inline std::string to_string(Generator g) { return g == Generator::thinning ? "thinning" : "rounded-ar"; }

/// Innovation parameters for one taxon.
struct NbParam {
    double mean = 1.0;
    double dispersion = 0.0;
};

inline std::vector<NbParam> load_nb_params(const std::filesystem::path& path) {
    const auto t = io::read_table(path, io::delimiter_for(path, std::nullopt), "simulator");
    auto col = [&](const std::string& name) {
        const auto it = std::find(t.header.begin(), t.header.end(), name);
        if (it == t.header.end()) throw MalformedInput("simulator", path.filename().string() + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - t.header.begin());
    };
    const std::size_t cm = col("mean");
    const std::size_t cd = col("dispersion");
    std::vector<NbParam> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto mu = io::parse_double(t.rows[r][cm]);
        const auto a = io::parse_double(t.rows[r][cd]);
        if (!mu || !a || !(*mu > 0.0) || !(*a >= 0.0))
            throw ValidationError("simulator", path.filename().string() + " row " + std::to_string(t.line_numbers[r]) +
                                                   ": mean must be > 0 and dispersion >= 0");
        out.push_back({*mu, *a});
    }
    if (out.empty()) throw ValidationError("simulator", "parameter file has no rows");
    return out;
}

inline std::filesystem::path default_nb_params_path() { return std::filesystem::path(LONGBOOT_DATA_DIR) / "nb_params.tsv"; }

struct SimConfig {
    std::string setting = "Z";
    std::size_t m = 50;
    double frac_da = 0.5;
    std::size_t n_per_group = 10;
    std::size_t q = 10;
    DepOrder dep_order = DepOrder::order1;
    double ar1_phi = 0.8;   ///< order-1 coefficient
    double ar2_phi1 = 0.3;  ///< order-2 lag-1 coefficient
    double ar2_phi2 = 0.5;  ///< order-2 lag-2 coefficient
    Generator generator = Generator::thinning;
    std::size_t burn_in = 50;
    double da_fold = 3.0;
    std::size_t runs = 50;
    std::uint64_t seed = 1;
    std::filesystem::path nb_params = default_nb_params_path();

    void validate() const {
        if (m == 0) throw ValidationError("simulator", "m must be >= 1");
        if (!(frac_da >= 0.0 && frac_da <= 1.0)) throw ValidationError("simulator", "frac_da must lie in [0, 1]");
        if (n_per_group == 0 || q == 0) throw ValidationError("simulator", "n_per_group and q must be >= 1");
        if (!(da_fold > 0.0)) throw ValidationError("simulator", "da_fold must be positive");
        auto check = [](double a, double b) {
            if (a < 0.0 || b < 0.0 || !(a + b < 1.0))
                throw ValidationError("simulator", "AR coefficients must be non-negative with sum < 1");
        };
        check(ar1_phi, 0.0);
        check(ar2_phi1, ar2_phi2);
    }

    [[nodiscard]] std::size_t n_da() const {
        return static_cast<std::size_t>(std::llround(frac_da * static_cast<double>(m)));
    }
};

/// Shapes: Z has 50 taxa (half DA) and q = 10; ZL has 100 taxa (20% DA) and q = 15.
inline SimConfig preset(const std::string& name) {
    SimConfig c;
    if (name == "Z") return c;
    if (name == "ZL") {
        c.setting = "ZL";
        c.m = 100;
        c.frac_da = 0.2;
        c.q = 15;
        return c;
    }
    throw UsageError("simulator", "unknown setting '" + name + "' (use Z or ZL)");
}

/// `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("simulator", "cannot open config '" + path.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const auto t = io::trim(line);
        if (t.empty() || t == "\r") continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw MalformedInput("simulator", path.filename().string() + " line " + std::to_string(line_no) +
                                                  ": expected key = value");
        std::string value(io::trim(t.substr(eq + 1)));
        if (!value.empty() && value.back() == '\r') value.pop_back();
        kv[std::string(io::trim(t.substr(0, eq)))] = value;
    }
    return kv;
}

namespace detail {

inline double config_double(const std::string& key, const std::string& v) {
    const auto d = io::parse_double(v);
    if (!d) throw UsageError("simulator", "config key '" + key + "' expects a number, got '" + v + "'");
    return *d;
}

inline std::size_t config_size(const std::string& key, const std::string& v) {
    const auto d = io::parse_int(v);
    if (!d || *d < 0) throw UsageError("simulator", "config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(*d);
}

}  // namespace detail

/**
 * Apply simulation keys to `cfg`. `setting` is applied first so other keys
 * refine the preset. Keys not handled here are returned.
 */
inline std::map<std::string, std::string> apply_config(SimConfig& cfg, std::map<std::string, std::string> kv) {
    if (auto it = kv.find("setting"); it != kv.end()) {
        const auto seed = cfg.seed;
        const auto params = cfg.nb_params;
        cfg = preset(it->second);
        cfg.seed = seed;
        cfg.nb_params = params;
        kv.erase(it);
    }
    std::map<std::string, std::string> rest;
    for (const auto& [k, v] : kv) {
        if (k == "m") cfg.m = detail::config_size(k, v);
        else if (k == "frac_da") cfg.frac_da = detail::config_double(k, v);
        else if (k == "n_per_group") cfg.n_per_group = detail::config_size(k, v);
        else if (k == "q") cfg.q = detail::config_size(k, v);
        else if (k == "dep_order") cfg.dep_order = parse_dep_order(v);
        else if (k == "ar1_phi") cfg.ar1_phi = detail::config_double(k, v);
        else if (k == "ar2_phi1") cfg.ar2_phi1 = detail::config_double(k, v);
        else if (k == "ar2_phi2") cfg.ar2_phi2 = detail::config_double(k, v);
        else if (k == "generator") cfg.generator = parse_generator(v);
        else if (k == "burn_in") cfg.burn_in = detail::config_size(k, v);
        else if (k == "da_fold") cfg.da_fold = detail::config_double(k, v);
        else if (k == "runs") cfg.runs = detail::config_size(k, v);
        else if (k == "seed") cfg.seed = detail::config_size(k, v);
        else if (k == "nb_params") cfg.nb_params = v;
        else rest[k] = v;
    }
    return rest;
}

/// Gamma-Poisson draw with the given mean and dispersion.
template <class Urbg>
count_t draw_gamma_poisson(Urbg& rng, double mean, double dispersion) {
    double lambda = mean;
    if (dispersion > 0.0) {
        std::gamma_distribution<double> gamma(1.0 / dispersion, mean * dispersion);
        lambda = gamma(rng);
    }
    if (!(lambda > 0.0)) return 0;
    std::poisson_distribution<count_t> pois(lambda);
    return pois(rng);
}

template <class Urbg>
count_t thin(Urbg& rng, count_t x, double phi) {
    if (x <= 0 || phi <= 0.0) return 0;
    std::binomial_distribution<count_t> b(x, phi);
    return b(rng);
}

/**
 * Integer AR series of length q after `burn_in` discarded steps.
 * thinning: X_n = phi1 o X_{n-1} + phi2 o X_{n-2} + Z_n (binomial thinning);
 * rounded-ar: X_n = round(phi1 X_{n-1} + phi2 X_{n-2} + Z_n).
 */
template <class Urbg>
std::vector<count_t> gen_series(double phi1, double phi2, const NbParam& innovation, std::size_t q,
                                std::size_t burn_in, Generator gen, Urbg& rng) {
    if (phi1 < 0.0 || phi2 < 0.0 || !(phi1 + phi2 < 1.0))
        throw ValidationError("simulator", "AR coefficients must be non-negative with sum < 1");
    const auto start = static_cast<count_t>(std::llround(innovation.mean / (1.0 - phi1 - phi2)));
    count_t x1 = start;
    count_t x2 = start;
    std::vector<count_t> out;
    out.reserve(q);
    for (std::size_t n = 0; n < burn_in + q; ++n) {
        const count_t z = draw_gamma_poisson(rng, innovation.mean, innovation.dispersion);
        count_t x = 0;
        if (gen == Generator::thinning) {
            x = thin(rng, x1, phi1) + thin(rng, x2, phi2) + z;
        } else {
            x = static_cast<count_t>(std::llround(phi1 * static_cast<double>(x1) + phi2 * static_cast<double>(x2) +
                                                  static_cast<double>(z)));
        }
        x2 = x1;
        x1 = x;
        if (n >= burn_in) out.push_back(x);
    }
    return out;
}

struct SimulatedData {
    LongitudinalDataset data;
    std::vector<bool> truth;  ///< per taxon: differentially abundant
};

inline std::uint64_t run_seed(std::uint64_t seed, std::size_t run) { return derive_seed(seed, 0x52554E00ull, run); }

/**
 * One simulated panel. Subjects control_01.. (group 0) and treated_01..
 * (group 1). The first round(frac_da m) taxa are differentially abundant: the
 * innovation mean is multiplied by da_fold in the treated arm for even taxon
 * indices and in the control arm for odd ones, so shifts do not all point the
 * same way and median-ratio normalization stays unbiased.
 */
inline SimulatedData gen_setting(const SimConfig& cfg, std::size_t run_index, const std::vector<NbParam>& params) {
    cfg.validate();
    if (params.empty()) throw ValidationError("simulator", "no innovation parameters");
    const std::uint64_t seed = run_seed(cfg.seed, run_index);
    const std::size_t n_subj = 2 * cfg.n_per_group;
    const std::size_t n = n_subj * cfg.q;
    const std::size_t n_da = cfg.n_da();

    CountMatrix cm;
    cm.counts = Matrix<count_t>(cfg.m, n);
    SampleTable meta;
    meta.group_labels = {"control", "treated"};
    auto pad = [](std::size_t v, std::size_t width) {
        std::string s = std::to_string(v);
        return std::string(s.size() < width ? width - s.size() : 0, '0') + s;
    };
    const std::size_t sw = std::to_string(cfg.n_per_group).size() < 2 ? 2 : std::to_string(cfg.n_per_group).size();
    const std::size_t tw = std::to_string(cfg.q).size() < 2 ? 2 : std::to_string(cfg.q).size();
    for (std::size_t j = 0; j < n_subj; ++j) {
        const int g = j < cfg.n_per_group ? 0 : 1;
        const std::string subject =
            std::string(g == 0 ? "control_" : "treated_") + pad(j % cfg.n_per_group + 1, sw);
        for (std::size_t t = 0; t < cfg.q; ++t) {
            const std::string id = subject + "_t" + pad(t + 1, tw);
            cm.sample_ids.push_back(id);
            meta.rows.push_back({id, subject, static_cast<std::int64_t>(t + 1), g});
        }
    }
    const std::size_t iw = std::to_string(cfg.m).size();
    std::vector<bool> truth(cfg.m, false);
    for (std::size_t i = 0; i < cfg.m; ++i) {
        cm.taxa_ids.push_back("taxon_" + pad(i + 1, iw));
        truth[i] = i < n_da;
        const NbParam base = params[i % params.size()];
        for (std::size_t j = 0; j < n_subj; ++j) {
            const int g = j < cfg.n_per_group ? 0 : 1;
            NbParam p = base;
            if (truth[i] && g == static_cast<int>(i % 2 == 0)) p.mean *= cfg.da_fold;
            double phi1 = cfg.ar1_phi;
            double phi2 = 0.0;
            if (cfg.dep_order == DepOrder::order2 || (cfg.dep_order == DepOrder::mixed && g == 1)) {
                phi1 = cfg.ar2_phi1;
                phi2 = cfg.ar2_phi2;
            }
            PhiloxStream rng(StreamKey{seed, StreamLevel::simulate, static_cast<std::uint32_t>(i), 0, 0,
                                       static_cast<std::uint32_t>(j)});
            const auto series = gen_series(phi1, phi2, p, cfg.q, cfg.burn_in, cfg.generator, rng);
            for (std::size_t t = 0; t < cfg.q; ++t) cm.counts(i, j * cfg.q + t) = series[t];
        }
    }
    return {assemble(std::move(cm), meta), std::move(truth)};
}

/// (FPR, TPR) of the rejection set {p_adj <= cutoff}; absent when undefined.
struct Rates {
    std::optional<double> fpr;
    std::optional<double> tpr;
};

inline Rates rates_at(std::span<const double> p_adj, const std::vector<bool>& truth, double cutoff) {
    if (p_adj.size() != truth.size()) throw ValidationError("simulator", "p-values and truth differ in length");
    double tp = 0, fp = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool rej = p_adj[i] <= cutoff;
        if (truth[i]) {
            ++pos;
            tp += rej ? 1 : 0;
        } else {
            ++neg;
            fp += rej ? 1 : 0;
        }
    }
    Rates r;
    if (neg > 0) r.fpr = fp / neg;
    if (pos > 0) r.tpr = tp / pos;
    return r;
}

struct RocCurve {
    std::vector<double> cutoffs;
    std::vector<std::optional<double>> fpr;
    std::vector<std::optional<double>> tpr;
};

inline constexpr std::size_t kRocGrid = 1001;

/// Rates on a 1001-point cutoff grid over [0, 1], averaged across runs.
inline RocCurve roc_curve(const std::vector<std::vector<double>>& p_adj_runs,
                          const std::vector<std::vector<bool>>& truth_runs) {
    if (p_adj_runs.size() != truth_runs.size() || p_adj_runs.empty())
        throw ValidationError("simulator", "ROC needs one truth vector per run");
    for (std::size_t r = 1; r < p_adj_runs.size(); ++r)
        if (p_adj_runs[r].size() != p_adj_runs[0].size())
            throw ValidationError("simulator", "runs cover different taxon sets");
    RocCurve roc;
    for (std::size_t k = 0; k < kRocGrid; ++k) {
        const double c = static_cast<double>(k) / static_cast<double>(kRocGrid - 1);
        double sf = 0, st = 0;
        std::size_t nf = 0, nt = 0;
        for (std::size_t r = 0; r < p_adj_runs.size(); ++r) {
            const auto rt = rates_at(p_adj_runs[r], truth_runs[r], c);
            if (rt.fpr) sf += *rt.fpr, ++nf;
            if (rt.tpr) st += *rt.tpr, ++nt;
        }
        roc.cutoffs.push_back(c);
        roc.fpr.push_back(nf ? std::optional<double>(sf / static_cast<double>(nf)) : std::nullopt);
        roc.tpr.push_back(nt ? std::optional<double>(st / static_cast<double>(nt)) : std::nullopt);
    }
    return roc;
}

struct BenchOptions {
    std::set<std::string> methods{"mbb", "mbs", "pis"};
    std::size_t outer_reps = 100;
    std::size_t inner_reps = 25;
    std::optional<std::size_t> initial_block;  ///< unset: PAC suggestion per run
    std::optional<std::size_t> block_size;     ///< set: skip block-size selection
    std::optional<Omega> omega;
    std::vector<std::size_t> candidates;
    std::size_t pac_top = 6;
    double pac_threshold = 0.25;
    double fdr = 0.05;
    unsigned threads = 1;
    EstimatorOptions estimator;
};

struct MbbRun {
    std::vector<double> p;
    std::vector<double> p_adj;
    std::vector<double> beta;
    std::size_t initial_block = 0;
    std::size_t block_size = 0;
};

/// MBB end to end on one dataset: initial block, selection, bootstrap, BH.
inline MbbRun run_mbb(const LongitudinalDataset& ds, const BenchOptions& opts, std::uint64_t seed) {
    MbbRun out;
    BootstrapOptions bo;
    bo.outer_reps = opts.outer_reps;
    bo.inner_reps = opts.inner_reps;
    bo.threads = opts.threads;
    bo.estimator = opts.estimator;
    if (opts.block_size) {
        out.block_size = *opts.block_size;
    } else {
        if (opts.initial_block) {
            out.initial_block = *opts.initial_block;
        } else {
            const auto tm = transform(ds.counts, size_factors(ds.counts));
            const std::size_t max_lag = std::max<std::size_t>(1, ds.min_q() - 1);
            out.initial_block = suggest_initial_block(pac_profile(ds, tm, opts.pac_top, max_lag), opts.pac_threshold).l;
        }
        MseOptions mo;
        mo.l_initial = out.initial_block;
        mo.candidates = opts.candidates;
        mo.omega = opts.omega;
        mo.bootstrap = bo;
        mo.bootstrap.seed = derive_seed(seed, 0x53454C00ull);
        out.block_size = select_optimal_block(ds, mo).l_full;
    }
    bo.seed = seed;
    const auto dist = bootstrap_distribution(ds, out.block_size, bo);
    out.beta = dist.beta_hat;
    out.p = p_values(dist.observed_t(), dist);
    out.p_adj = bh_adjust(out.p);
    return out;
}

struct BenchResult {
    std::map<std::string, RocCurve> roc;
    std::map<std::string, std::vector<std::vector<double>>> p_adj;  ///< method -> run -> taxon
    std::vector<std::vector<bool>> truth;
    std::vector<std::size_t> initial_blocks;
    std::vector<std::size_t> block_sizes;

    /// Block size -> relative frequency over runs.
    [[nodiscard]] std::map<std::size_t, double> block_size_frequencies() const {
        std::map<std::size_t, double> f;
        for (auto l : block_sizes) f[l] += 1.0 / static_cast<double>(block_sizes.size());
        return f;
    }
};

inline BenchResult run_benchmark(const SimConfig& cfg, const BenchOptions& opts) {
    cfg.validate();
    for (const auto& m : opts.methods)
        if (m != "mbb" && m != "mbs" && m != "pis") throw UsageError("simulator", "unknown method '" + m + "'");
    if (opts.methods.empty()) throw UsageError("simulator", "no methods selected");
    if (cfg.runs == 0) throw ValidationError("simulator", "runs must be >= 1");
    const auto params = load_nb_params(cfg.nb_params);
    BenchResult res;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        const auto sim = gen_setting(cfg, r, params);
        res.truth.push_back(sim.truth);
        if (opts.methods.count("mbb")) {
            const auto mr = run_mbb(sim.data, opts, derive_seed(run_seed(cfg.seed, r), 0x4D424200ull));
            res.p_adj["mbb"].push_back(mr.p_adj);
            res.initial_blocks.push_back(mr.initial_block);
            res.block_sizes.push_back(mr.block_size);
        }
        if (opts.methods.count("mbs")) res.p_adj["mbs"].push_back(mbs_test(sim.data).p_adj);
        if (opts.methods.count("pis")) res.p_adj["pis"].push_back(pis_test(sim.data).p_adj);
    }
    for (const auto& [m, runs] : res.p_adj) res.roc[m] = roc_curve(runs, res.truth);
    return res;
}

}  // namespace longboot
