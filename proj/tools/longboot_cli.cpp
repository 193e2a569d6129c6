// longboot: command-line front end.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "longboot/longboot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct DataArgs {
    std::string counts;
    std::string meta;
    std::string delimiter;
    std::string reference;
    double filter = 0.0;
};

struct BootArgs {
    std::size_t outer_reps = 200;
    std::size_t inner_reps = 50;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    bool freeze_size_factors = false;
};

struct SelectArgs {
    std::size_t initial_block = 0;  // 0: PAC suggestion
    std::string omega;
    std::vector<std::size_t> candidates;
    unsigned nu = 5;
    std::size_t pac_top = 6;
    double pac_threshold = 0.25;
};

void add_data_options(CLI::App* app, DataArgs& a) {
    app->add_option("--counts", a.counts, "count table (taxa x samples)")->required();
    app->add_option("--meta", a.meta, "sample metadata (sample_id, subject_id, time, group)")->required();
    app->add_option("--delimiter", a.delimiter, "field delimiter: tab, comma or a single character");
    app->add_option("--reference", a.reference, "group label coded as the baseline");
    app->add_option("--filter", a.filter, "minimum prevalence (fraction of samples with a positive count)")
        ->capture_default_str();
}

void add_boot_options(CLI::App* app, BootArgs& a) {
    app->add_option("--outer-reps", a.outer_reps, "outer bootstrap replicates R")->capture_default_str();
    app->add_option("--inner-reps", a.inner_reps, "inner bootstrap replicates RR")->capture_default_str();
    app->add_option("--seed", a.seed, "random seed")->capture_default_str();
    app->add_option("--threads", a.threads, "worker threads (0: all cores)")->capture_default_str();
    app->add_flag("--freeze-size-factors", a.freeze_size_factors,
                  "reuse the observed size factors in every bootstrap realization");
}

void add_select_options(CLI::App* app, SelectArgs& a) {
    app->add_option("--initial-block", a.initial_block, "initial block size (default: PAC suggestion)");
    app->add_option("--omega", a.omega, "subsample size: a count, or a proportion such as 0.7");
    app->add_option("--candidates", a.candidates, "candidate block sizes, comma separated")->delimiter(',');
    app->add_option("--nu", a.nu, "scale-up exponent")->capture_default_str();
    app->add_option("--pac-top", a.pac_top, "taxa used for the PAC suggestion")->capture_default_str();
    app->add_option("--pac-threshold", a.pac_threshold, "PAC threshold for the suggestion")->capture_default_str();
}

/// Fill options not given on the command line from `key = value` config entries.
void apply_config_file(CLI::App* app, const std::string& path) {
    auto kv = longboot::read_config(path);
    for (CLI::Option* opt : app->get_options()) {
        if (opt->count() > 0) {
            for (const auto& ln : opt->get_lnames()) {
                std::string key = ln;
                std::replace(key.begin(), key.end(), '-', '_');
                kv.erase(key);
            }
            continue;
        }
        for (const auto& ln : opt->get_lnames()) {
            std::string key = ln;
            std::replace(key.begin(), key.end(), '-', '_');
            const auto it = kv.find(key);
            if (it == kv.end()) continue;
            if (opt->get_expected_max() > 1) {
                std::stringstream ss(it->second);
                std::string part;
                while (std::getline(ss, part, ',')) opt->add_result(std::string(longboot::io::trim(part)));
            } else {
                opt->add_result(it->second);
            }
            opt->run_callback();
            kv.erase(it);
        }
    }
    if (!kv.empty()) throw longboot::UsageError("cli", "unknown config key '" + kv.begin()->first + "'");
}

longboot::LongitudinalDataset load_dataset(const DataArgs& a, json& manifest) {
    longboot::LoadOptions lo;
    if (!a.delimiter.empty()) lo.delimiter = longboot::io::parse_delimiter(a.delimiter);
    if (!a.reference.empty()) lo.reference_level = a.reference;
    auto cm = longboot::load_counts(a.counts, lo);
    const auto meta = longboot::load_metadata(a.meta, lo);
    auto ds = longboot::assemble(std::move(cm), meta);
    const std::size_t before = ds.n_taxa();
    if (a.filter > 0.0) ds = longboot::prevalence_filter(ds, a.filter);
    manifest["data"] = {{"counts", a.counts},
                        {"meta", a.meta},
                        {"filter", a.filter},
                        {"taxa_before_filter", before},
                        {"taxa", ds.n_taxa()},
                        {"samples", ds.n_samples()},
                        {"subjects", ds.n_subjects()},
                        {"group_labels", {ds.meta.group_labels[0], ds.meta.group_labels[1]}}};
    return ds;
}

longboot::BootstrapOptions boot_options(const BootArgs& a) {
    longboot::BootstrapOptions o;
    o.outer_reps = a.outer_reps;
    o.inner_reps = a.inner_reps;
    o.seed = a.seed;
    o.threads = a.threads;
    o.estimator.freeze_size_factors = a.freeze_size_factors;
    return o;
}

json boot_json(const BootArgs& a) {
    return {{"outer_reps", a.outer_reps},
            {"inner_reps", a.inner_reps},
            {"seed", a.seed},
            {"threads", a.threads},
            {"freeze_size_factors", a.freeze_size_factors}};
}

std::size_t default_max_lag(const longboot::LongitudinalDataset& ds) {
    return std::max<std::size_t>(1, std::min<std::size_t>(20, ds.min_q() - 1));
}

longboot::InitialBlock pac_suggestion(const longboot::LongitudinalDataset& ds, const SelectArgs& s) {
    const auto tm = longboot::transform(ds.counts, longboot::size_factors(ds.counts));
    const auto table = longboot::pac_profile(ds, tm, s.pac_top, default_max_lag(ds));
    return longboot::suggest_initial_block(table, s.pac_threshold);
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

/// Block-size selection shared by `fit --auto-block` and `blocksize`.
longboot::BlockSizeChoice run_selection(const longboot::LongitudinalDataset& ds, const SelectArgs& s,
                                        const BootArgs& b, json& manifest) {
    longboot::MseOptions mo;
    mo.l_initial = s.initial_block;
    if (mo.l_initial == 0) {
        const auto ib = pac_suggestion(ds, s);
        if (!ib.warning.empty()) warn(ib.warning);
        mo.l_initial = ib.l;
    }
    mo.candidates = s.candidates;
    if (!s.omega.empty()) mo.omega = longboot::Omega::parse(s.omega);
    mo.bootstrap = boot_options(b);
    auto choice = longboot::select_optimal_block(ds, mo, s.nu);
    manifest["block_selection"] = {{"initial_block", mo.l_initial},
                                   {"initial_block_source", s.initial_block == 0 ? "pac" : "flag"},
                                   {"omega", choice.profile.omega.str()},
                                   {"omega_mode", choice.profile.omega.is_proportion() ? "proportion" : "count"},
                                   {"windows", choice.profile.n_windows},
                                   {"candidates", choice.profile.candidates},
                                   {"nu", s.nu},
                                   {"l_subsample", choice.l_subsample},
                                   {"l_full", choice.l_full}};
    return choice;
}

std::string mse_table(const longboot::MseProfile& p) {
    longboot::io::TableWriter w(',');
    w.row({"candidate", "l1_norm"});
    for (std::size_t c = 0; c < p.candidates.size(); ++c)
        w.row({std::to_string(p.candidates[c]), longboot::io::format_double(p.l1_norms[c])});
    return w.str();
}

std::string iso_time_utc() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Outputs {
    fs::path dir;
    std::vector<std::string> files;

    fs::path add(const std::string& name) {
        files.push_back(name);
        return dir / name;
    }
};

void write_size_factors(const longboot::LongitudinalDataset& ds, const fs::path& path) {
    const auto sf = longboot::size_factors(ds.counts);
    longboot::io::TableWriter w(',');
    w.row({"sample_id", "size_factor"});
    for (std::size_t s = 0; s < ds.n_samples(); ++s)
        w.row({ds.counts.sample_ids[s], longboot::io::format_double(sf.delta[s])});
    w.save(path);
    if (sf.fallback) warn("no taxon is positive in every sample; size factors use positive entries only");
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    DataArgs data;
    BootArgs boot;
    SelectArgs select;
    std::size_t block_size = 0;
    bool auto_block = false;
    double alpha = 0.05;
    double fdr = 0.05;
    std::string dump_distribution;
    std::string emit_sizefactors;
    std::string emit_mse;
};

void run_fit(const FitArgs& a, Outputs& out, json& manifest) {
    if (a.block_size == 0 && !a.auto_block)
        throw longboot::UsageError("cli", "give --block-size or --auto-block");
    if (a.block_size != 0 && a.auto_block)
        throw longboot::UsageError("cli", "--block-size and --auto-block are mutually exclusive");
    const auto ds = load_dataset(a.data, manifest);

    if (!a.emit_sizefactors.empty()) write_size_factors(ds, a.emit_sizefactors);

    std::size_t l = a.block_size;
    if (a.auto_block) {
        const auto choice = run_selection(ds, a.select, a.boot, manifest);
        l = choice.l_full;
        if (!a.emit_mse.empty()) longboot::io::write_text(a.emit_mse, mse_table(choice.profile));
    }

    const auto dist = longboot::bootstrap_distribution(ds, l, boot_options(a.boot));
    const auto t_obs = dist.observed_t();
    const auto p = longboot::p_values(t_obs, dist);
    const auto p_adj = longboot::bh_adjust(p);
    const auto ci = longboot::conf_intervals(dist.beta_hat, dist, a.alpha);

    longboot::RunMetadata meta;
    meta.method = "mbb";
    meta.block_size = l;
    meta.outer_reps = a.boot.outer_reps;
    meta.inner_reps = a.boot.inner_reps;
    meta.seed = a.boot.seed;
    meta.filter = a.data.filter;
    meta.alpha = a.alpha;
    meta.fdr = a.fdr;
    meta.extra["floored_se"] = dist.floored_se_count;
    meta.extra["redraws"] = dist.redraws;
    const auto table = longboot::assemble_results(ds.counts.taxa_ids, dist.beta_hat, ci, p, p_adj, meta);
    longboot::write_results(table, out.add("results.csv"));
    out.files.push_back("results.csv.meta.json");
    if (table.widened_intervals > 0)
        warn(std::to_string(table.widened_intervals) + " interval(s) extended to contain their estimate");

    if (!a.dump_distribution.empty()) {
        longboot::io::TableWriter w(',');
        w.row({"taxon", "replicate", "beta_star", "se_inner", "t_star"});
        for (std::size_t i = 0; i < dist.n_taxa(); ++i)
            for (std::size_t r = 0; r < dist.outer_reps; ++r)
                w.row({ds.counts.taxa_ids[i], std::to_string(r), longboot::io::format_double(dist.beta_star(i, r)),
                       longboot::io::format_double(dist.se_inner(i, r)),
                       longboot::io::format_double(dist.t_star(i, r))});
        w.save(a.dump_distribution);
    }
    manifest["parameters"] = {{"block_size", l},     {"auto_block", a.auto_block}, {"alpha", a.alpha},
                              {"fdr", a.fdr},        {"bootstrap", boot_json(a.boot)}};
    std::size_t n_sig = 0;
    for (const auto& r : table.rows) n_sig += r.significant ? 1 : 0;
    std::cout << "block size " << l << "; " << n_sig << " of " << table.rows.size()
              << " taxa significant at FDR " << a.fdr << "\n";
}

// ---------------------------------------------------------------- blocksize

struct BlocksizeArgs {
    DataArgs data;
    BootArgs boot;
    SelectArgs select;
    std::string emit_mse;
};

void run_blocksize(const BlocksizeArgs& a, Outputs& out, json& manifest) {
    const auto ds = load_dataset(a.data, manifest);
    const auto choice = run_selection(ds, a.select, a.boot, manifest);
    longboot::io::TableWriter w(',');
    w.row({"initial_block", "omega", "omega_mode", "windows", "l_subsample", "l_full"});
    w.row({std::to_string(choice.profile.l_initial), choice.profile.omega.str(),
           choice.profile.omega.is_proportion() ? "proportion" : "count", std::to_string(choice.profile.n_windows),
           std::to_string(choice.l_subsample), std::to_string(choice.l_full)});
    w.save(out.add("blocksize.csv"));
    const fs::path mse = a.emit_mse.empty() ? out.add("mse.csv") : fs::path(a.emit_mse);
    longboot::io::write_text(mse, mse_table(choice.profile));
    manifest["parameters"] = {{"bootstrap", boot_json(a.boot)}};
    std::cout << "optimal block size " << choice.l_full << " (subsample optimum " << choice.l_subsample << ")\n";
}

// ---------------------------------------------------------------- diagnose

struct DiagnoseArgs {
    DataArgs data;
    BootArgs boot;
    std::size_t top = 6;
    std::size_t max_lag = 0;
    double threshold = 0.25;
    std::string pac_mode = "group-mean";
    std::vector<std::size_t> lags{1, 2, 3, 4};
    std::string taxon;
    bool svg = false;
    double perturb = 2.0;
    std::size_t block_size = 0;
    bool skip_pivot = false;
    std::string emit_sizefactors;
};

void run_diagnose(DiagnoseArgs a, Outputs& out, json& manifest) {
    const auto ds = load_dataset(a.data, manifest);
    if (!a.emit_sizefactors.empty()) write_size_factors(ds, a.emit_sizefactors);
    const auto tm = longboot::transform(ds.counts, longboot::size_factors(ds.counts));
    if (a.max_lag == 0) a.max_lag = default_max_lag(ds);
    longboot::PacMode mode = longboot::PacMode::group_mean;
    if (a.pac_mode == "subject-average") mode = longboot::PacMode::subject_average;
    else if (a.pac_mode != "group-mean") throw longboot::UsageError("cli", "--pac-mode must be group-mean or subject-average");

    const auto pac = longboot::pac_profile(ds, tm, a.top, a.max_lag, mode);
    for (const auto& w : pac.warnings) warn(w);
    const auto ib = longboot::suggest_initial_block(pac, a.threshold);
    if (!ib.warning.empty()) warn(ib.warning);

    longboot::io::TableWriter pw(',');
    pw.row({"taxon", "group", "lag", "pac", "pairs", "degenerate"});
    for (const auto& e : pac.entries)
        pw.row({ds.counts.taxa_ids[e.taxon], ds.meta.group_labels[static_cast<std::size_t>(e.group)],
                std::to_string(e.lag), longboot::io::format_double(e.pac), std::to_string(e.pairs),
                e.degenerate ? "true" : "false"});
    pw.save(out.add("pac.csv"));

    std::size_t taxon = pac.taxa.front();
    if (!a.taxon.empty()) {
        const auto it = std::find(ds.counts.taxa_ids.begin(), ds.counts.taxa_ids.end(), a.taxon);
        if (it == ds.counts.taxa_ids.end()) throw longboot::ValidationError("diagnostics", "unknown taxon '" + a.taxon + "'");
        taxon = static_cast<std::size_t>(it - ds.counts.taxa_ids.begin());
    }
    const auto pairs = longboot::lag_table(tm, ds, taxon, a.lags);
    longboot::io::TableWriter lw(',');
    lw.row({"taxon", "subject", "group", "lag", "x_t", "x_t_plus_h"});
    for (const auto& p : pairs)
        lw.row({ds.counts.taxa_ids[taxon], p.subject_id, ds.meta.group_labels[static_cast<std::size_t>(p.group)],
                std::to_string(p.lag), longboot::io::format_double(p.x_t), longboot::io::format_double(p.x_t_plus_h)});
    lw.save(out.add("lagpairs.csv"));

    json pivot = nullptr;
    std::optional<longboot::PivotCheck> check;
    std::size_t l_pivot = 0;
    if (!a.skip_pivot) {
        l_pivot = a.block_size ? a.block_size : std::min(ib.l, ds.min_q());
        longboot::PivotOptions po;
        po.block_size = l_pivot;
        po.bootstrap = boot_options(a.boot);
        po.perturb_seed = longboot::derive_seed(a.boot.seed, 0x5045525455524246ull);
        check = longboot::pivot_check(ds, a.perturb, po);
        longboot::io::TableWriter qw(',');
        qw.row({"taxon", "probability", "t_original", "t_perturbed", "ks_t", "ks_root"});
        for (std::size_t i = 0; i < check->taxa.size(); ++i) {
            const auto& t = check->taxa[i];
            for (std::size_t k = 0; k < t.q_original.size(); ++k)
                qw.row({ds.counts.taxa_ids[i],
                        longboot::io::format_double(static_cast<double>(k + 1) / static_cast<double>(t.q_original.size() + 1)),
                        longboot::io::format_double(t.q_original[k]), longboot::io::format_double(t.q_perturbed[k]),
                        longboot::io::format_double(t.ks_t), longboot::io::format_double(t.ks_root)});
        }
        qw.save(out.add("qq.csv"));
        pivot = {{"perturbation", a.perturb},
                 {"block_size", l_pivot},
                 {"mean_ks_t", check->mean_ks_t},
                 {"mean_ks_root", check->mean_ks_root}};
    }

    if (a.svg) {
        for (int g = 0; g < 2; ++g) {
            longboot::SvgPlot plot("PAC, group " + ds.meta.group_labels[static_cast<std::size_t>(g)], "lag", "PAC");
            plot.add_hline(a.threshold);
            plot.add_hline(-a.threshold);
            for (std::size_t i : pac.taxa) {
                std::vector<double> x, y;
                for (const auto& e : pac.entries)
                    if (e.taxon == i && e.group == g) {
                        x.push_back(static_cast<double>(e.lag));
                        y.push_back(e.pac);
                    }
                plot.add_series(ds.counts.taxa_ids[i], x, y, true);
            }
            const std::string name = "pac_" + ds.meta.group_labels[static_cast<std::size_t>(g)] + ".svg";
            longboot::io::write_text(out.add(name), plot.str());
        }
        for (std::size_t h : a.lags) {
            longboot::SvgPlot plot("lag " + std::to_string(h) + ", " + ds.counts.taxa_ids[taxon], "x_t", "x_t+h");
            plot.set_diagonal(true);
            for (int g = 0; g < 2; ++g) {
                std::vector<double> x, y;
                for (const auto& p : pairs)
                    if (p.lag == h && p.group == g) {
                        x.push_back(p.x_t);
                        y.push_back(p.x_t_plus_h);
                    }
                plot.add_series(ds.meta.group_labels[static_cast<std::size_t>(g)], x, y, false);
            }
            longboot::io::write_text(out.add("lagplot_" + std::to_string(h) + ".svg"), plot.str());
        }
        if (check) {
            longboot::SvgPlot plot("QQ of studentized statistic", "original", "perturbed");
            plot.set_diagonal(true);
            std::vector<double> x, y;
            for (const auto& t : check->taxa) {
                x.insert(x.end(), t.q_original.begin(), t.q_original.end());
                y.insert(y.end(), t.q_perturbed.begin(), t.q_perturbed.end());
            }
            plot.add_series("all taxa", x, y, false);
            longboot::io::write_text(out.add("qq.svg"), plot.str());
        }
    }

    manifest["parameters"] = {{"top", a.top},           {"max_lag", a.max_lag}, {"threshold", a.threshold},
                              {"pac_mode", a.pac_mode}, {"lags", a.lags},       {"taxon", ds.counts.taxa_ids[taxon]},
                              {"skip_pivot", a.skip_pivot}, {"bootstrap", boot_json(a.boot)}};
    manifest["initial_block"] = {{"suggested", ib.l}, {"lag", ib.lag}, {"warning", ib.warning}};
    manifest["pivot_check"] = pivot;
    std::cout << "suggested initial block size " << ib.l << "\n";
}

// ---------------------------------------------------------------- simulate / bench

struct SimArgs {
    std::string setting = "Z";
    std::optional<std::size_t> m, n_per_group, q, burn_in, runs;
    std::optional<double> frac_da, da_fold, ar1_phi, ar2_phi1, ar2_phi2;
    std::optional<std::string> dep_order, generator, nb_params;
    std::uint64_t seed = 1;
};

void add_sim_options(CLI::App* app, SimArgs& a) {
    app->add_option("--setting", a.setting, "preset shape: Z or ZL")->capture_default_str();
    app->add_option("--m", a.m, "number of taxa");
    app->add_option("--frac-da", a.frac_da, "fraction of differentially abundant taxa");
    app->add_option("--n-per-group", a.n_per_group, "subjects per group");
    app->add_option("--q", a.q, "observations per subject");
    app->add_option("--dep-order", a.dep_order, "dependence: 1, 2 or mixed");
    app->add_option("--ar1-phi", a.ar1_phi, "order-1 AR coefficient");
    app->add_option("--ar2-phi1", a.ar2_phi1, "order-2 lag-1 coefficient");
    app->add_option("--ar2-phi2", a.ar2_phi2, "order-2 lag-2 coefficient");
    app->add_option("--generator", a.generator, "thinning or rounded-ar");
    app->add_option("--burn-in", a.burn_in, "discarded initial steps");
    app->add_option("--da-fold", a.da_fold, "innovation-mean multiplier for differentially abundant taxa");
    app->add_option("--runs", a.runs, "number of simulated datasets");
    app->add_option("--nb-params", a.nb_params, "innovation parameter table (mean, dispersion)");
    app->add_option("--seed", a.seed, "random seed")->capture_default_str();
}

longboot::SimConfig sim_config(const SimArgs& a) {
    auto cfg = longboot::preset(a.setting);
    cfg.seed = a.seed;
    if (a.m) cfg.m = *a.m;
    if (a.frac_da) cfg.frac_da = *a.frac_da;
    if (a.n_per_group) cfg.n_per_group = *a.n_per_group;
    if (a.q) cfg.q = *a.q;
    if (a.dep_order) cfg.dep_order = longboot::parse_dep_order(*a.dep_order);
    if (a.ar1_phi) cfg.ar1_phi = *a.ar1_phi;
    if (a.ar2_phi1) cfg.ar2_phi1 = *a.ar2_phi1;
    if (a.ar2_phi2) cfg.ar2_phi2 = *a.ar2_phi2;
    if (a.generator) cfg.generator = longboot::parse_generator(*a.generator);
    if (a.burn_in) cfg.burn_in = *a.burn_in;
    if (a.da_fold) cfg.da_fold = *a.da_fold;
    if (a.runs) cfg.runs = *a.runs;
    if (a.nb_params) cfg.nb_params = *a.nb_params;
    cfg.validate();
    return cfg;
}

json sim_json(const longboot::SimConfig& c) {
    return {{"setting", c.setting},         {"m", c.m},
            {"frac_da", c.frac_da},         {"n_per_group", c.n_per_group},
            {"q", c.q},                     {"dep_order", longboot::to_string(c.dep_order)},
            {"ar1_phi", c.ar1_phi},         {"ar2_phi1", c.ar2_phi1},
            {"ar2_phi2", c.ar2_phi2},       {"generator", longboot::to_string(c.generator)},
            {"burn_in", c.burn_in},         {"da_fold", c.da_fold},
            {"runs", c.runs},               {"seed", c.seed},
            {"nb_params", c.nb_params.string()}};
}

std::string truth_table(const std::vector<std::vector<bool>>& truth, const std::vector<std::string>& taxa) {
    longboot::io::TableWriter w(',');
    w.row({"run", "taxon", "differential"});
    for (std::size_t r = 0; r < truth.size(); ++r)
        for (std::size_t i = 0; i < truth[r].size(); ++i)
            w.row({std::to_string(r + 1), taxa[i], truth[r][i] ? "true" : "false"});
    return w.str();
}

void run_simulate(const SimArgs& a, Outputs& out, json& manifest) {
    auto cfg = sim_config(a);
    if (!a.runs) cfg.runs = 1;
    const auto params = longboot::load_nb_params(cfg.nb_params);
    std::vector<std::vector<bool>> truth;
    std::vector<std::string> taxa;
    const std::size_t width = std::max<std::size_t>(3, std::to_string(cfg.runs).size());
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        auto sim = longboot::gen_setting(cfg, r, params);
        std::string tag = std::to_string(r + 1);
        tag = std::string(width - tag.size(), '0') + tag;
        out.files.push_back("counts_" + tag + ".tsv");
        out.files.push_back("meta_" + tag + ".tsv");
        longboot::write_dataset(sim.data, out.dir / ("counts_" + tag + ".tsv"), out.dir / ("meta_" + tag + ".tsv"));
        truth.push_back(std::move(sim.truth));
        taxa = sim.data.counts.taxa_ids;
    }
    longboot::io::write_text(out.add("truth.csv"), truth_table(truth, taxa));
    manifest["parameters"] = sim_json(cfg);
    std::cout << "wrote " << cfg.runs << " simulated dataset(s)\n";
}

struct BenchArgs {
    SimArgs sim;
    BootArgs boot;
    SelectArgs select;
    std::vector<std::string> methods{"mbb", "mbs", "pis"};
    std::size_t block_size = 0;
    double fdr = 0.05;
};

void run_bench(const BenchArgs& a, Outputs& out, json& manifest) {
    const auto cfg = sim_config(a.sim);
    longboot::BenchOptions bo;
    bo.methods = std::set<std::string>(a.methods.begin(), a.methods.end());
    bo.outer_reps = a.boot.outer_reps;
    bo.inner_reps = a.boot.inner_reps;
    bo.threads = a.boot.threads;
    bo.estimator.freeze_size_factors = a.boot.freeze_size_factors;
    if (a.block_size) bo.block_size = a.block_size;
    if (a.select.initial_block) bo.initial_block = a.select.initial_block;
    if (!a.select.omega.empty()) bo.omega = longboot::Omega::parse(a.select.omega);
    bo.candidates = a.select.candidates;
    bo.pac_top = a.select.pac_top;
    bo.pac_threshold = a.select.pac_threshold;
    bo.fdr = a.fdr;
    const auto res = longboot::run_benchmark(cfg, bo);

    longboot::io::TableWriter rw(',');
    rw.row({"method", "cutoff", "fpr", "tpr"});
    for (const auto& [method, roc] : res.roc)
        for (std::size_t k = 0; k < roc.cutoffs.size(); ++k)
            rw.row({method, longboot::io::format_double(roc.cutoffs[k]),
                    roc.fpr[k] ? longboot::io::format_double(*roc.fpr[k]) : "NA",
                    roc.tpr[k] ? longboot::io::format_double(*roc.tpr[k]) : "NA"});
    rw.save(out.add("roc.csv"));

    longboot::io::TableWriter sw(',');
    sw.row({"method", "run", "fpr", "tpr"});
    for (const auto& [method, runs] : res.p_adj)
        for (std::size_t r = 0; r < runs.size(); ++r) {
            const auto rt = longboot::rates_at(runs[r], res.truth[r], a.fdr);
            sw.row({method, std::to_string(r + 1), rt.fpr ? longboot::io::format_double(*rt.fpr) : "NA",
                    rt.tpr ? longboot::io::format_double(*rt.tpr) : "NA"});
        }
    sw.save(out.add("rates.csv"));

    if (bo.methods.count("mbb")) {
        longboot::io::TableWriter bw(',');
        bw.row({"run", "initial_block", "l"});
        for (std::size_t r = 0; r < res.block_sizes.size(); ++r)
            bw.row({std::to_string(r + 1), std::to_string(res.initial_blocks[r]), std::to_string(res.block_sizes[r])});
        bw.save(out.add("blocksizes.csv"));
        longboot::io::TableWriter fw(',');
        fw.row({"l", "frequency"});
        for (const auto& [l, f] : res.block_size_frequencies())
            fw.row({std::to_string(l), longboot::io::format_double(f)});
        fw.save(out.add("blocksize_freq.csv"));
    }
    const auto params = longboot::load_nb_params(cfg.nb_params);
    const auto taxa = longboot::gen_setting(cfg, 0, params).data.counts.taxa_ids;
    longboot::io::write_text(out.add("truth.csv"), truth_table(res.truth, taxa));

    manifest["parameters"] = {{"simulation", sim_json(cfg)},
                              {"methods", a.methods},
                              {"block_size", a.block_size},
                              {"initial_block", a.select.initial_block},
                              {"omega", a.select.omega},
                              {"candidates", a.select.candidates},
                              {"fdr", a.fdr},
                              {"bootstrap", boot_json(a.boot)}};
    for (const auto& [method, runs] : res.p_adj) {
        double f = 0, t = 0;
        std::size_t nf = 0, nt = 0;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            const auto rt = longboot::rates_at(runs[r], res.truth[r], a.fdr);
            if (rt.fpr) f += *rt.fpr, ++nf;
            if (rt.tpr) t += *rt.tpr, ++nt;
        }
        std::cout << method << ": mean FPR " << (nf ? f / static_cast<double>(nf) : 0.0) << ", mean TPR "
                  << (nt ? t / static_cast<double>(nt) : 0.0) << " at FDR " << a.fdr << "\n";
    }
}

int exit_code(longboot::ExitCode c) { return static_cast<int>(c); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Moving-block bootstrap differential abundance for longitudinal count data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    std::string out_dir = ".";
    std::string config;
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "test every taxon for a group effect");
    add_data_options(fit_cmd, fit.data);
    add_boot_options(fit_cmd, fit.boot);
    add_select_options(fit_cmd, fit.select);
    fit_cmd->add_option("--block-size", fit.block_size, "block length l");
    fit_cmd->add_flag("--auto-block", fit.auto_block, "select the block size by subsampling");
    fit_cmd->add_option("--alpha", fit.alpha, "confidence interval level is 1 - alpha")->capture_default_str();
    fit_cmd->add_option("--fdr", fit.fdr, "FDR cutoff for the significance flag")->capture_default_str();
    fit_cmd->add_option("--dump-distribution", fit.dump_distribution, "write the bootstrap distribution here");
    fit_cmd->add_option("--emit-sizefactors", fit.emit_sizefactors, "write size factors here");
    fit_cmd->add_option("--emit-mse", fit.emit_mse, "write the block-size l1-norm table here");

    BlocksizeArgs bs;
    auto* bs_cmd = app.add_subcommand("blocksize", "select the optimal block size");
    add_data_options(bs_cmd, bs.data);
    add_boot_options(bs_cmd, bs.boot);
    add_select_options(bs_cmd, bs.select);
    bs_cmd->add_option("--emit-mse", bs.emit_mse, "l1-norm table path (default <out>/mse.csv)");

    DiagnoseArgs dg;
    auto* dg_cmd = app.add_subcommand("diagnose", "PAC profiles, lag pairs and the pivot check");
    add_data_options(dg_cmd, dg.data);
    add_boot_options(dg_cmd, dg.boot);
    dg_cmd->add_option("--top", dg.top, "taxa in the PAC profile")->capture_default_str();
    dg_cmd->add_option("--max-lag", dg.max_lag, "largest PAC lag (default: shortest series - 1, at most 20)");
    dg_cmd->add_option("--threshold", dg.threshold, "PAC threshold")->capture_default_str();
    dg_cmd->add_option("--pac-mode", dg.pac_mode, "group-mean or subject-average")->capture_default_str();
    dg_cmd->add_option("--lags", dg.lags, "lags for the lag-pair table")->delimiter(',')->capture_default_str();
    dg_cmd->add_option("--taxon", dg.taxon, "taxon for the lag-pair table (default: most abundant)");
    dg_cmd->add_flag("--svg", dg.svg, "also write SVG plots");
    dg_cmd->add_option("--perturb", dg.perturb, "dispersion factor for the pivot check")->capture_default_str();
    dg_cmd->add_option("--block-size", dg.block_size, "block size for the pivot check (default: suggestion)");
    dg_cmd->add_flag("--skip-pivot", dg.skip_pivot, "do not run the pivot check");
    dg_cmd->add_option("--emit-sizefactors", dg.emit_sizefactors, "write size factors here");

    SimArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "write simulated datasets");
    add_sim_options(sim_cmd, sim);

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "ROC benchmark of MBB against the baselines");
    add_sim_options(bench_cmd, bench.sim);
    bench_cmd->add_option("--outer-reps", bench.boot.outer_reps, "outer bootstrap replicates R")->capture_default_str();
    bench_cmd->add_option("--inner-reps", bench.boot.inner_reps, "inner bootstrap replicates RR")->capture_default_str();
    bench_cmd->add_option("--threads", bench.boot.threads, "worker threads (0: all cores)")->capture_default_str();
    bench_cmd->add_flag("--freeze-size-factors", bench.boot.freeze_size_factors, "reuse observed size factors");
    add_select_options(bench_cmd, bench.select);
    bench_cmd->add_option("--method", bench.methods, "methods: mbb, mbs, pis")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--block-size", bench.block_size, "fixed block size (skips selection)");
    bench_cmd->add_option("--fdr", bench.fdr, "FDR cutoff for rates.csv")->capture_default_str();
    bench.boot.outer_reps = 100;
    bench.boot.inner_reps = 25;

    for (auto* sub : {fit_cmd, bs_cmd, dg_cmd, sim_cmd, bench_cmd})
        sub->add_option("--config", config, "key = value file; command-line flags take precedence");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(longboot::ExitCode::usage);
    }

    CLI::App* cmd = app.get_subcommands().front();
    const auto t0 = std::chrono::steady_clock::now();
    json manifest;
    manifest["tool"] = "longboot";
    manifest["version"] = kVersion;
    manifest["command"] = cmd->get_name();
    std::vector<std::string> args(argv, argv + argc);
    manifest["argv"] = args;
    manifest["started"] = iso_time_utc();
    Outputs out{fs::path(out_dir), {}};
    try {
        if (!config.empty()) {
            apply_config_file(cmd, config);
            manifest["config"] = config;
        }
        fs::create_directories(out.dir);
        if (cmd == fit_cmd) run_fit(fit, out, manifest);
        else if (cmd == bs_cmd) run_blocksize(bs, out, manifest);
        else if (cmd == dg_cmd) run_diagnose(dg, out, manifest);
        else if (cmd == sim_cmd) run_simulate(sim, out, manifest);
        else run_bench(bench, out, manifest);
    } catch (const longboot::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const CLI::Error& e) {
        std::cerr << "error: cli: " << e.what() << "\n";
        return exit_code(longboot::ExitCode::usage);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return exit_code(longboot::ExitCode::validation);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(longboot::ExitCode::numerical);
    }
    manifest["outputs"] = out.files;
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    longboot::io::write_text(out.dir / "manifest.json", manifest.dump(2) + "\n");
    return 0;
}
