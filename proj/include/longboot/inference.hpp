#pragma once

// Benjamini-Hochberg adjustment and the per-taxon results table.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "longboot/error.hpp"
#include "longboot/io.hpp"
#include "longboot/mbb.hpp"

namespace longboot {

/// Step-up BH: q_(i) = min_{j >= i} min(1, p_(j) m / j), returned in input order.
inline std::vector<double> bh_adjust(std::span<const double> p) {
    const std::size_t m = p.size();
    for (double v : p)
        if (!(v > 0.0 && v <= 1.0)) throw ValidationError("inference", "p-values must lie in (0, 1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    std::vector<double> out(m);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const std::size_t i = order[k];
        running = std::min(running, p[i] * (static_cast<double>(m) / static_cast<double>(k + 1)));
        out[i] = std::min(1.0, running);
    }
    return out;
}

struct ResultRow {
    std::string taxon;
    double beta = 0.0;
    double lcl = 0.0;
    double ucl = 0.0;
    double p = 1.0;
    double p_adj = 1.0;
    bool significant = false;
};

/// Run parameters stored next to the results.
struct RunMetadata {
    std::string method = "mbb";
    std::size_t block_size = 0;
    std::size_t outer_reps = 0;
    std::size_t inner_reps = 0;
    std::uint64_t seed = 0;
    double filter = 0.0;
    double alpha = 0.05;
    double fdr = 0.05;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct ResultsTable {
    std::vector<ResultRow> rows;
    RunMetadata meta;
    /// Intervals extended to contain their point estimate.
    std::size_t widened_intervals = 0;
};

/**
 * Rows sorted by beta descending (ties keep input order). An interval whose
 * bootstrap quantiles do not straddle zero is extended to reach beta.
 */
inline ResultsTable assemble_results(std::span<const std::string> taxa, std::span<const double> beta,
                                     std::span<const Interval> ci, std::span<const double> p,
                                     std::span<const double> p_adj, const RunMetadata& meta) {
    const std::size_t m = taxa.size();
    if (m == 0) throw ValidationError("inference", "empty taxon set");
    if (beta.size() != m || ci.size() != m || p.size() != m || p_adj.size() != m)
        throw ValidationError("inference", "result components cover different taxon sets");
    ResultsTable t;
    t.meta = meta;
    t.rows.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        ResultRow r{taxa[i], beta[i], ci[i].lcl, ci[i].ucl, p[i], p_adj[i], p_adj[i] <= meta.fdr};
        if (r.lcl > r.beta || r.ucl < r.beta) {
            r.lcl = std::min(r.lcl, r.beta);
            r.ucl = std::max(r.ucl, r.beta);
            ++t.widened_intervals;
        }
        t.rows.push_back(std::move(r));
    }
    std::stable_sort(t.rows.begin(), t.rows.end(),
                     [](const ResultRow& a, const ResultRow& b) { return a.beta > b.beta; });
    return t;
}

inline std::string results_text(const ResultsTable& t, char delim = ',') {
    io::TableWriter w(delim);
    w.row({"taxon", "beta", "lcl", "ucl", "p", "p_adj", "significant"});
    for (const auto& r : t.rows)
        w.row({r.taxon, io::format_double(r.beta), io::format_double(r.lcl), io::format_double(r.ucl),
               io::format_double(r.p), io::format_double(r.p_adj), r.significant ? "true" : "false"});
    return w.str();
}

inline nlohmann::ordered_json metadata_json(const ResultsTable& t) {
    nlohmann::ordered_json j;
    j["method"] = t.meta.method;
    j["block_size"] = t.meta.block_size;
    j["outer_reps"] = t.meta.outer_reps;
    j["inner_reps"] = t.meta.inner_reps;
    j["seed"] = t.meta.seed;
    j["filter"] = t.meta.filter;
    j["alpha"] = t.meta.alpha;
    j["fdr"] = t.meta.fdr;
    j["n_taxa"] = t.rows.size();
    j["widened_intervals"] = t.widened_intervals;
    for (const auto& [k, v] : t.meta.extra.items()) j[k] = v;
    return j;
}

/// Write the results table and `<path>.meta.json` beside it.
inline void write_results(const ResultsTable& t, const std::filesystem::path& path, char delim = ',') {
    io::write_text(path, results_text(t, delim));
    auto side = path;
    side += ".meta.json";
    io::write_text(side, metadata_json(t).dump(2) + "\n");
}

}  // namespace longboot
