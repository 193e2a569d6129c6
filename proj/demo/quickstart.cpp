// Simulate one small longitudinal panel and test it with the moving-block bootstrap.

#include <iostream>

#include "longboot/longboot.hpp"

int main() {
    using namespace longboot;

    SimConfig cfg = preset("Z");
    cfg.m = 20;
    cfg.seed = 11;
    const auto sim = gen_setting(cfg, 0, load_nb_params(cfg.nb_params));
    const auto& ds = sim.data;
    std::cout << ds.n_taxa() << " taxa, " << ds.n_subjects() << " subjects, " << ds.n_samples() << " samples\n";

    const auto tm = transform(ds.counts, size_factors(ds.counts));
    const auto initial = suggest_initial_block(pac_profile(ds, tm, 6, ds.min_q() - 1));
    std::cout << "PAC suggests an initial block size of " << initial.l << "\n";

    BootstrapOptions opts;
    opts.outer_reps = 100;
    opts.inner_reps = 25;
    opts.seed = 7;
    const std::size_t l = 3;
    const auto dist = bootstrap_distribution(ds, l, opts);
    const auto p = p_values(dist.observed_t(), dist);
    const auto p_adj = bh_adjust(p);
    const auto ci = conf_intervals(dist.beta_hat, dist, 0.05);

    RunMetadata meta;
    meta.block_size = l;
    meta.outer_reps = opts.outer_reps;
    meta.inner_reps = opts.inner_reps;
    meta.seed = opts.seed;
    const auto table = assemble_results(ds.counts.taxa_ids, dist.beta_hat, ci, p, p_adj, meta);
    std::cout << results_text(table);
}
