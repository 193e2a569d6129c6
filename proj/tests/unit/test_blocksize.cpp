#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "longboot/blocksize.hpp"

using namespace longboot;
using Catch::Matchers::WithinAbs;

namespace {

LongitudinalDataset ar_panel(std::size_t m, std::size_t per_group, std::size_t q, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<std::vector<double>> level(m, std::vector<double>(2 * per_group, 0.0));
    return testing::panel(m, per_group, q, [&](std::size_t i, std::size_t j, std::size_t t) {
        std::normal_distribution<double> nd(0.0, 1.0);
        double& x = level[i][j];
        x = t == 0 ? nd(gen) : 0.7 * x + nd(gen);
        const double mu = std::exp(1.5 + 0.4 * x + (j >= per_group && i == 0 ? 0.8 : 0.0));
        std::poisson_distribution<int> pd(mu);
        return static_cast<count_t>(pd(gen));
    });
}

MseProfile manual_profile(std::vector<double> full, std::vector<std::vector<std::vector<double>>> sub) {
    MseProfile p;
    p.psi_full = std::move(full);
    for (std::size_t c = 0; c < sub.size(); ++c) {
        p.candidates.push_back(c + 2);
        Matrix<double> m(sub[c].size(), p.psi_full.size());
        for (std::size_t j = 0; j < sub[c].size(); ++j)
            for (std::size_t i = 0; i < p.psi_full.size(); ++i) m(j, i) = sub[c][j][i];
        p.psi_sub.push_back(m);
    }
    fill_mse(p);
    return p;
}

}  // namespace

TEST_CASE("two-sided probability", "[blocksize]") {
    const std::vector<double> t{-2, -1, 1, 2};
    CHECK(two_sided_prob(t, 0.0) == 1.0);
    CHECK(two_sided_prob(t, 5.0) == 0.0);
    CHECK(two_sided_prob(t, 1.5) == 0.5);
    CHECK(two_sided_prob(t, -1.5) == 0.5);
    double prev = 1.0;
    for (double k = 0.0; k < 3.0; k += 0.05) {
        const double p = two_sided_prob(t, k);
        CHECK(p <= prev);
        prev = p;
    }
    CHECK_THROWS_AS(two_sided_prob(std::vector<double>{}, 1.0), ValidationError);
}

TEST_CASE("omega parsing", "[blocksize]") {
    CHECK_FALSE(Omega::parse("6").is_proportion());
    CHECK(Omega::parse("6").value == 6.0);
    CHECK(Omega::parse("0.7").is_proportion());
    CHECK(Omega::parse("1.0").value == 1.0);
    CHECK_THROWS_AS(Omega::parse("0"), UsageError);
    CHECK_THROWS_AS(Omega::parse("1.5"), UsageError);
    CHECK_THROWS_AS(Omega::parse("abc"), UsageError);
}

TEST_CASE("subsample windows", "[blocksize]") {
    const auto ds = ar_panel(3, 2, 10, 1);
    const auto w = subsample_panels(ds, Omega::count(6));
    REQUIRE(w.size() == 5);
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t s = 0; s < ds.n_subjects(); ++s) {
            const auto cols = w[j].subject(s);
            REQUIRE(cols.size() == 6);
            for (std::size_t t = 0; t < 6; ++t) CHECK(cols[t] == ds.subjects[s].columns[j + t]);
        }

    const auto whole = make_subsamples(ds, Omega::count(10));
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].counts.counts == ds.counts.counts);

    CHECK(subsample_panels(ar_panel(2, 2, 15, 2), Omega::count(10)).size() == 6);
    CHECK_THROWS_AS(subsample_panels(ds, Omega::count(11)), ValidationError);
    CHECK_THROWS_AS(subsample_panels(ds, Omega::count(0)), ValidationError);
}

TEST_CASE("ragged panels use proportion windows", "[blocksize]") {
    // subject a: 10 points, b: 6, c: 3, d: 10
    std::vector<std::string> subj;
    std::vector<int> grp;
    std::vector<std::vector<count_t>> counts(2);
    const std::vector<std::pair<std::string, std::size_t>> shape{{"a", 10}, {"b", 6}, {"c", 3}, {"d", 10}};
    for (std::size_t k = 0; k < shape.size(); ++k)
        for (std::size_t t = 0; t < shape[k].second; ++t) {
            subj.push_back(shape[k].first);
            grp.push_back(k < 2 ? 0 : 1);
            counts[0].push_back(static_cast<count_t>(1 + t));
            counts[1].push_back(static_cast<count_t>(2 + k));
        }
    const auto ds = testing::make_dataset(counts, subj, grp);
    const auto w = subsample_panels(ds, Omega::proportion(0.7));
    CHECK(window_length(Omega::proportion(0.7), 10) == 7);
    REQUIRE(w.size() == 4);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(w[j].q(0) == 7);
        CHECK(w[j].subject(0)[0] == ds.subjects[0].columns[j]);
        CHECK(w[j].q(1) == 6);  // shorter than the window: kept whole
        CHECK(w[j].q(2) == 3);
        CHECK(w[j].q(3) == 7);
    }
    const auto dflt = default_omega(ds);
    CHECK(dflt.is_proportion());
    CHECK_THAT(dflt.value, WithinAbs(0.6, 1e-15));
    CHECK(default_omega(ar_panel(2, 2, 10, 3)).value == 6.0);
    CHECK(default_omega(ar_panel(2, 2, 15, 3)).value == 11.0);
    CHECK(default_omega(ar_panel(2, 2, 4, 3)).value == 1.0);
}

TEST_CASE("scale-up rule", "[blocksize]") {
    CHECK(scale_up(3, 10, Omega::count(6), 10) == 3);
    CHECK(scale_up(2, 10, Omega::proportion(0.7), 10) == 2);
    for (std::size_t l = 2; l < 8; ++l) {
        CHECK(scale_up(l, 10, Omega::count(10), 10) == l);
        CHECK(scale_up(l, 10, Omega::proportion(1.0), 10) == l);
    }
    CHECK(scale_up(4, 15, Omega::count(5), 15) == 5);  // 3^(1/5) * 4 = 4.98
    CHECK(scale_up(9, 20, Omega::count(2), 6) == 6);    // clamped to the shortest series
    CHECK(scale_up(1, 10, Omega::count(9), 10) == 2);   // clamped below at 2
    std::size_t prev = 0;
    for (std::size_t l = 1; l < 12; ++l) {
        const auto v = scale_up(l, 40, Omega::count(7), 40);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(scale_up(3, 10, Omega::count(6), 10, 0), ValidationError);
}

TEST_CASE("MSE arithmetic", "[blocksize]") {
    SECTION("constant subsample values equal to the full value give zero") {
        const auto p = manual_profile({0.3, 0.8}, {{{0.3, 0.8}, {0.3, 0.8}, {0.3, 0.8}}});
        CHECK(p.mse(0, 0) == 0.0);
        CHECK(p.mse(1, 0) == 0.0);
        CHECK(p.l1_norms[0] == 0.0);
    }
    SECTION("five residuals of 0.1") {
        const auto p = manual_profile({0.5}, {{{0.4}, {0.6}, {0.4}, {0.6}, {0.4}}});
        CHECK_THAT(p.mse(0, 0), WithinAbs(0.01, 1e-15));
    }
    SECTION("l1 norms are column sums") {
        const auto p = manual_profile({0.2, 0.9}, {{{0.1, 0.5}, {0.3, 0.7}}, {{0.2, 0.1}, {0.0, 0.9}}});
        for (std::size_t c = 0; c < 2; ++c) CHECK_THAT(p.l1_norms[c], WithinAbs(p.mse(0, c) + p.mse(1, c), 1e-15));
        CHECK_THAT(p.mse(1, 1), WithinAbs((0.64 + 0.0) / 2.0, 1e-15));
    }
}

TEST_CASE("block size selection", "[blocksize]") {
    MseProfile p;
    p.candidates = {2, 3, 4};
    p.l1_norms = {5, 2, 7};
    CHECK(select_block_size(p) == 3);
    p.l1_norms = {2, 2, 7};
    CHECK(select_block_size(p) == 2);
    p.candidates = {4, 3, 2};
    p.l1_norms = {1, 3, 1};
    CHECK(select_block_size(p) == 2);

    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        MseProfile a;
        a.candidates = {2, 3, 4, 5};
        for (int c = 0; c < 4; ++c) a.l1_norms.push_back(std::floor(ud(gen) * 5.0));
        MseProfile b = a;
        const double scale = 0.001 + 100.0 * ud(gen);
        for (auto& v : b.l1_norms) v *= scale;
        CHECK(select_block_size(a) == select_block_size(b));
    }
    CHECK_THROWS_AS(select_block_size(MseProfile{}), ValidationError);
}

TEST_CASE("mse_profile validates candidates", "[blocksize]") {
    const auto ds = ar_panel(3, 2, 8, 4);
    MseOptions o;
    o.l_initial = 2;
    CHECK_THROWS_AS(mse_profile(ds, o), ValidationError);
    o.l_initial = 4;
    o.candidates = {2, 4};
    CHECK_THROWS_AS(mse_profile(ds, o), ValidationError);
    o.candidates = {1};
    CHECK_THROWS_AS(mse_profile(ds, o), ValidationError);
    CHECK(default_candidates(5) == std::vector<std::size_t>{2, 3, 4});
}

TEST_CASE("mse_profile matches a straight-line reimplementation", "[blocksize]") {
    const auto ds = ar_panel(2, 3, 8, 5);
    MseOptions o;
    o.l_initial = 4;
    o.omega = Omega::count(5);
    o.bootstrap.outer_reps = 30;
    o.bootstrap.inner_reps = 5;
    o.bootstrap.seed = 19;
    const auto prof = mse_profile(ds, o);
    REQUIRE(prof.candidates == std::vector<std::size_t>{2, 3});
    REQUIRE(prof.n_windows == 4);

    // full-data run at l_I, k from its studentized observed statistic
    BootstrapOptions bo = o.bootstrap;
    bo.seed = full_run_seed(19);
    const auto full = bootstrap_distribution(ds, 4, bo);
    std::vector<double> k(2), psi(2);
    for (std::size_t i = 0; i < 2; ++i) {
        k[i] = full.beta_hat[i] / full.se_outer[i];
        double hits = 0;
        for (std::size_t r = 0; r < 30; ++r) hits += std::abs(full.t_star(i, r)) >= std::abs(k[i]) ? 1 : 0;
        psi[i] = hits / 30.0;
    }
    const auto subs = make_subsamples(ds, Omega::count(5));
    for (std::size_t c = 0; c < 2; ++c) {
        double l1 = 0;
        for (std::size_t i = 0; i < 2; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < subs.size(); ++j) {
                BootstrapOptions so = o.bootstrap;
                so.seed = subsample_seed(19, j, c);
                const auto d = bootstrap_distribution(subs[j], prof.candidates[c], so);
                double hits = 0;
                for (std::size_t r = 0; r < 30; ++r) hits += std::abs(d.t_star(i, r)) >= std::abs(k[i]) ? 1 : 0;
                const double diff = psi[i] - hits / 30.0;
                acc += diff * diff;
            }
            const double mse = acc / static_cast<double>(subs.size());
            CHECK_THAT(prof.mse(i, c), WithinAbs(mse, 1e-12));
            l1 += mse;
        }
        CHECK_THAT(prof.l1_norms[c], WithinAbs(l1, 1e-12));
    }

    o.bootstrap.threads = 4;
    const auto again = mse_profile(ds, o);
    CHECK(again.mse == prof.mse);
}
