#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "longboot/diagnostics.hpp"

using namespace longboot;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> ar1(std::size_t n, double phi, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> x(n);
    double v = nd(gen) / std::sqrt(1.0 - phi * phi);
    for (auto& e : x) {
        v = phi * v + nd(gen);
        e = v;
    }
    return x;
}

/// PACF at lag k as the last coefficient of the order-k Yule-Walker solution (Gaussian elimination).
std::vector<double> pacf_oracle(const std::vector<double>& x, std::size_t max_lag) {
    const std::size_t n = x.size();
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> g(max_lag + 1);
    for (std::size_t h = 0; h <= max_lag; ++h) {
        double s = 0;
        for (std::size_t t = 0; t + h < n; ++t) s += (x[t] - mean) * (x[t + h] - mean);
        g[h] = s / static_cast<double>(n);
    }
    std::vector<double> out;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        std::vector<std::vector<double>> a(k, std::vector<double>(k + 1));
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) a[r][c] = g[r > c ? r - c : c - r];
            a[r][k] = g[r + 1];
        }
        for (std::size_t c = 0; c < k; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < k; ++r)
                if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
            std::swap(a[c], a[piv]);
            for (std::size_t r = 0; r < k; ++r) {
                if (r == c) continue;
                const double f = a[r][c] / a[c][c];
                for (std::size_t cc = c; cc <= k; ++cc) a[r][cc] -= f * a[c][cc];
            }
        }
        out.push_back(a[k - 1][k] / a[k - 1][k - 1]);
    }
    return out;
}

PacTable table_from(const std::vector<std::vector<double>>& pac_by_entry, std::size_t pairs = 40) {
    PacTable t;
    t.max_lag = pac_by_entry.front().size();
    for (std::size_t e = 0; e < pac_by_entry.size(); ++e)
        for (std::size_t h = 1; h <= t.max_lag; ++h)
            t.entries.push_back({e / 2, static_cast<int>(e % 2), h, pac_by_entry[e][h - 1], pairs, false});
    return t;
}

double nb_pmf(double k, double mu, double alpha) {
    const double r = 1.0 / alpha;
    return std::exp(std::lgamma(k + r) - std::lgamma(r) - std::lgamma(k + 1) + r * std::log(r / (r + mu)) +
                    k * std::log(mu / (r + mu)));
}

}  // namespace

TEST_CASE("PACF of white noise stays inside the 2/sqrt(n) band", "[diagnostics]") {
    int inside = 0;
    const int trials = 400;
    for (int s = 0; s < trials; ++s) {
        const auto x = ar1(200, 0.0, 1000 + static_cast<std::uint64_t>(s));
        bool d = false;
        const auto p = pacf(x, 5, d);
        bool ok = true;
        for (double v : p) ok &= std::abs(v) < 0.2;
        inside += ok ? 1 : 0;
    }
    CHECK(static_cast<double>(inside) / trials > 0.95);
}

TEST_CASE("PACF of an AR(1) series", "[diagnostics]") {
    const auto x = ar1(500, 0.8, 42);
    bool d = false;
    const auto p = pacf(x, 6, d);
    CHECK_FALSE(d);
    CHECK(p[0] > 0.7);
    CHECK(p[0] < 0.9);
    CHECK(std::abs(p[1]) < 0.15);
    for (double v : p) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("Durbin-Levinson agrees with direct Yule-Walker solves", "[diagnostics]") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = ar1(60 + 7 * s, 0.5, 77 + s);
        bool d = false;
        const auto p = pacf(x, 8, d);
        const auto o = pacf_oracle(x, 8);
        for (std::size_t k = 0; k < 8; ++k) CHECK_THAT(p[k], WithinAbs(o[k], 1e-10));
    }
}

TEST_CASE("PACF is invariant to shift and positive scale", "[diagnostics]") {
    const auto x = ar1(80, 0.6, 5);
    std::vector<double> y;
    for (double v : x) y.push_back(3.7 * v + 12.0);
    bool d = false;
    const auto a = pacf(x, 6, d);
    const auto b = pacf(y, 6, d);
    for (std::size_t k = 0; k < 6; ++k) CHECK_THAT(a[k], WithinAbs(b[k], 1e-10));
}

TEST_CASE("constant series is flagged degenerate", "[diagnostics]") {
    const std::vector<double> c(30, 2.5);
    bool d = false;
    const auto p = pacf(c, 4, d);
    CHECK(d);
    for (double v : p) CHECK(v == 0.0);
}

TEST_CASE("pac_profile on panels", "[diagnostics]") {
    std::mt19937_64 gen(9);
    const auto ds = testing::panel(8, 3, 12, [&](std::size_t i, std::size_t, std::size_t t) {
        std::poisson_distribution<int> pd(2.0 + static_cast<double>(i) + static_cast<double>(t % 3));
        return static_cast<count_t>(pd(gen));
    });
    auto tm = transform(ds.counts, size_factors(ds.counts));
    const auto table = pac_profile(ds, tm, 6, 5);
    CHECK(table.taxa.size() == 6);
    CHECK(table.entries.size() == 6 * 2 * 5);
    CHECK(table.warnings.empty());
    for (const auto& e : table.entries) {
        CHECK(std::abs(e.pac) <= 1.0);
        CHECK(e.pairs == 3 * (12 - e.lag));
    }
    // most abundant taxa first
    CHECK(table.taxa.front() == 7);

    // shifting and rescaling a row leaves its PACs unchanged (subject-average mode too)
    for (auto mode : {PacMode::group_mean, PacMode::subject_average}) {
        const auto before = pac_profile(ds, tm, 8, 4, mode);
        auto tm2 = tm;
        for (auto& v : tm2.values.row(3)) v = 2.0 * v + 1.0;
        const auto after = pac_profile(ds, tm2, 8, 4, mode);
        auto find = [](const PacTable& t, std::size_t taxon, int g, std::size_t h) {
            for (const auto& e : t.entries)
                if (e.taxon == taxon && e.group == g && e.lag == h) return e.pac;
            return -9.0;
        };
        for (int g = 0; g < 2; ++g)
            for (std::size_t h = 1; h <= 4; ++h) CHECK_THAT(find(before, 3, g, h), WithinAbs(find(after, 3, g, h), 1e-10));
    }

    CHECK_FALSE(pac_profile(ds, tm, 2, 12).warnings.empty());
    CHECK_THROWS_AS(pac_profile(ds, tm, 0, 3), ValidationError);
    CHECK_THROWS_AS(pac_profile(ds, tm, 2, 0), ValidationError);
}

TEST_CASE("initial block suggestion", "[diagnostics]") {
    SECTION("all below from lag 4") {
        const auto t = table_from({{0.9, 0.5, 0.3, 0.1, 0.05, 0.2}, {0.8, 0.2, 0.1, -0.2, 0.1, 0.0}});
        const auto s = suggest_initial_block(t);
        CHECK(s.l == 5);
        CHECK(s.lag == 4);
        CHECK(s.warning.empty());
    }
    SECTION("below from lag 8") {
        const auto t = table_from({{0.9, 0.6, 0.5, 0.4, 0.3, 0.3, -0.3, 0.1, 0.1, 0.0}});
        CHECK(suggest_initial_block(t).l == 9);
    }
    SECTION("all zero") {
        CHECK(suggest_initial_block(table_from({{0, 0, 0}, {0, 0, 0}})).l == 2);
    }
    SECTION("lags with few pairs are ignored") {
        auto t = table_from({{0.9, 0.1, 0.1}});
        t.entries[1].pairs = 3;  // lag 2 unsupported
        CHECK(suggest_initial_block(t).l == 4);
    }
    SECTION("no qualifying lag") {
        const auto s = suggest_initial_block(table_from({{0.9, 0.8, 0.7}}));
        CHECK(s.l == 4);
        CHECK_FALSE(s.warning.empty());
    }
    SECTION("monotone in the threshold") {
        std::mt19937_64 gen(4);
        std::uniform_real_distribution<double> ud(-1.0, 1.0);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<std::vector<double>> pac(4, std::vector<double>(8));
            for (auto& r : pac)
                for (std::size_t h = 0; h < 8; ++h) r[h] = ud(gen) / static_cast<double>(1 + h / 2);
            const auto t = table_from(pac);
            std::size_t prev = 100;
            for (double th = 0.05; th < 1.0; th += 0.05) {
                const auto l = suggest_initial_block(t, th).l;
                CHECK(l <= prev);
                prev = l;
            }
        }
    }
    CHECK_THROWS_AS(suggest_initial_block(PacTable{}), ValidationError);
}

TEST_CASE("lag-pair tables", "[diagnostics]") {
    std::vector<std::string> subj;
    std::vector<int> grp;
    std::vector<std::vector<count_t>> counts(1);
    for (std::size_t t = 0; t < 5; ++t) {
        subj.push_back("a");
        grp.push_back(0);
        counts[0].push_back(4);
    }
    for (std::size_t t = 0; t < 2; ++t) {
        subj.push_back("b");
        grp.push_back(1);
        counts[0].push_back(static_cast<count_t>(t + 1));
    }
    const auto ds = testing::make_dataset(counts, subj, grp);
    const auto tm = transform(ds.counts, SizeFactors{std::vector<double>(7, 1.0), false});
    const std::vector<std::size_t> l2{2};
    CHECK(lag_table(tm, ds, 0, l2).size() == 3);  // subject a: 5 - 2; subject b: none
    const std::vector<std::size_t> lags{1, 2, 3, 6};
    const auto rows = lag_table(tm, ds, 0, lags);
    CHECK(rows.size() == (4 + 3 + 2 + 0) + (1 + 0 + 0 + 0));
    for (const auto& r : rows)
        if (r.subject_id == "a") CHECK(r.x_t == r.x_t_plus_h);
    CHECK_THROWS_AS(lag_table(tm, ds, 0, std::vector<std::size_t>{0}), ValidationError);
    CHECK_THROWS_AS(lag_table(tm, ds, 4, l2), ValidationError);
}

TEST_CASE("KS distance", "[diagnostics]") {
    const std::vector<double> a{1, 2, 3, 4};
    const std::vector<double> b{5, 6, 7};
    CHECK(ks_distance(a, a) == 0.0);
    CHECK(ks_distance(a, b) == 1.0);
    CHECK_THAT(ks_distance(a, std::vector<double>{2.5, 3.5}), WithinAbs(0.5, 1e-15));
    CHECK_THAT(ks_distance(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 2}), WithinAbs(1.0 / 3.0, 1e-15));
}

TEST_CASE("gamma-Poisson CDF and quantile", "[diagnostics]") {
    for (const auto& [mu, alpha] : std::vector<std::pair<double, double>>{{3.0, 0.5}, {12.0, 0.1}, {0.7, 2.0}}) {
        const GammaPoisson gp{mu, alpha};
        double acc = 0;
        for (int k = 0; k < 60; ++k) {
            acc += nb_pmf(k, mu, alpha);
            CHECK_THAT(gp.cdf(k), WithinAbs(acc, 1e-10));
        }
        for (double u : {0.01, 0.3, 0.5, 0.9, 0.999}) {
            const double q = gp.quantile(u);
            CHECK(gp.cdf(q) >= u);
            if (q > 0) CHECK(gp.cdf(q - 1) < u);
        }
    }
    const GammaPoisson pois{4.0, 0.0};
    CHECK_THAT(pois.cdf(2), WithinAbs(std::exp(-4.0) * (1 + 4 + 8), 1e-12));
    CHECK(pois.cdf(-1) == 0.0);
}

TEST_CASE("moment fit of the gamma-Poisson", "[diagnostics]") {
    const std::vector<double> y{0, 2, 4, 10};
    const auto gp = fit_gamma_poisson(y);
    CHECK(gp.mu == 4.0);
    // variance (16 + 4 + 0 + 36) / 3
    CHECK_THAT(gp.alpha, WithinRel((56.0 / 3.0 - 4.0) / 16.0, 1e-12));
    CHECK(fit_gamma_poisson(std::vector<double>{3, 3, 3}).alpha == 0.0);
}

TEST_CASE("dispersion perturbation", "[diagnostics]") {
    std::mt19937_64 gen(12);
    const auto ds = testing::panel(4, 10, 10, [&](std::size_t i, std::size_t, std::size_t) {
        std::negative_binomial_distribution<int> nb(2, 2.0 / (2.0 + 5.0 + static_cast<double>(i)));
        return static_cast<count_t>(nb(gen));
    });
    const auto same = perturb_dispersion(ds, 1.0, 3);
    CHECK(same.counts.counts == ds.counts.counts);

    const auto wide = perturb_dispersion(ds, 2.0, 3);
    CHECK(wide.counts.counts == perturb_dispersion(ds, 2.0, 3).counts.counts);
    for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> a, b;
        for (std::size_t s = 0; s < ds.n_samples(); ++s) {
            a.push_back(static_cast<double>(ds.counts.counts(i, s)));
            b.push_back(static_cast<double>(wide.counts.counts(i, s)));
        }
        const auto fa = fit_gamma_poisson(a);
        const auto fb = fit_gamma_poisson(b);
        CHECK_THAT(fb.mu, WithinRel(fa.mu, 0.15));
        CHECK(fb.alpha > 1.3 * fa.alpha);
    }
    CHECK_THROWS_AS(perturb_dispersion(ds, 0.0, 1), ValidationError);
}

TEST_CASE("pivot comparison", "[diagnostics]") {
    std::mt19937_64 gen(21);
    const auto ds = testing::panel(5, 4, 6, [&](std::size_t i, std::size_t, std::size_t) {
        std::poisson_distribution<int> pd(4.0 + static_cast<double>(i));
        return static_cast<count_t>(pd(gen));
    });
    BootstrapOptions o;
    o.outer_reps = 40;
    o.inner_reps = 5;
    const auto d = bootstrap_distribution(ds, 2, o);
    const auto self = compare_pivots(d, d, 9);
    CHECK(self.mean_ks_t == 0.0);
    CHECK(self.mean_ks_root == 0.0);
    REQUIRE(self.taxa.size() == 5);
    CHECK(self.taxa[0].q_original.size() == 9);
    CHECK(self.taxa[0].q_original == self.taxa[0].q_perturbed);

    PivotOptions po;
    po.bootstrap = o;
    const auto pc = pivot_check(ds, 2.0, po);
    CHECK(pc.taxa.size() == 5);
    CHECK(pc.mean_ks_t >= 0.0);
    CHECK(pc.mean_ks_t <= 1.0);
    CHECK_THROWS_AS(pivot_check(ds, 0.0, po), ValidationError);
}

TEST_CASE("SVG rendering", "[diagnostics]") {
    SvgPlot p("t", "x", "y");
    p.add_series("a", {0, 1, 2}, {1, 0, 2}, true);
    p.add_hline(0.25);
    p.set_diagonal(true);
    const auto s = p.str();
    CHECK(s.rfind("<svg", 0) == 0);
    CHECK(s.find("polyline") != std::string::npos);
    CHECK(s.find("</svg>") != std::string::npos);
}
