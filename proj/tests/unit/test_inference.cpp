#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "longboot/inference.hpp"

using namespace longboot;
using Catch::Matchers::WithinAbs;

namespace {

/// Rejection set of the direct step-up rule: reject p_(1..k) for the largest k with p_(k) <= a k / m.
std::vector<bool> step_up(const std::vector<double>& p, double a) {
    std::vector<double> s = p;
    std::sort(s.begin(), s.end());
    const double m = static_cast<double>(p.size());
    double cut = -1.0;
    for (std::size_t k = 1; k <= s.size(); ++k)
        if (s[k - 1] <= a * static_cast<double>(k) / m) cut = s[k - 1];
    std::vector<bool> out;
    for (double v : p) out.push_back(v <= cut);
    return out;
}

}  // namespace

TEST_CASE("BH examples", "[inference]") {
    const auto a = bh_adjust(std::vector<double>{0.01, 0.02, 0.03});
    for (double v : a) CHECK_THAT(v, WithinAbs(0.03, 1e-15));
    CHECK(bh_adjust(std::vector<double>{0.2}) == std::vector<double>{0.2});
    CHECK(bh_adjust(std::vector<double>{1, 1, 1}) == std::vector<double>{1, 1, 1});
    const auto b = bh_adjust(std::vector<double>{0.04, 0.001, 0.5, 0.03});
    CHECK_THAT(b[1], WithinAbs(0.004, 1e-15));
    CHECK_THAT(b[3], WithinAbs(0.04 * 4 / 3, 1e-15));
    CHECK_THAT(b[0], WithinAbs(0.04 * 4 / 3, 1e-15));
    CHECK_THAT(b[2], WithinAbs(0.5, 1e-15));
    CHECK_THROWS_AS(bh_adjust(std::vector<double>{0.0}), ValidationError);
    CHECK_THROWS_AS(bh_adjust(std::vector<double>{1.5}), ValidationError);
    CHECK(bh_adjust(std::vector<double>{}).empty());
}

TEST_CASE("BH properties", "[inference]") {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> ud(1e-6, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t m = 1 + static_cast<std::size_t>(trial % 40);
        std::vector<double> p(m);
        for (auto& v : p) v = trial % 3 == 0 ? ud(gen) * 0.05 : ud(gen);
        if (m > 3) p[1] = p[2];  // ties
        const auto q = bh_adjust(p);
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(q[i] >= p[i]);
            CHECK(q[i] <= 1.0);
            for (std::size_t j = 0; j < m; ++j)
                if (p[i] <= p[j]) CHECK(q[i] <= q[j]);
        }
        // order invariance
        std::vector<std::size_t> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), gen);
        std::vector<double> pp(m);
        for (std::size_t i = 0; i < m; ++i) pp[i] = p[perm[i]];
        const auto qq = bh_adjust(pp);
        for (std::size_t i = 0; i < m; ++i) CHECK(qq[i] == q[perm[i]]);
        // rejection sets agree with the direct step-up definition
        for (double a : {0.01, 0.05, 0.1, 0.25}) {
            const auto direct = step_up(p, a);
            for (std::size_t i = 0; i < m; ++i) CHECK((q[i] <= a) == direct[i]);
        }
    }
}

TEST_CASE("results assembly", "[inference]") {
    const std::vector<std::string> taxa{"a", "b", "c"};
    const std::vector<double> beta{0.1, 2.0, -1.0};
    const std::vector<Interval> ci{{-0.5, 0.6}, {1.0, 3.0}, {-0.8, 0.2}};  // c's interval misses its beta
    const std::vector<double> p{0.5, 0.001, 0.04};
    const std::vector<double> p_adj{0.5, 0.003, 0.06};
    RunMetadata meta;
    meta.fdr = 0.05;
    meta.block_size = 3;
    const auto t = assemble_results(taxa, beta, ci, p, p_adj, meta);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].taxon == "b");
    CHECK(t.rows[1].taxon == "a");
    CHECK(t.rows[2].taxon == "c");
    CHECK(t.rows[0].significant);
    CHECK_FALSE(t.rows[1].significant);
    CHECK_FALSE(t.rows[2].significant);  // .06 > .05
    CHECK(t.rows[2].lcl == -1.0);
    CHECK(t.widened_intervals == 1);
    for (const auto& r : t.rows) {
        CHECK(r.lcl <= r.beta);
        CHECK(r.beta <= r.ucl);
    }

    const auto flags = assemble_results(std::vector<std::string>{"x", "y"}, std::vector<double>{1, 0},
                                        std::vector<Interval>{{0, 2}, {-1, 1}}, std::vector<double>{.01, .02},
                                        std::vector<double>{.04, .06}, meta);
    CHECK(flags.rows[0].significant);
    CHECK_FALSE(flags.rows[1].significant);

    CHECK_THROWS_AS(assemble_results(std::vector<std::string>{}, std::vector<double>{}, std::vector<Interval>{},
                                     std::vector<double>{}, std::vector<double>{}, meta),
                    ValidationError);
    CHECK_THROWS_AS(assemble_results(taxa, std::vector<double>{1.0}, ci, p, p_adj, meta), ValidationError);
}

TEST_CASE("results files", "[inference]") {
    const auto dir = testing::tmp_dir("inf_write");
    RunMetadata meta;
    meta.seed = 7;
    meta.extra["note"] = "x";
    const auto t = assemble_results(std::vector<std::string>{"a"}, std::vector<double>{0.5},
                                    std::vector<Interval>{{0.1, 0.9}}, std::vector<double>{0.02},
                                    std::vector<double>{0.02}, meta);
    write_results(t, dir / "r.csv");
    const auto text = testing::read_file(dir / "r.csv");
    CHECK(text.rfind("taxon,beta,lcl,ucl,p,p_adj,significant\n", 0) == 0);
    CHECK(text.find("a,0.5,") != std::string::npos);
    CHECK(text.find(",true") != std::string::npos);
    const auto j = nlohmann::json::parse(testing::read_file(dir / "r.csv.meta.json"));
    CHECK(j["seed"] == 7);
    CHECK(j["note"] == "x");
    CHECK(j["n_taxa"] == 1);
}
