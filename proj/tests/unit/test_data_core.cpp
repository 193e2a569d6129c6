#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "longboot/data_core.hpp"

using namespace longboot;

namespace {

const std::string kMeta4 =
    "sample_id\tsubject_id\ttime\tgroup\n"
    "S1\tA\t1\tterm\nS2\tA\t2\tterm\nS3\tB\t1\tpreterm\nS4\tB\t2\tpreterm\n";

}  // namespace

TEST_CASE("load_counts parses a small table", "[data_core]") {
    const auto dir = testing::tmp_dir("dc_load");
    const auto p = testing::write_file(dir / "c.tsv", "taxon\tS1\tS2\tS3\nt1\t1\t0\t5\nt2\t3\t4\t0\n");
    const auto cm = load_counts(p);
    CHECK(cm.n_taxa() == 2);
    CHECK(cm.n_samples() == 3);
    CHECK(cm.counts(0, 2) == 5);
    CHECK(cm.counts(1, 1) == 4);
    CHECK(cm.sample_ids == std::vector<std::string>{"S1", "S2", "S3"});
}

TEST_CASE("load_counts accepts CSV and CRLF", "[data_core]") {
    const auto dir = testing::tmp_dir("dc_csv");
    const auto p = testing::write_file(dir / "c.csv", "taxon,S1,S2\r\nt1,1,2\r\n");
    const auto cm = load_counts(p);
    CHECK(cm.n_samples() == 2);
    CHECK(cm.counts(0, 1) == 2);
}

TEST_CASE("load_counts rejects bad input", "[data_core]") {
    const auto dir = testing::tmp_dir("dc_bad");
    CHECK_THROWS_AS(load_counts(testing::write_file(dir / "dup.tsv", "taxon\tS1\tS1\nt1\t1\t2\n")), ValidationError);
    CHECK_THROWS_WITH(load_counts(testing::write_file(dir / "empty.tsv", "taxon\tS1\tS2\n")),
                      Catch::Matchers::ContainsSubstring("no taxa"));
    CHECK_THROWS_AS(load_counts(testing::write_file(dir / "neg.tsv", "taxon\tS1\nt1\t-1\n")), ValidationError);
    CHECK_THROWS_AS(load_counts(testing::write_file(dir / "frac.tsv", "taxon\tS1\nt1\t1.5\n")), ValidationError);
    CHECK_THROWS_AS(load_counts(testing::write_file(dir / "junk.tsv", "taxon\tS1\nt1\tabc\n")), MalformedInput);
    try {
        (void)load_counts(testing::write_file(dir / "junk2.tsv", "taxon\tS1\tS2\nt1\t1\t2\nt2\t3\tx\n"));
        FAIL("expected an error");
    } catch (const MalformedInput& e) {
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("row 3") &&
                                 Catch::Matchers::ContainsSubstring("column 3"));
    }
}

TEST_CASE("load_metadata maps groups and validates", "[data_core]") {
    const auto dir = testing::tmp_dir("dc_meta");
    const auto p = testing::write_file(dir / "m.tsv", kMeta4);
    const auto st = load_metadata(p);
    CHECK(st.rows.size() == 4);
    CHECK(st.n_subjects() == 2);
    // lexicographic default: "preterm" < "term"
    CHECK(st.group_labels[0] == "preterm");
    CHECK(st.rows[0].group == 1);

    LoadOptions o;
    o.reference_level = "term";
    const auto st2 = load_metadata(p, o);
    CHECK(st2.group_labels[0] == "term");
    CHECK(st2.group_labels[1] == "preterm");
    CHECK(st2.rows[0].group == 0);
    CHECK(st2.rows[2].group == 1);

    o.reference_level = "other";
    CHECK_THROWS_AS(load_metadata(p, o), ValidationError);

    const auto two_labels = testing::write_file(
        dir / "m2.tsv", "sample_id\tsubject_id\ttime\tgroup\nS1\tA\t1\tterm\nS2\tA\t2\tpreterm\n");
    CHECK_THROWS_WITH(load_metadata(two_labels), Catch::Matchers::ContainsSubstring("two group labels"));
    const auto dup_time = testing::write_file(
        dir / "m3.tsv", "sample_id\tsubject_id\ttime\tgroup\nS1\tA\t1\tterm\nS2\tA\t1\tterm\n");
    CHECK_THROWS_AS(load_metadata(dup_time), ValidationError);
    const auto reordered = testing::write_file(
        dir / "m4.tsv", "group\ttime\tsample_id\tsubject_id\nx\t1\tS1\tA\ny\t1\tS2\tB\n");
    CHECK(load_metadata(reordered).rows[1].subject_id == "B");
}

TEST_CASE("assemble builds time-ordered subject views", "[data_core]") {
    const auto dir = testing::tmp_dir("dc_asm");
    const auto c = testing::write_file(dir / "c.tsv", "taxon\tS2\tS1\tS4\tS3\nt1\t1\t2\t3\t4\n");
    const auto m = testing::write_file(dir / "m.tsv", kMeta4);
    const auto ds = assemble(load_counts(c), load_metadata(m));
    REQUIRE(ds.n_subjects() == 2);
    CHECK(ds.subjects[0].subject_id == "A");
    // S1 (time 1) is column 1, S2 (time 2) is column 0
    CHECK(ds.subjects[0].columns == std::vector<std::size_t>{1, 0});
    std::size_t total = 0;
    for (const auto& v : ds.subjects) total += v.q();
    CHECK(total == ds.n_samples());

    const auto extra = testing::write_file(dir / "mx.tsv", kMeta4 + "S9\tC\t1\tterm\n");
    CHECK_THROWS_WITH(assemble(load_counts(c), load_metadata(extra)),
                      Catch::Matchers::ContainsSubstring("S9(metadata only)"));
}

TEST_CASE("assemble handles the Setting-Z shape and a single sample", "[data_core]") {
    const auto ds = testing::panel(50, 10, 10, [](std::size_t i, std::size_t j, std::size_t t) {
        return static_cast<count_t>(i + j + t);
    });
    CHECK(ds.n_samples() == 200);
    CHECK(ds.n_subjects() == 20);
    CHECK(ds.equal_q());

    const auto one = testing::make_dataset({{3}}, {"A"}, {0});
    REQUIRE(one.n_subjects() == 1);
    CHECK(one.subjects[0].q() == 1);
}

TEST_CASE("prevalence_filter keeps taxa at the threshold", "[data_core]") {
    std::vector<std::vector<count_t>> counts(3, std::vector<count_t>(100, 0));
    for (int s = 0; s < 6; ++s) counts[0][s] = 1;  // 6/100
    for (int s = 0; s < 4; ++s) counts[1][s] = 1;  // 4/100
    for (int s = 0; s < 100; ++s) counts[2][s] = 2;
    std::vector<std::string> subj;
    std::vector<int> grp;
    for (int s = 0; s < 100; ++s) {
        subj.push_back("p" + std::to_string(s / 10));
        grp.push_back(s < 50 ? 0 : 1);
    }
    const auto ds = testing::make_dataset(counts, subj, grp);
    const auto f = prevalence_filter(ds, 0.05);
    CHECK(f.counts.taxa_ids == std::vector<std::string>{"t1", "t3"});
    CHECK(f.n_samples() == 100);
    CHECK(serialize(prevalence_filter(f, 0.05)) == serialize(f));
    CHECK_THROWS_WITH(prevalence_filter(testing::make_dataset({{0, 0}}, {"a", "b"}, {0, 1}), 0.5),
                      Catch::Matchers::ContainsSubstring("empty after filtering"));
    CHECK_THROWS_AS(prevalence_filter(ds, 0.0), ValidationError);
}

TEST_CASE("prevalence_filter keeps exactly the qualifying count", "[data_core]") {
    // 1537 taxa of which 97 are present in at least 10% of 40 samples
    std::vector<std::vector<count_t>> counts(1537, std::vector<count_t>(40, 0));
    for (std::size_t i = 0; i < 1537; ++i) {
        const int present = i < 97 ? 4 + static_cast<int>(i % 30) : static_cast<int>(i % 4);
        for (int s = 0; s < present; ++s) counts[i][(i + static_cast<std::size_t>(s)) % 40] = 1;
    }
    std::vector<std::string> subj;
    std::vector<int> grp;
    for (int s = 0; s < 40; ++s) {
        subj.push_back("p" + std::to_string(s / 4));
        grp.push_back(s < 20 ? 0 : 1);
    }
    const auto ds = testing::make_dataset(counts, subj, grp);
    CHECK(prevalence_filter(ds, 0.10).n_taxa() == 97);
}

TEST_CASE("loading the same files twice serializes identically", "[data_core]") {
    const auto dir = testing::tmp_dir("dc_det");
    const auto ds = testing::panel(4, 2, 3, [](std::size_t i, std::size_t j, std::size_t t) {
        return static_cast<count_t>((i * 7 + j * 3 + t) % 5);
    });
    write_dataset(ds, dir / "c.tsv", dir / "m.tsv");
    const auto a = assemble(load_counts(dir / "c.tsv"), load_metadata(dir / "m.tsv"));
    const auto b = assemble(load_counts(dir / "c.tsv"), load_metadata(dir / "m.tsv"));
    CHECK(serialize(a) == serialize(b));
    CHECK(serialize(a) == serialize(ds));
}
