#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "longboot/data_core.hpp"

namespace testing {

inline std::filesystem::path tmp_dir(const std::string& name) {
#ifdef LONGBOOT_TEST_TMP
    std::filesystem::path p = std::filesystem::path(LONGBOOT_TEST_TMP) / name;
#else
    std::filesystem::path p = std::filesystem::temp_directory_path() / "longboot_tests" / name;
#endif
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::filesystem::path write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
    return p;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/**
 * Dataset from a taxa x samples count table. `subject_of[s]` and `group_of[s]`
 * describe column s; times are assigned in column order within each subject.
 */
inline longboot::LongitudinalDataset make_dataset(const std::vector<std::vector<longboot::count_t>>& counts,
                                                  const std::vector<std::string>& subject_of,
                                                  const std::vector<int>& group_of) {
    using namespace longboot;
    CountMatrix cm;
    const std::size_t m = counts.size();
    const std::size_t n = counts.front().size();
    cm.counts = Matrix<count_t>(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        cm.taxa_ids.push_back("t" + std::to_string(i + 1));
        for (std::size_t s = 0; s < n; ++s) cm.counts(i, s) = counts[i][s];
    }
    SampleTable meta;
    meta.group_labels = {"a", "b"};
    std::map<std::string, std::int64_t> next_time;
    for (std::size_t s = 0; s < n; ++s) {
        const std::string id = "s" + std::to_string(s + 1);
        cm.sample_ids.push_back(id);
        meta.rows.push_back({id, subject_of[s], ++next_time[subject_of[s]], group_of[s]});
    }
    return assemble(std::move(cm), meta);
}

/// n_per_group subjects per group, q observations each, counts from fn(taxon, subject, t).
template <class Fn>
longboot::LongitudinalDataset panel(std::size_t m, std::size_t n_per_group, std::size_t q, Fn fn) {
    std::vector<std::vector<longboot::count_t>> counts(m);
    std::vector<std::string> subj;
    std::vector<int> grp;
    for (std::size_t j = 0; j < 2 * n_per_group; ++j)
        for (std::size_t t = 0; t < q; ++t) {
            subj.push_back("p" + std::to_string(j));
            grp.push_back(j < n_per_group ? 0 : 1);
            for (std::size_t i = 0; i < m; ++i) counts[i].push_back(fn(i, j, t));
        }
    return make_dataset(counts, subj, grp);
}

}  // namespace testing
