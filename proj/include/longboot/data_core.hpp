#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "longboot/error.hpp"
#include "longboot/io.hpp"
#include "longboot/matrix.hpp"

namespace longboot {

using count_t = std::int64_t;

/// Abundance table: taxa (rows) by samples (columns).
struct CountMatrix {
    std::vector<std::string> taxa_ids;
    std::vector<std::string> sample_ids;
    Matrix<count_t> counts;

    [[nodiscard]] std::size_t n_taxa() const noexcept { return counts.rows(); }
    [[nodiscard]] std::size_t n_samples() const noexcept { return counts.cols(); }

    /// Throws ValidationError on any broken invariant.
    void validate() const {
        if (taxa_ids.empty()) throw ValidationError("data_core", "no taxa");
        if (sample_ids.empty()) throw ValidationError("data_core", "no samples");
        if (counts.rows() != taxa_ids.size() || counts.cols() != sample_ids.size())
            throw ValidationError("data_core", "count matrix shape does not match its ids");
        std::unordered_set<std::string> seen;
        for (const auto& id : taxa_ids)
            if (!seen.insert(id).second)
                throw ValidationError("data_core", "duplicate taxon id '" + id + "'");
        seen.clear();
        for (const auto& id : sample_ids)
            if (!seen.insert(id).second)
                throw ValidationError("data_core", "duplicate sample id '" + id + "'");
        for (std::size_t i = 0; i < counts.rows(); ++i)
            for (std::size_t s = 0; s < counts.cols(); ++s)
                if (counts(i, s) < 0)
                    throw ValidationError("data_core", "negative count for taxon '" + taxa_ids[i] +
                                                           "' in sample '" + sample_ids[s] + "'");
    }
};

struct SampleRow {
    std::string sample_id;
    std::string subject_id;
    std::int64_t time = 0;
    int group = 0;
};

/// Per-sample metadata. group_labels[g] is the original label coded as g.
struct SampleTable {
    std::vector<SampleRow> rows;
    std::array<std::string, 2> group_labels;

    void validate() const {
        std::map<std::string, int> subject_group;
        std::set<std::pair<std::string, std::int64_t>> subject_time;
        std::unordered_set<std::string> ids;
        for (const auto& r : rows) {
            if (r.group != 0 && r.group != 1)
                throw ValidationError("data_core", "group must be coded 0/1");
            if (!ids.insert(r.sample_id).second)
                throw ValidationError("data_core", "duplicate sample id '" + r.sample_id + "'");
            if (!subject_time.emplace(r.subject_id, r.time).second)
                throw ValidationError("data_core", "duplicate (subject, time) = ('" + r.subject_id +
                                                       "', " + std::to_string(r.time) + ")");
            auto [it, inserted] = subject_group.emplace(r.subject_id, r.group);
            if (!inserted && it->second != r.group)
                throw ValidationError("data_core",
                                      "subject '" + r.subject_id + "' has two group labels");
        }
    }

    [[nodiscard]] std::size_t n_subjects() const {
        std::unordered_set<std::string> s;
        for (const auto& r : rows) s.insert(r.subject_id);
        return s.size();
    }
};

/// One subject's samples as count-matrix column indices, ordered by time.
struct SubjectView {
    std::string subject_id;
    int group = 0;
    std::vector<std::size_t> columns;

    [[nodiscard]] std::size_t q() const noexcept { return columns.size(); }
};

/**
 * Counts joined with metadata. meta.rows[s] describes count column s, and
 * every column belongs to exactly one SubjectView.
 */
struct LongitudinalDataset {
    CountMatrix counts;
    SampleTable meta;
    std::vector<SubjectView> subjects;

    [[nodiscard]] std::size_t n_taxa() const noexcept { return counts.n_taxa(); }
    [[nodiscard]] std::size_t n_samples() const noexcept { return counts.n_samples(); }
    [[nodiscard]] std::size_t n_subjects() const noexcept { return subjects.size(); }

    [[nodiscard]] int column_group(std::size_t s) const { return meta.rows[s].group; }

    [[nodiscard]] std::size_t min_q() const {
        std::size_t q = subjects.empty() ? 0 : subjects.front().q();
        for (const auto& v : subjects) q = std::min(q, v.q());
        return q;
    }
    [[nodiscard]] std::size_t max_q() const {
        std::size_t q = 0;
        for (const auto& v : subjects) q = std::max(q, v.q());
        return q;
    }
    [[nodiscard]] bool equal_q() const { return min_q() == max_q(); }

    [[nodiscard]] std::array<std::size_t, 2> subjects_per_group() const {
        std::array<std::size_t, 2> n{0, 0};
        for (const auto& v : subjects) ++n[static_cast<std::size_t>(v.group)];
        return n;
    }
};

struct LoadOptions {
    std::optional<char> delimiter;
    /// Group label to code as 0. Defaults to the lexicographically smaller label.
    std::optional<std::string> reference_level;
};

/// Read a count table: header "taxon" + sample ids, then one row per taxon.
inline CountMatrix load_counts(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    const char delim = io::delimiter_for(path, opts.delimiter);
    const auto table = io::read_table(path, delim, "data_core");
    if (table.header.size() < 2)
        throw MalformedInput("data_core", path.filename().string() + ": header has no sample columns");

    CountMatrix cm;
    cm.sample_ids.assign(table.header.begin() + 1, table.header.end());
    for (auto& id : cm.sample_ids) id = std::string(io::trim(id));
    if (table.rows.empty()) throw ValidationError("data_core", "no taxa");

    cm.counts = Matrix<count_t>(table.rows.size(), cm.sample_ids.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& fields = table.rows[r];
        cm.taxa_ids.emplace_back(io::trim(fields[0]));
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const auto v = io::parse_int(fields[c]);
            const std::string where = path.filename().string() + " row " +
                                      std::to_string(table.line_numbers[r]) + " column " +
                                      std::to_string(c + 1);
            if (!v) {
                if (io::parse_double(fields[c]))
                    throw ValidationError("data_core", where + ": non-integer count '" + fields[c] + "'");
                throw MalformedInput("data_core", where + ": cannot parse '" + fields[c] + "'");
            }
            if (*v < 0) throw ValidationError("data_core", where + ": negative count");
            cm.counts(r, c - 1) = *v;
        }
    }
    cm.validate();
    return cm;
}

/// Map raw group labels onto {0, 1}. A single level is accepted (all coded 0);
/// model fitting rejects such designs later.
inline std::array<std::string, 2> code_groups(const std::set<std::string>& labels,
                                              const std::optional<std::string>& reference) {
    if (labels.empty() || labels.size() > 2)
        throw ValidationError("data_core", "group column must have one or two levels, found " +
                                               std::to_string(labels.size()));
    std::array<std::string, 2> coded{*labels.begin(),
                                     labels.size() == 2 ? *std::next(labels.begin()) : std::string{}};
    if (reference) {
        if (!labels.contains(*reference))
            throw ValidationError("data_core", "reference level '" + *reference + "' not present");
        if (coded[1] == *reference) std::swap(coded[0], coded[1]);
    }
    return coded;
}

/// Read sample metadata with named columns sample_id, subject_id, time, group (any order).
inline SampleTable load_metadata(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    const char delim = io::delimiter_for(path, opts.delimiter);
    const auto table = io::read_table(path, delim, "data_core");

    auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < table.header.size(); ++i)
            if (io::trim(table.header[i]) == name) return i;
        throw MalformedInput("data_core", path.filename().string() + ": missing column '" + name + "'");
    };
    const auto c_sample = column("sample_id");
    const auto c_subject = column("subject_id");
    const auto c_time = column("time");
    const auto c_group = column("group");

    std::set<std::string> labels;
    for (const auto& row : table.rows) labels.emplace(io::trim(row[c_group]));
    if (table.rows.empty()) throw ValidationError("data_core", "metadata has no rows");

    SampleTable st;
    st.group_labels = code_groups(labels, opts.reference_level);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto t = io::parse_int(row[c_time]);
        if (!t)
            throw MalformedInput("data_core", path.filename().string() + " row " +
                                                  std::to_string(table.line_numbers[r]) +
                                                  ": time must be an integer rank, got '" +
                                                  row[c_time] + "'");
        const std::string label(io::trim(row[c_group]));
        st.rows.push_back({std::string(io::trim(row[c_sample])), std::string(io::trim(row[c_subject])),
                           *t, label == st.group_labels[0] ? 0 : 1});
    }
    st.validate();
    return st;
}

/// Join counts and metadata; subjects appear in order of their first count column.
inline LongitudinalDataset assemble(CountMatrix counts, const SampleTable& meta) {
    counts.validate();
    meta.validate();

    std::unordered_map<std::string, std::size_t> meta_index;
    for (std::size_t r = 0; r < meta.rows.size(); ++r) meta_index.emplace(meta.rows[r].sample_id, r);

    std::set<std::string> only_counts;
    std::set<std::string> only_meta;
    std::unordered_set<std::string> count_ids(counts.sample_ids.begin(), counts.sample_ids.end());
    for (const auto& id : counts.sample_ids)
        if (!meta_index.contains(id)) only_counts.insert(id);
    for (const auto& r : meta.rows)
        if (!count_ids.contains(r.sample_id)) only_meta.insert(r.sample_id);
    if (!only_counts.empty() || !only_meta.empty()) {
        std::string msg = "sample ids differ between counts and metadata:";
        for (const auto& id : only_counts) msg += " " + id + "(counts only)";
        for (const auto& id : only_meta) msg += " " + id + "(metadata only)";
        throw ValidationError("data_core", msg);
    }

    LongitudinalDataset ds;
    ds.meta.group_labels = meta.group_labels;
    ds.meta.rows.reserve(counts.n_samples());
    for (const auto& id : counts.sample_ids) ds.meta.rows.push_back(meta.rows[meta_index.at(id)]);

    std::unordered_map<std::string, std::size_t> subject_index;
    for (std::size_t s = 0; s < ds.meta.rows.size(); ++s) {
        const auto& row = ds.meta.rows[s];
        auto [it, inserted] = subject_index.emplace(row.subject_id, ds.subjects.size());
        if (inserted) ds.subjects.push_back({row.subject_id, row.group, {}});
        ds.subjects[it->second].columns.push_back(s);
    }
    for (auto& view : ds.subjects) {
        std::sort(view.columns.begin(), view.columns.end(), [&](std::size_t a, std::size_t b) {
            return ds.meta.rows[a].time < ds.meta.rows[b].time;
        });
    }
    ds.counts = std::move(counts);
    return ds;
}

/// Keep taxa present (count > 0) in at least `threshold` of the samples.
inline LongitudinalDataset prevalence_filter(const LongitudinalDataset& ds, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("data_core", "prevalence threshold must lie in (0, 1)");
    const auto& cm = ds.counts;
    const double n = static_cast<double>(cm.n_samples());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < cm.n_taxa(); ++i) {
        std::size_t present = 0;
        for (auto v : cm.counts.row(i)) present += v > 0 ? 1 : 0;
        if (static_cast<double>(present) / n >= threshold) keep.push_back(i);
    }
    if (keep.empty()) throw ValidationError("data_core", "empty after filtering");

    LongitudinalDataset out;
    out.meta = ds.meta;
    out.subjects = ds.subjects;
    out.counts.sample_ids = cm.sample_ids;
    out.counts.counts = Matrix<count_t>(keep.size(), cm.n_samples());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        out.counts.taxa_ids.push_back(cm.taxa_ids[keep[k]]);
        const auto src = cm.counts.row(keep[k]);
        std::copy(src.begin(), src.end(), out.counts.counts.row(k).begin());
    }
    return out;
}

/// Canonical text form (counts block then metadata block); used to check reproducibility.
inline std::string serialize(const LongitudinalDataset& ds) {
    io::TableWriter w('\t');
    std::vector<std::string> header{"taxon"};
    header.insert(header.end(), ds.counts.sample_ids.begin(), ds.counts.sample_ids.end());
    w.row(header);
    for (std::size_t i = 0; i < ds.n_taxa(); ++i) {
        std::vector<std::string> row{ds.counts.taxa_ids[i]};
        for (auto v : ds.counts.counts.row(i)) row.push_back(std::to_string(v));
        w.row(row);
    }
    w.row({"sample_id", "subject_id", "time", "group"});
    for (const auto& r : ds.meta.rows)
        w.row({r.sample_id, r.subject_id, std::to_string(r.time), ds.meta.group_labels[r.group]});
    return w.str();
}

/// Write counts and metadata files readable by load_counts/load_metadata.
inline void write_dataset(const LongitudinalDataset& ds, const std::filesystem::path& counts_path,
                          const std::filesystem::path& meta_path) {
    io::TableWriter c(io::delimiter_for(counts_path));
    std::vector<std::string> header{"taxon"};
    header.insert(header.end(), ds.counts.sample_ids.begin(), ds.counts.sample_ids.end());
    c.row(header);
    for (std::size_t i = 0; i < ds.n_taxa(); ++i) {
        std::vector<std::string> row{ds.counts.taxa_ids[i]};
        for (auto v : ds.counts.counts.row(i)) row.push_back(std::to_string(v));
        c.row(row);
    }
    c.save(counts_path);

    io::TableWriter m(io::delimiter_for(meta_path));
    m.row({"sample_id", "subject_id", "time", "group"});
    for (const auto& r : ds.meta.rows)
        m.row({r.sample_id, r.subject_id, std::to_string(r.time), ds.meta.group_labels[r.group]});
    m.save(meta_path);
}

}  // namespace longboot
