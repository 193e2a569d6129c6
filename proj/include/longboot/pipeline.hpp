#pragma once

// The full point estimator (size factors -> arcsinh -> marginal fit -> shrinkage)
// evaluated on a selection of count-matrix columns. Bootstrap realizations and
// subsamples are both expressed as such selections, so no count data is copied.

#include <cmath>
#include <span>
#include <vector>

#include "longboot/data_core.hpp"
#include "longboot/error.hpp"
#include "longboot/estimator.hpp"
#include "longboot/preprocess.hpp"

namespace longboot {

/**
 * Columns grouped by subject. Positions [offsets[j], offsets[j+1]) of
 * `columns` hold subject j's series in time order.
 */
struct Panel {
    std::vector<std::size_t> columns;
    std::vector<std::size_t> offsets{0};
    std::vector<int> subject_group;

    [[nodiscard]] std::size_t n_subjects() const noexcept { return subject_group.size(); }
    [[nodiscard]] std::size_t q(std::size_t j) const noexcept { return offsets[j + 1] - offsets[j]; }
    [[nodiscard]] std::span<const std::size_t> subject(std::size_t j) const noexcept {
        return {columns.data() + offsets[j], q(j)};
    }

    void add_subject(std::span<const std::size_t> cols, int group) {
        columns.insert(columns.end(), cols.begin(), cols.end());
        offsets.push_back(columns.size());
        subject_group.push_back(group);
    }
};

inline Panel full_panel(const LongitudinalDataset& ds) {
    Panel p;
    for (const auto& v : ds.subjects) p.add_subject(v.columns, v.group);
    return p;
}

/// Materialize a panel as a standalone dataset (sample ids get a "#k" suffix on repeats).
inline LongitudinalDataset materialize(const LongitudinalDataset& ds, const Panel& panel) {
    LongitudinalDataset out;
    const std::size_t n = panel.columns.size();
    out.counts.taxa_ids = ds.counts.taxa_ids;
    out.counts.counts = Matrix<count_t>(ds.n_taxa(), n);
    out.meta.group_labels = ds.meta.group_labels;
    std::vector<std::size_t> uses(ds.n_samples(), 0);
    for (std::size_t j = 0; j < panel.n_subjects(); ++j) {
        SubjectView view{ds.meta.rows[panel.subject(j).front()].subject_id, panel.subject_group[j], {}};
        std::int64_t t = 0;
        for (std::size_t p = panel.offsets[j]; p < panel.offsets[j + 1]; ++p) {
            const std::size_t c = panel.columns[p];
            for (std::size_t i = 0; i < ds.n_taxa(); ++i) out.counts.counts(i, p) = ds.counts.counts(i, c);
            std::string id = ds.counts.sample_ids[c];
            if (uses[c]++ > 0) id += "#" + std::to_string(uses[c] - 1);
            out.counts.sample_ids.push_back(id);
            out.meta.rows.push_back({id, view.subject_id, ++t, panel.subject_group[j]});
            view.columns.push_back(p);
        }
        out.subjects.push_back(std::move(view));
    }
    return out;
}

struct EstimatorOptions {
    /// Reuse the observed-data size factors instead of recomputing per selection.
    bool freeze_size_factors = false;
};

/// Read-only state shared by every evaluation on one dataset.
class PreparedData {
public:
    PreparedData(const LongitudinalDataset& ds, EstimatorOptions opts = {})
        : ds_(&ds), opts_(opts), log_counts_(detail::log_counts(ds.counts.counts)) {
        groups_.reserve(ds.n_samples());
        for (std::size_t s = 0; s < ds.n_samples(); ++s) groups_.push_back(ds.column_group(s));
        if (opts_.freeze_size_factors) frozen_delta_ = size_factors(ds.counts).delta;
    }

    [[nodiscard]] const LongitudinalDataset& dataset() const noexcept { return *ds_; }
    [[nodiscard]] const Matrix<double>& log_counts() const noexcept { return log_counts_; }
    [[nodiscard]] int group(std::size_t col) const noexcept { return groups_[col]; }
    [[nodiscard]] const EstimatorOptions& options() const noexcept { return opts_; }
    [[nodiscard]] const std::vector<double>& frozen_delta() const noexcept { return frozen_delta_; }

private:
    const LongitudinalDataset* ds_;
    EstimatorOptions opts_;
    Matrix<double> log_counts_;
    std::vector<int> groups_;
    std::vector<double> frozen_delta_;
};

struct Estimate {
    std::vector<double> beta;  ///< shrunken
    std::vector<double> beta_raw;
    std::vector<double> se_naive;
};

/// Per-thread scratch buffers.
struct Workspace {
    detail::SizeFactorScratch sf;
    std::vector<double> delta;
    std::vector<detail::GroupMoments> moments;
};

/// Run the full point estimator on the given columns.
inline void estimate(const PreparedData& data, std::span<const std::size_t> cols, Workspace& ws,
                     Estimate& out) {
    const auto& counts = data.dataset().counts.counts;
    const std::size_t m = counts.rows();
    const std::size_t n = cols.size();

    if (data.options().freeze_size_factors) {
        ws.delta.resize(n);
        for (std::size_t p = 0; p < n; ++p) ws.delta[p] = data.frozen_delta()[cols[p]];
    } else {
        bool fallback = false;
        detail::size_factors_into(counts, data.log_counts(), cols, ws.sf, ws.delta, fallback);
    }

    double ng[2] = {0.0, 0.0};
    for (auto c : cols) ng[data.group(c)] += 1.0;
    if (ng[0] == 0.0 || ng[1] == 0.0) throw ValidationError("estimator", "degenerate design");

    ws.moments.assign(m, detail::GroupMoments{});
    for (std::size_t i = 0; i < m; ++i) {
        const auto crow = counts.row(i);
        auto& mom = ws.moments[i];
        for (std::size_t p = 0; p < n; ++p) {
            const std::size_t c = cols[p];
            mom.add(data.group(c), std::asinh(static_cast<double>(crow[c]) / ws.delta[p]));
        }
    }

    out.beta_raw.resize(m);
    out.se_naive.resize(m);
    std::size_t floored = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double intercept = 0.0;
        double se = 0.0;
        ws.moments[i].fit(ng[0], ng[1], intercept, out.beta_raw[i], se);
        out.se_naive[i] = floor_se(se, floored);
        if (!std::isfinite(out.beta_raw[i])) throw NumericalError("estimator", "non-finite estimate");
    }
    out.beta = shrink(out.beta_raw, out.se_naive).beta;
}

/// Convenience: estimate on the full observed panel.
inline Estimate estimate_observed(const PreparedData& data) {
    const Panel panel = full_panel(data.dataset());
    Workspace ws;
    Estimate e;
    estimate(data, panel.columns, ws, e);
    return e;
}

}  // namespace longboot
