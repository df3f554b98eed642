#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dps {

inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw std::invalid_argument("accuracy: need equal, non-empty prediction/label lists");
    double ok = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == labels[i];
    return ok / static_cast<double>(preds.size());
}

inline double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                       int num_classes = 0) {
    if (preds.size() != labels.size() || preds.empty())
        throw std::invalid_argument("macro_f1: need equal, non-empty prediction/label lists");
    int c = num_classes;
    for (std::size_t i = 0; i < preds.size(); ++i)
        c = std::max({c, preds[i] + 1, labels[i] + 1});
    std::vector<double> tp(static_cast<std::size_t>(c), 0.0), fp(tp), fn(tp);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) tp[static_cast<std::size_t>(preds[i])] += 1.0;
        else {
            fp[static_cast<std::size_t>(preds[i])] += 1.0;
            fn[static_cast<std::size_t>(labels[i])] += 1.0;
        }
    }
    double total = 0.0;
    for (int k = 0; k < c; ++k) {
        const double p_den = tp[static_cast<std::size_t>(k)] + fp[static_cast<std::size_t>(k)];
        const double r_den = tp[static_cast<std::size_t>(k)] + fn[static_cast<std::size_t>(k)];
        const double prec = p_den > 0 ? tp[static_cast<std::size_t>(k)] / p_den : 0.0;
        const double rec = r_den > 0 ? tp[static_cast<std::size_t>(k)] / r_den : 0.0;
        total += (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    return total / c;
}

/// Binary ROC-AUC via the rank statistic with midrank tie handling.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_auc: need equal, non-empty score/label lists");
    double npos = 0.0, nneg = 0.0;
    for (int y : labels) {
        if (y == 1) npos += 1.0;
        else if (y == 0) nneg += 1.0;
        else throw std::invalid_argument("roc_auc: labels must be binary 0/1");
    }
    if (npos == 0.0 || nneg == 0.0)
        throw std::invalid_argument("roc_auc: labels are single-class");
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    return (rank_sum_pos - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

/// Exact 1-D Wasserstein-1 distance between two empirical distributions:
/// sorted samples integrated over aligned quantiles.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("wasserstein1: empty sample list");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t na = a.size(), nb = b.size();
    std::size_t i = 0, j = 0;
    double dist = 0.0, prev_q = 0.0;
    while (i < na && j < nb) {
        const unsigned long long lhs = static_cast<unsigned long long>(i + 1) * nb;
        const unsigned long long rhs = static_cast<unsigned long long>(j + 1) * na;
        const double qn = lhs <= rhs ? static_cast<double>(i + 1) / static_cast<double>(na)
                                     : static_cast<double>(j + 1) / static_cast<double>(nb);
        dist += (qn - prev_q) * std::fabs(a[i] - b[j]);
        prev_q = qn;
        if (lhs <= rhs) ++i;
        if (rhs <= lhs) ++j;
    }
    return dist;
}

/// Energy-score distance between two domains' empirical energy samples.
inline double domain_distance(const std::vector<double>& energies_a,
                              const std::vector<double>& energies_b) {
    return wasserstein1(energies_a, energies_b);
}

inline double equipredictivity_gap(const std::vector<double>& per_domain_ce) {
    if (per_domain_ce.empty())
        throw std::invalid_argument("equipredictivity_gap: no domain losses");
    const auto [lo, hi] = std::minmax_element(per_domain_ce.begin(), per_domain_ce.end());
    return *hi - *lo;
}

struct DiversityReport {
    std::vector<double> d_source;                  // d_i = d(source, domain i), i = 1..K
    std::optional<double> d_intra;                 // mean pairwise distance, absent for K < 2
    std::vector<std::vector<double>> matrix;       // (K+1)^2, source last
};

/// Distances between the source energy distribution and each augmented
/// domain, plus the mean pairwise distance across the K augmented domains.
inline DiversityReport diversity_from_energies(
    const std::vector<double>& source_energies,
    const std::vector<std::vector<double>>& domain_energies) {
    DiversityReport r;
    const std::size_t k = domain_energies.size();
    std::vector<const std::vector<double>*> all;
    for (const auto& d : domain_energies) all.push_back(&d);
    all.push_back(&source_energies);
    r.matrix.assign(all.size(), std::vector<double>(all.size(), 0.0));
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            r.matrix[i][j] = r.matrix[j][i] = domain_distance(*all[i], *all[j]);
    for (std::size_t i = 0; i < k; ++i) r.d_source.push_back(r.matrix[i][k]);
    if (k >= 2) {
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) total += r.matrix[i][j];
        r.d_intra = total / (static_cast<double>(k) * (static_cast<double>(k) - 1.0) / 2.0);
    }
    return r;
}

/// Evaluation summary for one (model, split) pair.
struct MetricReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::optional<double> roc_auc;                 // binary tasks only
    std::vector<double> per_domain_ce;
    std::optional<double> equipredictivity_gap;
    std::optional<DiversityReport> diversity;
};

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    if (r.roc_auc) j["roc_auc"] = *r.roc_auc;
    if (!r.per_domain_ce.empty()) j["per_domain_ce"] = r.per_domain_ce;
    if (r.equipredictivity_gap) j["equipredictivity_gap"] = *r.equipredictivity_gap;
    if (r.diversity) {
        nlohmann::json d;
        d["d_source"] = r.diversity->d_source;
        if (r.diversity->d_intra) d["d_intra"] = *r.diversity->d_intra;
        d["matrix"] = r.diversity->matrix;
        j["diversity"] = std::move(d);
    }
    return j;
}

}  // namespace dps
