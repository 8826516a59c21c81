#include "fmae/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "fmae/errors.hpp"

namespace fmae {

double f1_score(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

Metrics compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                        double threshold) {
    if (scores.size() != labels.size())
        throw ParamError("compute_metrics: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    if (scores.empty()) throw ParamError("compute_metrics: empty input");

    Metrics m;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1)
            pred ? ++m.tp : ++m.fn;
        else
            pred ? ++m.fp : ++m.tn;
    }
    const int64_t total = m.tp + m.fp + m.fn + m.tn;
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);

    // Mann-Whitney AUC: midranks over the pooled scores, then
    // (R+ - n+(n+1)/2) / (n+ * n-).
    const int64_t n_pos = m.tp + m.fn;
    const int64_t n_neg = m.fp + m.tn;
    if (n_pos > 0 && n_neg > 0) {
        std::vector<size_t> order(scores.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](size_t a, size_t b) { return scores[a] < scores[b]; });
        double rank_pos_sum = 0.0;
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
            const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
            for (size_t k = i; k <= j; ++k)
                if (labels[order[k]] == 1) rank_pos_sum += midrank;
            i = j + 1;
        }
        m.auc = (rank_pos_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
                (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    }
    return m;
}

std::string metrics_json(const Metrics& m, const std::string& ablation) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    if (m.auc.has_value())
        j["auc"] = *m.auc;
    else
        j["auc"] = nullptr;
    j["confusion"] = {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
    j["ablation"] = ablation;
    return j.dump(2);
}

}  // namespace fmae
