#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fmae {

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;  // absent when only one class is present
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Harmonic mean convention: 0 when both inputs are 0.
double f1_score(double precision, double recall);

// Confusion metrics by thresholding (score >= threshold -> positive) plus
// AUC from the Mann-Whitney rank statistic with midrank tie handling. AUC is
// left unset when a class is absent; the thresholded metrics still apply.
Metrics compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                        double threshold = 0.5);

// Stable report schema: the five metric names, confusion counts, ablation.
std::string metrics_json(const Metrics& m, const std::string& ablation);

}  // namespace fmae
