#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rnf {

// Binary confusion counts with "1" = contaminated.
struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;

    bool operator==(const RocPoint&) const = default;
};

Confusion confusion(std::span<const int> labels, std::span<const int> flags);

double accuracy(std::span<const int> labels, std::span<const int> flags);

// Unweighted mean of the F1 of class 1 and class 0. A class absent from both
// labels and flags contributes F1 = 0.
double macro_f1(std::span<const int> labels, std::span<const int> flags);

// P(score of a random positive > score of a random negative) + 0.5 P(tie),
// computed from average ranks.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

// (fpr, tpr) after flagging every score >= threshold, one point per distinct
// score from high to low, preceded by (inf, 0, 0).
std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores);

struct EvalResult {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double roc_auc = 0.0;
    Confusion counts;
    std::vector<RocPoint> roc;
    // Free-form context: scenario, seed, calibration method, rule.
    std::vector<std::pair<std::string, std::string>> metadata;

    bool operator==(const EvalResult&) const = default;
};

EvalResult evaluate(std::span<const int> labels, std::span<const int> flags, std::span<const double> scores);

} // namespace rnf
