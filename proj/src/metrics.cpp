#include "rnf/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "rnf/errors.hpp"

namespace rnf {

namespace {

void check_binary(std::span<const int> v, const char* what) {
    for (int x : v)
        if (x != 0 && x != 1) throw InvalidArgument(std::string(what) + " must be 0 or 1");
}

void check_pair(std::size_t a, std::size_t b) {
    if (a == 0) throw InvalidArgument("metrics need at least one sample");
    if (a != b) throw ShapeError("labels and predictions differ in length");
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
    const auto denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

} // namespace

Confusion confusion(std::span<const int> labels, std::span<const int> flags) {
    check_pair(labels.size(), flags.size());
    check_binary(labels, "labels");
    check_binary(flags, "flags");
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) (flags[i] ? c.tp : c.fn)++;
        else (flags[i] ? c.fp : c.tn)++;
    }
    return c;
}

double accuracy(std::span<const int> labels, std::span<const int> flags) {
    const auto c = confusion(labels, flags);
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double macro_f1(std::span<const int> labels, std::span<const int> flags) {
    const auto c = confusion(labels, flags);
    // Class 0 swaps the roles of tp/tn and fp/fn.
    return 0.5 * (f1(c.tp, c.fp, c.fn) + f1(c.tn, c.fn, c.fp));
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    check_pair(labels.size(), scores.size());
    check_binary(labels, "labels");
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // Mann-Whitney U from average ranks of the positives.
    double rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]]) {
                rank_sum += avg_rank;
                ++positives;
            }
        i = j;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw InvalidArgument("roc_auc needs both classes present");
    const double np = static_cast<double>(positives);
    const double u = rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(negatives));
}

std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores) {
    check_pair(labels.size(), scores.size());
    check_binary(labels, "labels");
    const std::size_t n = labels.size();
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) throw InvalidArgument("roc_curve needs both classes present");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        const double s = scores[order[i]];
        while (i < n && scores[order[i]] == s) (labels[order[i++]] ? tp : fp)++;
        curve.push_back({s, static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives});
    }
    return curve;
}

EvalResult evaluate(std::span<const int> labels, std::span<const int> flags, std::span<const double> scores) {
    EvalResult r;
    r.counts = confusion(labels, flags);
    r.accuracy = accuracy(labels, flags);
    r.macro_f1 = macro_f1(labels, flags);
    r.roc_auc = roc_auc(labels, scores);
    r.roc = roc_curve(labels, scores);
    return r;
}

} // namespace rnf
