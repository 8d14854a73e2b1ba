#include "rnf/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rnf/calibrate.hpp"
#include "rnf/errors.hpp"
#include "rnf/parallel.hpp"
#include "rnf/random.hpp"
#include "rnf/serialize.hpp"

namespace rnf {

namespace {

constexpr std::size_t block_size = 1024;

enum Stream : std::uint64_t {
    mean_stream = 100,
    tail_stream = 200,
    detection_stream = 300,
    max_calibration_stream = 400,
    max_test_stream = 500,
};

double draw_residual(Rng& rng, std::size_t d, double q) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += std::abs(q * (2.0 * uniform01(rng) - 1.0));
    return s / static_cast<double>(d);
}

void require_trials(std::size_t trials) {
    if (trials < min_theory_trials)
        throw InvalidArgument("trials must be at least " + std::to_string(min_theory_trials) + ", got " +
                              std::to_string(trials));
}

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive");
}

// r_max over `layers` independent residuals, one value per trial.
std::vector<double> simulate_max(std::size_t layers, std::size_t d, double q, std::size_t trials, std::uint64_t seed,
                                 std::uint64_t stream) {
    std::vector<double> out(trials);
    const std::size_t blocks = (trials + block_size - 1) / block_size;
    parallel_for(blocks, [&](std::size_t b) {
        auto rng = make_rng(seed, stream, b);
        for (std::size_t i = b * block_size; i < std::min(trials, (b + 1) * block_size); ++i) {
            double m = 0.0;
            for (std::size_t l = 0; l < layers; ++l) m = std::max(m, draw_residual(rng, d, q));
            out[i] = m;
        }
    });
    return out;
}

} // namespace

double BoundCheckReport::extra(const std::string& key) const {
    for (const auto& [k, v] : extras)
        if (k == key) return v;
    throw InvalidArgument("report has no extra '" + key + "'");
}

double binomial_margin(double p, std::size_t trials) {
    const double pc = std::clamp(p, 0.0, 1.0);
    const double t = static_cast<double>(trials);
    return std::max(3.0 * std::sqrt(pc * (1.0 - pc) / t), 1.0 / t);
}

std::vector<double> simulate_residuals(std::size_t d, double q, std::size_t trials, std::uint64_t seed,
                                       std::uint64_t stream) {
    return simulate_max(1, d, q, trials, seed, stream);
}

BoundCheckReport check_mean_identity(double q, std::size_t d, std::size_t trials, std::uint64_t seed, double rel_tol) {
    require_positive(q, "q");
    if (d < 1) throw InvalidArgument("d must be at least 1");
    require_trials(trials);
    const auto r = simulate_residuals(d, q, trials, seed, mean_stream);
    BoundCheckReport rep;
    rep.check = "mean_identity";
    rep.d = d;
    rep.q = q;
    rep.trials = trials;
    rep.empirical = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(trials);
    rep.bound = q / 2.0;
    rep.margin = rel_tol * q / 2.0;
    const double deviation = std::abs(rep.empirical - rep.bound);
    rep.pass = deviation <= rep.margin;
    rep.extras = {{"abs_deviation", deviation}, {"rel_deviation", deviation / rep.bound}};
    return rep;
}

double subgaussian_tail_bound(std::size_t d, double q, double lipschitz, double tau) {
    return 2.0 * std::exp(-static_cast<double>(d) * tau * tau / (2.0 * q * q * lipschitz * lipschitz));
}

std::vector<BoundCheckReport> check_subgaussian_tail(std::size_t d, double q, double lipschitz,
                                                     std::span<const double> tau_grid, std::size_t trials,
                                                     std::uint64_t seed) {
    require_positive(q, "q");
    require_positive(lipschitz, "K");
    if (d < 1) throw InvalidArgument("d must be at least 1");
    require_trials(trials);
    const auto r = simulate_residuals(d, q, trials, seed, derive_seed(tail_stream, d));
    const double mu = q / 2.0;
    std::vector<BoundCheckReport> out;
    for (double tau : tau_grid) {
        if (!(tau >= 0.0)) throw InvalidArgument("tau must be >= 0");
        const auto exceed = std::count_if(r.begin(), r.end(), [&](double x) { return std::abs(x - mu) > tau; });
        BoundCheckReport rep;
        rep.check = "subgaussian_tail";
        rep.d = d;
        rep.q = q;
        rep.lipschitz = lipschitz;
        rep.tau = tau;
        rep.trials = trials;
        rep.empirical = static_cast<double>(exceed) / static_cast<double>(trials);
        rep.bound = subgaussian_tail_bound(d, q, lipschitz, tau);
        rep.margin = binomial_margin(rep.bound, trials);
        rep.pass = rep.empirical <= rep.bound + rep.margin;
        out.push_back(std::move(rep));
    }
    return out;
}

BoundCheckReport check_detection_guarantee(double q, double lipschitz, double delta, double epsilon,
                                           std::size_t trials, std::uint64_t seed,
                                           const DetectionGuaranteeOptions& options) {
    require_positive(q, "q");
    require_positive(lipschitz, "K");
    require_positive(delta, "delta");
    require_positive(epsilon, "epsilon");
    if (!(epsilon < 1.0)) throw InvalidArgument("epsilon must be below 1");
    require_trials(trials);
    if (options.width < 1 || options.test_draws < 1) throw InvalidArgument("width and test_draws must be positive");
    const std::size_t n = options.calibration_size ? options.calibration_size
                                                   : required_sample_size(q, lipschitz, delta, epsilon);

    std::vector<std::size_t> false_pos(trials), false_neg(trials);
    parallel_for(trials, [&](std::size_t t) {
        auto rng = make_rng(seed, detection_stream, t);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += draw_residual(rng, options.width, q);
        const double tau = sum / static_cast<double>(n) + delta / 2.0;
        std::size_t fp = 0, fn = 0;
        for (std::size_t i = 0; i < options.test_draws; ++i) fp += draw_residual(rng, options.width, q) > tau;
        for (std::size_t i = 0; i < options.test_draws; ++i) fn += draw_residual(rng, options.width, q) + delta <= tau;
        false_pos[t] = fp;
        false_neg[t] = fn;
    });
    const double draws = static_cast<double>(trials * options.test_draws);
    const double fpr = std::accumulate(false_pos.begin(), false_pos.end(), 0.0) / draws;
    const double fnr = std::accumulate(false_neg.begin(), false_neg.end(), 0.0) / draws;

    BoundCheckReport rep;
    rep.check = "detection_guarantee";
    rep.d = options.width;
    rep.q = q;
    rep.lipschitz = lipschitz;
    rep.delta = delta;
    rep.epsilon = epsilon;
    rep.trials = trials;
    rep.empirical = std::max(fpr, fnr);
    rep.bound = epsilon;
    rep.margin = binomial_margin(epsilon, trials);
    rep.pass = fpr <= epsilon + rep.margin && fnr <= epsilon + rep.margin;
    rep.extras = {{"fpr", fpr}, {"fnr", fnr}, {"n", static_cast<double>(n)}};
    return rep;
}

BoundCheckReport check_max_tail(std::size_t layers, std::size_t d, double q, std::size_t trials, std::uint64_t seed,
                                double alpha) {
    require_positive(q, "q");
    if (layers < 1 || d < 1) throw InvalidArgument("layers and d must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    require_trials(trials);
    const auto calibration = simulate_max(layers, d, q, trials, seed, max_calibration_stream);
    const auto test = simulate_max(layers, d, q, trials, seed, max_test_stream);
    const double tau = empirical_quantile(calibration, 1.0 - alpha);
    const auto flagged = std::count_if(test.begin(), test.end(), [&](double r) { return r > tau; });

    // Largest C consistent with every nonzero empirical tail point on a grid of
    // 1..4 residual standard deviations above mu_max = q/2.
    const double mu_max = q / 2.0;
    const double sd = q / std::sqrt(12.0 * static_cast<double>(d));
    double c_fit = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 4; ++k) {
        const double t = k * sd;
        const auto above = std::count_if(test.begin(), test.end(), [&](double r) { return r - mu_max > t; });
        if (above == 0) continue;
        const double p = static_cast<double>(above) / static_cast<double>(trials);
        c_fit = std::min(c_fit, -std::log(p) * q * q / (t * t));
    }

    BoundCheckReport rep;
    rep.check = "max_tail";
    rep.d = d;
    rep.q = q;
    rep.layers = layers;
    rep.tau = tau;
    rep.trials = trials;
    rep.empirical = static_cast<double>(flagged) / static_cast<double>(trials);
    rep.bound = alpha;
    rep.margin = binomial_margin(alpha, trials);
    rep.pass = rep.empirical <= alpha + rep.margin && c_fit > 0.0;
    rep.extras = {{"C_fit", c_fit}, {"threshold", tau}};
    return rep;
}

std::vector<BoundCheckReport> run_theory_grid(const TheoryGrid& grid, std::uint64_t seed) {
    auto wants = [&](const char* name) { return std::find(grid.checks.begin(), grid.checks.end(), name) != grid.checks.end(); };
    for (const auto& c : grid.checks)
        if (c != "mean" && c != "tail" && c != "detection" && c != "max")
            throw InvalidArgument("unknown theory check '" + c + "'");
    std::vector<BoundCheckReport> out;
    if (wants("mean"))
        for (double q : grid.mean_q) out.push_back(check_mean_identity(q, grid.mean_d, grid.mean_trials, seed));
    if (wants("tail"))
        for (auto d : grid.tail_d) {
            auto reps = check_subgaussian_tail(d, grid.tail_q, grid.tail_lipschitz, grid.tail_tau, grid.tail_trials, seed);
            out.insert(out.end(), reps.begin(), reps.end());
        }
    if (wants("detection"))
        out.push_back(check_detection_guarantee(grid.det_q, grid.det_lipschitz, grid.det_delta, grid.det_epsilon,
                                                grid.det_trials, seed));
    if (wants("max")) out.push_back(check_max_tail(grid.max_layers, grid.max_d, grid.max_q, grid.max_trials, seed));
    return out;
}

std::string bound_reports_csv(std::span<const BoundCheckReport> reports) {
    std::string out = "check,d,q,K,tau,delta,epsilon,L,trials,empirical,bound,margin,pass,extras\n";
    for (const auto& r : reports) {
        std::string extras;
        for (const auto& [k, v] : r.extras) extras += (extras.empty() ? "" : ";") + k + "=" + format_double(v);
        out += r.check + ',' + std::to_string(r.d) + ',' + format_double(r.q) + ',' + format_double(r.lipschitz) + ',' +
               format_double(r.tau) + ',' + format_double(r.delta) + ',' + format_double(r.epsilon) + ',' +
               std::to_string(r.layers) + ',' + std::to_string(r.trials) + ',' + format_double(r.empirical) + ',' +
               format_double(r.bound) + ',' + format_double(r.margin) + ',' + (r.pass ? "1" : "0") + ',' + extras + '\n';
    }
    return out;
}

} // namespace rnf
