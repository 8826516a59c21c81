#include "fmae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fmae/rng.hpp"

namespace fmae {

namespace {

// Fixed random projection so non-scalar outputs exercise every component.
double weighted_sum(const Tensor& out, const std::vector<double>& w) {
    double acc = 0.0;
    const double* y = out.data();
    for (size_t i = 0; i < w.size(); ++i) acc += w[i] * y[i];
    return acc;
}

}  // namespace

double grad_check(const GradCheckOp& op, const std::vector<Shape>& input_shapes, uint64_t seed,
                  const GradCheckOptions& opts) {
    Rng rng(Rng::mix(seed ^ 0x6a09e667f3bcc908ULL));
    std::vector<Tensor> inputs;
    for (const Shape& s : input_shapes) {
        Tensor t = Tensor::zeros(s, /*requires_grad=*/true);
        for (int64_t i = 0; i < t.numel(); ++i) {
            double v = rng.uniform(opts.input_lo, opts.input_hi);
            while (std::abs(v) < opts.avoid_kink_radius) v = rng.uniform(opts.input_lo, opts.input_hi);
            t.data()[i] = v;
        }
        inputs.push_back(t);
    }

    Tape tape;
    Tensor out = op(inputs, &tape);
    std::vector<double> proj(static_cast<size_t>(out.numel()));
    for (auto& w : proj) w = rng.uniform(-1.0, 1.0);

    // Analytic pass: seed the projection weights directly as the output grad.
    out.grad();
    for (size_t i = 0; i < proj.size(); ++i) out.node()->grad[i] = proj[i];
    tape.replay_backward();

    const double h = opts.step;
    double max_err = 0.0;
    for (Tensor& t : inputs) {
        const double* analytic = t.has_grad() ? t.grad() : nullptr;
        for (int64_t i = 0; i < t.numel(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + h;
            const double f_plus = weighted_sum(op(inputs, nullptr), proj);
            t.data()[i] = saved - h;
            const double f_minus = weighted_sum(op(inputs, nullptr), proj);
            t.data()[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic ? analytic[i] : 0.0;
            const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace fmae
