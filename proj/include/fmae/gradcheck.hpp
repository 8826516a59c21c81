#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fmae/tensor.hpp"

namespace fmae {

// An op under test: maps the generated inputs to one output tensor,
// recording on the tape when given.
using GradCheckOp = std::function<Tensor(const std::vector<Tensor>&, Tape*)>;

struct GradCheckOptions {
    double step = 1e-6;          // central-difference step
    double input_lo = -1.0;      // uniform sampling range for inputs
    double input_hi = 1.0;
    double avoid_kink_radius = 0.0;  // resample inputs with |x| below this (relu et al.)
};

// Compares reverse-mode gradients of a random-weighted scalarization of the
// op output against central finite differences over every input element.
// Returns max over elements of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const GradCheckOp& op, const std::vector<Shape>& input_shapes, uint64_t seed,
                  const GradCheckOptions& opts = {});

}  // namespace fmae
