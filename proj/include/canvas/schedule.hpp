#pragma once

#include <stdexcept>
#include <vector>

namespace canvas {

/// Diffusion time in [0, 1]; 1 is pure noise, 0 is data.
inline void require_timestep(double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("timestep outside [0,1]");
}

/// The positive shift quantity sqrt(m/n) controlling the sampling timeshift.
struct ShiftFactor {
    double value = 1.0;

    explicit ShiftFactor(double v) : value(v) {
        if (!(v > 0.0)) throw std::invalid_argument("ShiftFactor must be positive");
    }
};

/// t_m = f * t_n / (1 + (f - 1) * t_n).
/// Fixes 0 and 1, strictly increasing on [0,1] for any f > 0. The denominator
/// is evaluated as (1 - t) + f * t so both fixed points hold exactly in
/// floating point.
inline double timestep_shift(double t_n, ShiftFactor f) {
    require_timestep(t_n);
    return f.value * t_n / ((1.0 - t_n) + f.value * t_n);
}

/// Algebraic inverse of timestep_shift: shifting by 1/f undoes a shift by f.
inline double timestep_shift_inverse(double t_m, ShiftFactor f) {
    return timestep_shift(t_m, ShiftFactor(1.0 / f.value));
}

/// Sampling timestep grid, strictly decreasing from 1 to 0.
struct Schedule {
    std::vector<double> steps;

    int num_steps() const noexcept { return static_cast<int>(steps.size()) - 1; }
};

/// Shifted schedule over the uniform grid {1, (n-1)/n, ..., 0}. The shift is
/// applied here once; sampling and guidance consume the grid as-is.
inline Schedule make_schedule(int n_steps, ShiftFactor f) {
    if (n_steps < 1) throw std::invalid_argument("make_schedule: n_steps must be >= 1");
    Schedule s;
    s.steps.reserve(static_cast<std::size_t>(n_steps) + 1);
    for (int k = n_steps; k >= 0; --k)
        s.steps.push_back(timestep_shift(static_cast<double>(k) / n_steps, f));
    return s;
}

}  // namespace canvas
