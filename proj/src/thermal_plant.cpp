#include "thermocell/thermal_plant.hpp"

#include <cmath>

#include "thermocell/common.hpp"

namespace thermocell {

ThermalGrid make_grid(int rows, int cols, const PlantParams& p, double t_ambient, double dt) {
    ThermalGrid g;
    g.rows = rows;
    g.cols = cols;
    g.c_th = p.c_th;
    g.g_amb = p.g_amb;
    g.g_lat = p.g_lat;
    g.t_ambient = t_ambient;
    g.dt = dt;
    if (rows < 1 || cols < 1) throw ConfigError("thermal: grid needs at least one node");
    g.temp.assign(static_cast<std::size_t>(rows * cols), t_ambient);
    validate(g);
    return g;
}

double stability_limit(const ThermalGrid& g) { return g.c_th / (4.0 * g.g_lat + g.g_amb); }

void validate(const ThermalGrid& g) {
    if (!(g.c_th > 0.0 && g.g_amb > 0.0 && g.g_lat >= 0.0))
        throw ConfigError("thermal: c_th and g_amb must be positive, g_lat non-negative");
    if (!(g.dt > 0.0)) throw ConfigError("thermal: dt must be positive");
    if (g.dt > stability_limit(g)) throw ConfigError("thermal: dt exceeds the explicit-Euler stability bound");
    if (g.temp.size() != static_cast<std::size_t>(g.rows * g.cols)) throw ConfigError("thermal: field size mismatch");
}

void step_inplace(ThermalGrid& g, const std::vector<double>& p, double dt, std::vector<double>& next) {
    if (p.size() != g.temp.size()) throw ConfigError("thermal: heater power vector has the wrong size");
    if (!(dt > 0.0) || dt > stability_limit(g)) throw ConfigError("thermal: dt exceeds the explicit-Euler stability bound");
    next.resize(g.temp.size());
    const double k = dt / g.c_th;
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r * g.cols + c);
            const double t = g.temp[i];
            if (p[i] < 0.0) throw DomainError("thermal: heater power must be non-negative");
            // grouped so that mirrored fields see the same rounding
            const double vert = (r > 0 ? t - g.temp[i - g.cols] : 0.0) + (r + 1 < g.rows ? t - g.temp[i + g.cols] : 0.0);
            const double horz = (c > 0 ? t - g.temp[i - 1] : 0.0) + (c + 1 < g.cols ? t - g.temp[i + 1] : 0.0);
            const double flow = p[i] - g.g_amb * (t - g.t_ambient) - g.g_lat * (vert + horz);
            next[i] = t + k * flow;
        }
    }
    g.temp.swap(next);
}

ThermalGrid step(const ThermalGrid& grid, const std::vector<double>& heater_powers, double dt) {
    ThermalGrid out = grid;
    std::vector<double> scratch;
    step_inplace(out, heater_powers, dt, scratch);
    return out;
}

double critically_damped_crossing(double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw FitError("rise fraction must be in (0, 1)");
    // solve 1 - (1 + x) e^-x = fraction by Newton; the function is monotone
    double x = 1.0;
    for (int it = 0; it < 100; ++it) {
        const double f = 1.0 - (1.0 + x) * std::exp(-x) - fraction;
        const double df = x * std::exp(-x);
        const double nx = x - f / df;
        if (!(nx > 0.0)) {
            x *= 0.5;
            continue;
        }
        if (std::abs(nx - x) < 1e-15) {
            x = nx;
            break;
        }
        x = nx;
    }
    return x;
}

PlantParams fit_defaults(double target_rise, double p_at_target, double step_time, double rise_fraction,
                         double lateral_ratio) {
    if (!(target_rise > 0.0 && p_at_target > 0.0 && step_time > 0.0))
        throw FitError("fit_defaults: inputs must be positive");
    if (!(lateral_ratio >= 0.0)) throw FitError("fit_defaults: lateral ratio must be non-negative");
    if (!std::isfinite(target_rise) || !std::isfinite(p_at_target)) throw FitError("fit_defaults: inputs must be finite");
    PlantParams p;
    p.g_amb = p_at_target / target_rise;
    p.g_lat = lateral_ratio * p.g_amb;
    // t_cross = 2 tau x  =>  tau = t_cross / (2 x)
    const double tau = step_time / (2.0 * critically_damped_crossing(rise_fraction));
    p.c_th = p.g_amb * tau;
    if (!std::isfinite(p.c_th)) throw FitError("fit_defaults: step_time gives a non-finite heat capacity");
    return p;
}

}  // namespace thermocell
