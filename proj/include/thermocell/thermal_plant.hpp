#pragma once

#include <vector>

namespace thermocell {

struct ThermalGrid {
    int rows = 9;
    int cols = 6;
    std::vector<double> temp;  // row-major, degC
    double c_th = 0.0;         // J/K per node
    double g_lat = 0.0;        // W/K between orthogonal neighbours
    double g_amb = 0.0;        // W/K node to ambient
    double t_ambient = 25.0;   // degC
    double dt = 1e-3;          // s

    double& at(int r, int c) { return temp[static_cast<std::size_t>(r * cols + c)]; }
    double at(int r, int c) const { return temp[static_cast<std::size_t>(r * cols + c)]; }
    std::size_t size() const { return temp.size(); }
};

struct PlantParams {
    double c_th = 0.0;
    double g_amb = 0.0;
    double g_lat = 0.0;
};

ThermalGrid make_grid(int rows, int cols, const PlantParams& p, double t_ambient, double dt);

double stability_limit(const ThermalGrid& g);
void validate(const ThermalGrid& g);

// Forward-Euler update. Throws ConfigError when dt exceeds the stability bound.
ThermalGrid step(const ThermalGrid& grid, const std::vector<double>& heater_powers, double dt);
// In-place variant used by the orchestrator; identical arithmetic.
void step_inplace(ThermalGrid& grid, const std::vector<double>& heater_powers, double dt, std::vector<double>& scratch);

// Closed-loop rise fraction used when fitting: the default integral-only
// tuning places the loop at critical damping, where the step response is
// 1 - (1 + x) e^-x with x = t / (2 tau).
double critically_damped_crossing(double fraction);

// The third parameter of the fit: lateral conductance relative to g_amb.
constexpr double kDefaultLateralRatio = 0.25;

PlantParams fit_defaults(double target_rise, double p_at_target, double step_time, double rise_fraction = 0.5,
                         double lateral_ratio = kDefaultLateralRatio);

}  // namespace thermocell
