#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cgar/depth.hpp"

namespace cgar {

// One curriculum stage: the depth to use while normalized training progress
// is below tau_hi. Stages partition (0, 1]; the last stage's tau_hi is 1.
struct CurriculumStage {
    double tau_hi;
    DepthConfig depth;
};

struct CurriculumSchedule {
    std::vector<CurriculumStage> stages;
};

// Nullopt if well formed, otherwise a description of the first violation.
// Checks: at least one stage, thresholds strictly increasing in (0, 1],
// final threshold exactly 1, effective depth strictly increasing across
// stages, every (n, T) at least (1, 1).
std::optional<std::string> validate_schedule(const CurriculumSchedule& s,
                                             int n_layers = 2);
void validate_schedule_or_throw(const CurriculumSchedule& s, int n_layers = 2);

// Depth for normalized progress rho in [0, 1]. Stage i covers
// [tau_{i-1}, tau_i); rho = 1 resolves to the last stage.
DepthConfig lookup(const CurriculumSchedule& s, double rho);

// Training-averaged effective depth: sum over stages of stage duration
// times stage depth. Terms are accumulated in stage order so the published
// value for the standard schedule is reproduced exactly.
double expected_effective_depth(const CurriculumSchedule& s, int n_layers = 2);

// Fixed-depth-baseline cost divided by curriculum cost.
double predicted_speedup(const CurriculumSchedule& s, const DepthConfig& baseline,
                         int n_layers = 2);

// Fraction of baseline compute the curriculum removes: 1 - expected/baseline.
double flops_reduction(const CurriculumSchedule& s, const DepthConfig& baseline,
                       int n_layers = 2);

// Named schedules:
//   default    stages (2,1)/(4,2)/(6,3) with thresholds 0.3, 0.6
//   shift-early  same stages, thresholds 0.2, 0.5
//   shift-late   same stages, thresholds 0.4, 0.7
//   fixed-full   single stage (6,3), no curriculum
// "fixed:n,T" selects a single custom stage.
CurriculumSchedule schedule_preset(std::string_view name);

// Parses "tau:n,T;tau:n,T;..." with the last tau equal to 1.
CurriculumSchedule parse_schedule(std::string_view spec);

// Accepts a preset name, "fixed:n,T", or an inline stage list.
CurriculumSchedule resolve_schedule(std::string_view name_or_spec);

std::string schedule_str(const CurriculumSchedule& s);

}  // namespace cgar
