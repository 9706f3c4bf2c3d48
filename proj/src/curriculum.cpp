#include "cgar/curriculum.hpp"

#include <charconv>
#include <sstream>

namespace cgar {

int effective_depth(const DepthConfig& d, int n_layers) {
    validate_depth(d);
    if (n_layers < 1) throw ValidationError("effective_depth: n_layers must be positive");
    return d.T * (d.n + 1) * n_layers;
}

std::optional<std::string> validate_schedule(const CurriculumSchedule& s, int n_layers) {
    if (s.stages.empty()) return "schedule has no stages";
    double prev_tau = 0.0;
    int prev_depth = 0;
    for (std::size_t i = 0; i < s.stages.size(); ++i) {
        const auto& st = s.stages[i];
        if (st.depth.n < 1 || st.depth.T < 1) {
            std::ostringstream os;
            os << "stage " << i + 1 << ": n and T must both be at least 1, got (n="
               << st.depth.n << ", T=" << st.depth.T << ")";
            return os.str();
        }
        if (!(st.tau_hi > prev_tau) || st.tau_hi > 1.0) {
            std::ostringstream os;
            os << "stage " << i + 1 << ": threshold " << st.tau_hi
               << " must lie in (" << prev_tau << ", 1]";
            return os.str();
        }
        const int depth = effective_depth(st.depth, n_layers);
        if (depth <= prev_depth) {
            std::ostringstream os;
            os << "stage " << i << " -> " << i + 1
               << ": effective depth must strictly increase, got " << prev_depth
               << " then " << depth;
            return os.str();
        }
        prev_tau = st.tau_hi;
        prev_depth = depth;
    }
    if (s.stages.back().tau_hi != 1.0) return "final stage threshold must be exactly 1";
    return std::nullopt;
}

void validate_schedule_or_throw(const CurriculumSchedule& s, int n_layers) {
    if (auto err = validate_schedule(s, n_layers)) throw ValidationError(*err);
}

DepthConfig lookup(const CurriculumSchedule& s, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw ValidationError("lookup: progress must lie in [0, 1]");
    validate_schedule_or_throw(s);
    for (const auto& st : s.stages)
        if (rho < st.tau_hi) return st.depth;
    return s.stages.back().depth;
}

double expected_effective_depth(const CurriculumSchedule& s, int n_layers) {
    validate_schedule_or_throw(s, n_layers);
    double total = 0.0;
    double prev_tau = 0.0;
    for (const auto& st : s.stages) {
        total += (st.tau_hi - prev_tau) * effective_depth(st.depth, n_layers);
        prev_tau = st.tau_hi;
    }
    return total;
}

double predicted_speedup(const CurriculumSchedule& s, const DepthConfig& baseline,
                         int n_layers) {
    return effective_depth(baseline, n_layers) / expected_effective_depth(s, n_layers);
}

double flops_reduction(const CurriculumSchedule& s, const DepthConfig& baseline,
                       int n_layers) {
    return 1.0 - expected_effective_depth(s, n_layers) /
                     effective_depth(baseline, n_layers);
}

namespace {

CurriculumSchedule standard_stages(double t1, double t2) {
    return {{{t1, {2, 1}}, {t2, {4, 2}}, {1.0, {6, 3}}}};
}

int parse_int(std::string_view s, const char* what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ValidationError(std::string("schedule: cannot parse ") + what + " from '" +
                              std::string(s) + "'");
    return v;
}

double parse_double(std::string_view s, const char* what) {
    // from_chars for double is spotty in older stdlibs; stod is fine here.
    try {
        std::size_t pos = 0;
        double v = std::stod(std::string(s), &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(std::string("schedule: cannot parse ") + what + " from '" +
                              std::string(s) + "'");
    }
}

}  // namespace

CurriculumSchedule schedule_preset(std::string_view name) {
    if (name == "default") return standard_stages(0.3, 0.6);
    if (name == "shift-early") return standard_stages(0.2, 0.5);
    if (name == "shift-late") return standard_stages(0.4, 0.7);
    if (name == "fixed-full") return {{{1.0, {6, 3}}}};
    if (name.rfind("fixed:", 0) == 0) {
        std::string_view rest = name.substr(6);
        auto comma = rest.find(',');
        if (comma == std::string_view::npos)
            throw ValidationError("schedule: fixed:n,T expects two integers");
        DepthConfig d{parse_int(rest.substr(0, comma), "n"),
                      parse_int(rest.substr(comma + 1), "T")};
        validate_depth(d);
        return {{{1.0, d}}};
    }
    throw ValidationError("unknown schedule preset '" + std::string(name) + "'");
}

CurriculumSchedule parse_schedule(std::string_view spec) {
    CurriculumSchedule s;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        auto semi = spec.find(';', pos);
        std::string_view item =
            spec.substr(pos, semi == std::string_view::npos ? spec.size() - pos : semi - pos);
        if (item.empty()) throw ValidationError("schedule: empty stage entry");
        auto colon = item.find(':');
        auto comma = item.find(',', colon == std::string_view::npos ? 0 : colon);
        if (colon == std::string_view::npos || comma == std::string_view::npos)
            throw ValidationError("schedule: stage must look like 'tau:n,T', got '" +
                                  std::string(item) + "'");
        s.stages.push_back({parse_double(item.substr(0, colon), "threshold"),
                            {parse_int(item.substr(colon + 1, comma - colon - 1), "n"),
                             parse_int(item.substr(comma + 1), "T")}});
        if (semi == std::string_view::npos) break;
        pos = semi + 1;
    }
    validate_schedule_or_throw(s);
    return s;
}

CurriculumSchedule resolve_schedule(std::string_view name_or_spec) {
    if (name_or_spec.find(':') != std::string_view::npos &&
        name_or_spec.rfind("fixed:", 0) != 0)
        return parse_schedule(name_or_spec);
    return schedule_preset(name_or_spec);
}

std::string schedule_str(const CurriculumSchedule& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.stages.size(); ++i) {
        if (i) os << ';';
        os << s.stages[i].tau_hi << ':' << s.stages[i].depth.n << ','
           << s.stages[i].depth.T;
    }
    return os.str();
}

}  // namespace cgar
