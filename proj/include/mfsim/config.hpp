#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mfsim/common.hpp"
#include "mfsim/experiments.hpp"

namespace mfsim::config {

// ---------------------------------------------------------------------------
// Experiment config files are flat `key = value` text; '#' starts a comment.
// Unknown keys are rejected with the offending line. The full schema is
// documented in the README.
// ---------------------------------------------------------------------------

struct GateSpec {
    std::string metric;  // empty disables the gate
    double slope_min = -std::numeric_limits<double>::infinity();
    double slope_max = std::numeric_limits<double>::infinity();
    double r2_min = -std::numeric_limits<double>::infinity();
    bool monotone = false;
};

struct LoadedConfig {
    experiments::ExperimentConfig cfg;
    std::size_t sim_replicas = 1;
    std::vector<double> selfcheck_H = {0.25, 0.5, 0.75};
    std::size_t selfcheck_replicas = 20000;
    double report_q = 2.0;
    GateSpec gate;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

[[noreturn]] inline void bad(const std::string& key, const std::string& where,
                             const std::string& why) {
    throw ConfigError("config: invalid value for '" + key + "' (" + where + "): " + why);
}

inline double parse_real(const std::string& key, const std::string& v,
                         const std::string& where) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) bad(key, where, "trailing characters in '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad(key, where, "not a number: '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v,
                               const std::string& where) {
    try {
        std::size_t pos = 0;
        const auto x = std::stoull(v, &pos);
        if (pos != v.size()) bad(key, where, "trailing characters in '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad(key, where, "not an unsigned integer: '" + v + "'");
    }
}

inline std::size_t parse_size(const std::string& key, const std::string& v,
                              const std::string& where) {
    return static_cast<std::size_t>(parse_u64(key, v, where));
}

inline bool parse_bool(const std::string& key, const std::string& v,
                       const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad(key, where, "expected true/false");
}

inline std::vector<double> parse_reals(const std::string& key, const std::string& v,
                                       const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_real(key, item, where));
    }
    if (out.empty()) bad(key, where, "empty list");
    return out;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v,
                                            const std::string& where) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_size(key, item, where));
    }
    if (out.empty()) bad(key, where, "empty list");
    return out;
}

inline void apply_key(LoadedConfig& lc, const std::string& key, const std::string& value,
                      const std::string& where) {
    auto& cfg = lc.cfg;
    auto& k = cfg.kernel;
    if (key == "seed") cfg.seed = parse_u64(key, value, where);
    else if (key == "out") cfg.out_dir = value;
    else if (key == "threads") cfg.threads = static_cast<int>(parse_u64(key, value, where));
    else if (key == "sim.T") cfg.T = parse_real(key, value, where);
    else if (key == "sim.n") cfg.n = parse_size(key, value, where);
    else if (key == "sim.H") cfg.H = parse_real(key, value, where);
    else if (key == "sim.d") cfg.d = parse_size(key, value, where);
    else if (key == "sim.N") cfg.sim_N = parse_size(key, value, where);
    else if (key == "sim.m") cfg.moment = parse_real(key, value, where);
    else if (key == "sim.replicas") lc.sim_replicas = parse_size(key, value, where);
    else if (key == "sim.dump") cfg.dump_trajectories = parse_bool(key, value, where);
    else if (key == "sim.init") {
        if (value == "point") cfg.init.type = dynamics::InitialLaw::Type::Point;
        else if (value == "gauss") cfg.init.type = dynamics::InitialLaw::Type::Gauss;
        else if (value == "uniform") cfg.init.type = dynamics::InitialLaw::Type::UniformBox;
        else bad(key, where, "expected point|gauss|uniform");
    }
    else if (key == "sim.init.mean") cfg.init.mean = parse_reals(key, value, where);
    else if (key == "sim.init.sigma") cfg.init.sigma = parse_reals(key, value, where);
    else if (key == "sim.init.lo") cfg.init.lo = parse_reals(key, value, where);
    else if (key == "sim.init.hi") cfg.init.hi = parse_reals(key, value, where);
    else if (key == "kernel.family") {
        if (value == "smooth") k.family = kernels::KernelFamily::Smooth;
        else if (value == "additive") k.family = kernels::KernelFamily::Additive;
        else if (value == "riesz") k.family = kernels::KernelFamily::RieszGradient;
        else if (value == "log") k.family = kernels::KernelFamily::LogGradient;
        else if (value == "dirac") k.family = kernels::KernelFamily::DiracApprox;
        else bad(key, where, "expected smooth|additive|riesz|log|dirac");
    }
    else if (key == "kernel.name") k.smooth_name = value;
    else if (key == "kernel.value") k.constant_value = parse_reals(key, value, where);
    else if (key == "kernel.delta") k.delta = parse_real(key, value, where);
    else if (key == "kernel.s") k.riesz_s = parse_real(key, value, where);
    else if (key == "kernel.v") k.dirac_v = parse_reals(key, value, where);
    else if (key == "kernel.f") k.f.name = value;
    else if (key == "kernel.f.scale") k.f.scale = parse_real(key, value, where);
    else if (key == "kernel.g") k.g.name = value;
    else if (key == "kernel.g.scale") k.g.scale = parse_real(key, value, where);
    else if (key == "kernel.h") k.h.name = value;
    else if (key == "kernel.h.scale") k.h.scale = parse_real(key, value, where);
    else if (key == "kernel.matrix") {
        if (value == "identity") k.matrix = kernels::MatrixKind::Identity;
        else if (value == "neg_identity") k.matrix = kernels::MatrixKind::NegIdentity;
        else if (value == "symplectic") k.matrix = kernels::MatrixKind::Symplectic;
        else bad(key, where, "expected identity|neg_identity|symplectic");
    }
    else if (key == "kernel.tmod") {
        if (value == "none") {
            k.modulation = kernels::ModulationKind::None;
        } else if (value.rfind("power:", 0) == 0) {
            k.modulation = kernels::ModulationKind::Power;
            k.modulation_p = parse_real(key, value.substr(6), where);
        } else {
            bad(key, where, "expected none or power:<p>");
        }
    }
    else if (key == "campaign.N") cfg.N_grid = parse_sizes(key, value, where);
    else if (key == "campaign.replicas") cfg.replicas = parse_size(key, value, where);
    else if (key == "campaign.M_min") cfg.M_min = parse_size(key, value, where);
    else if (key == "campaign.metrics") {
        cfg.metric_coupling = cfg.metric_observable = cfg.metric_sobolev = false;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item == "coupling") cfg.metric_coupling = true;
            else if (item == "observable") cfg.metric_observable = true;
            else if (item == "sobolev") cfg.metric_sobolev = true;
            else if (!item.empty()) bad(key, where, "unknown metric '" + item + "'");
        }
    }
    else if (key == "campaign.phi") cfg.phi_name = value;
    else if (key == "campaign.lambda") cfg.sobolev_lambda = parse_real(key, value, where);
    else if (key == "campaign.freq_samples") cfg.freq_samples = parse_size(key, value, where);
    else if (key == "campaign.delta_schedule") {
        if (value == "fixed") {
            cfg.schedule = experiments::DeltaSchedule::Fixed;
        } else if (value.rfind("power:", 0) == 0) {
            cfg.schedule = experiments::DeltaSchedule::Power;
            cfg.schedule_c = parse_real(key, value.substr(6), where);
        } else {
            bad(key, where, "expected fixed or power:<c>");
        }
    }
    else if (key == "campaign.allow_stiff") cfg.allow_stiff = parse_bool(key, value, where);
    else if (key == "campaign.override_admissibility")
        cfg.override_admissibility = parse_bool(key, value, where);
    else if (key == "selfcheck.H") lc.selfcheck_H = parse_reals(key, value, where);
    else if (key == "selfcheck.replicas")
        lc.selfcheck_replicas = parse_size(key, value, where);
    else if (key == "report.q") lc.report_q = parse_real(key, value, where);
    else if (key == "gate.metric") lc.gate.metric = value;
    else if (key == "gate.slope_min") lc.gate.slope_min = parse_real(key, value, where);
    else if (key == "gate.slope_max") lc.gate.slope_max = parse_real(key, value, where);
    else if (key == "gate.r2_min") lc.gate.r2_min = parse_real(key, value, where);
    else if (key == "gate.monotone") lc.gate.monotone = parse_bool(key, value, where);
    else
        throw ConfigError("config: unknown key '" + key + "' (" + where + ")");
}

}  // namespace detail

// Parse config text. Keys are applied in file order; later lines win.
inline LoadedConfig parse(const std::string& text) {
    LoadedConfig lc;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected 'key = value' at line " +
                              std::to_string(lineno));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        detail::apply_key(lc, key, value, "line " + std::to_string(lineno));
    }
    lc.cfg.kernel.dim = static_cast<int>(lc.cfg.d);
    return lc;
}

inline LoadedConfig load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse(buf.str());
}

// `--set key=value` overrides, applied left to right after the file.
inline void apply_override(LoadedConfig& lc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value: " + assignment);
    const std::string key = detail::trim(assignment.substr(0, eq));
    const std::string value = detail::trim(assignment.substr(eq + 1));
    detail::apply_key(lc, key, value, "override");
    lc.cfg.kernel.dim = static_cast<int>(lc.cfg.d);
}

}  // namespace mfsim::config
