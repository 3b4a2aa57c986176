#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "twistlab/rashba.hpp"

namespace twistlab {

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& msg)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line(line) {}
    int line;
};

// Plain-text `key = value` run description. Sections and keys (defaults):
//   [grid]        n = 128, a = 1, packet_width = 8, spin = z, kx = 0, ky = 0,
//                 dressed_start = false
//   [params]      m = 1, hbar = 1, alpha = 0.3, beta = 0.1, dt = 0.04,
//                 n_steps = 10000
//   [potential]   kind = disorder, W = 0.2, xi = 2, omega = 0, seeds = 1
//   [observables] record_every = 100, variants = full-sin, wilson
//   [ramp]        shape = constant, t_ramp = 0
// spin is one of x, y, z, -x, -y, -z. seeds and variants are comma lists.
// '#' starts a comment.
struct SimulationConfig {
    EnsembleSpec ensemble;
    RDParams params;
    EvolveOptions observables;
    std::string spin_axis = "z";  // ensemble.spin follows it

    SimulationConfig();
};

SimulationConfig parse_config(const std::string& text);
SimulationConfig load_config(const std::string& path);

// Canonical text; parse_config(to_text(c)) reproduces c.
std::string to_text(const SimulationConfig& c);
// FNV-1a of the canonical text, as 16 hex digits.
std::string config_hash(const SimulationConfig& c);
std::string fnv1a_hex(const std::string& s);

// Spinor for x, y, z, -x, -y, -z; throws std::invalid_argument otherwise.
std::array<cplx, 2> spin_state(const std::string& axis);

}  // namespace twistlab
