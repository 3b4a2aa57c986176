#include "twistlab/config.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace twistlab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string x; std::getline(ss, x, ',');) {
        x = trim(x);
        if (!x.empty()) out.push_back(x);
    }
    return out;
}

double to_double(const std::string& v, int line) {
    double x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x))
        throw ConfigError(line, "expected a number, got '" + v + "'");
    return x;
}

long long to_int(const std::string& v, int line) {
    const double x = to_double(v, line);
    if (x != std::floor(x) || std::abs(x) > 9.0e15) throw ConfigError(line, "expected an integer, got '" + v + "'");
    return static_cast<long long>(x);
}

bool to_bool(const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(line, "expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

using Setter = std::function<void(SimulationConfig&, const std::string&, int)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s = {
        {"grid",
         {{"n",
           [](SimulationConfig& c, const std::string& v, int l) {
               const auto n = to_int(v, l);
               if (n < 8 || n % 2 || n > 8192) throw ConfigError(l, "n must be even and in [8, 8192]");
               c.ensemble.n = static_cast<int>(n);
           }},
          {"a",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.ensemble.a = to_double(v, l);
               if (!(c.ensemble.a > 0)) throw ConfigError(l, "a must be positive");
           }},
          {"packet_width",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.ensemble.width = to_double(v, l);
               if (!(c.ensemble.width > 0)) throw ConfigError(l, "packet_width must be positive");
           }},
          {"spin",
           [](SimulationConfig& c, const std::string& v, int l) {
               try {
                   c.ensemble.spin = spin_state(v);
               } catch (const std::invalid_argument& e) {
                   throw ConfigError(l, e.what());
               }
               c.spin_axis = v;
           }},
          {"kx", [](SimulationConfig& c, const std::string& v, int l) { c.ensemble.kx = to_double(v, l); }},
          {"ky", [](SimulationConfig& c, const std::string& v, int l) { c.ensemble.ky = to_double(v, l); }},
          {"dressed_start",
           [](SimulationConfig& c, const std::string& v, int l) { c.ensemble.dressed_start = to_bool(v, l); }}}},
        {"params",
         {{"m",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.params.m = to_double(v, l);
               if (!(c.params.m > 0)) throw ConfigError(l, "m must be positive");
           }},
          {"hbar",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.params.hbar = to_double(v, l);
               if (!(c.params.hbar > 0)) throw ConfigError(l, "hbar must be positive");
           }},
          {"alpha", [](SimulationConfig& c, const std::string& v, int l) { c.params.alpha = to_double(v, l); }},
          {"beta", [](SimulationConfig& c, const std::string& v, int l) { c.params.beta = to_double(v, l); }},
          {"dt",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.params.dt = to_double(v, l);
               if (!(c.params.dt > 0)) throw ConfigError(l, "dt must be positive");
           }},
          {"n_steps",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.params.n_steps = static_cast<long>(to_int(v, l));
               if (c.params.n_steps < 0) throw ConfigError(l, "n_steps must be >= 0");
           }}}},
        {"potential",
         {{"kind",
           [](SimulationConfig& c, const std::string& v, int l) {
               auto& k = c.ensemble.potential.kind;
               if (v == "none") k = PotentialSpec::None;
               else if (v == "disorder") k = PotentialSpec::Disorder;
               else if (v == "harmonic") k = PotentialSpec::Harmonic;
               else throw ConfigError(l, "kind must be none, disorder or harmonic");
           }},
          {"W",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.ensemble.potential.W = to_double(v, l);
               if (c.ensemble.potential.W < 0) throw ConfigError(l, "W must be >= 0");
           }},
          {"xi",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.ensemble.potential.xi = to_double(v, l);
               if (!(c.ensemble.potential.xi > 0)) throw ConfigError(l, "xi must be positive");
           }},
          {"omega",
           [](SimulationConfig& c, const std::string& v, int l) { c.ensemble.potential.omega = to_double(v, l); }},
          {"seeds",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.ensemble.seeds.clear();
               for (const auto& s : split_list(v)) {
                   const auto x = to_int(s, l);
                   if (x < 0) throw ConfigError(l, "seeds must be non-negative");
                   c.ensemble.seeds.push_back(static_cast<std::uint64_t>(x));
               }
               if (c.ensemble.seeds.empty()) throw ConfigError(l, "seeds must not be empty");
           }}}},
        {"observables",
         {{"record_every",
           [](SimulationConfig& c, const std::string& v, int l) {
               const auto r = to_int(v, l);
               if (r < 1) throw ConfigError(l, "record_every must be >= 1");
               c.observables.record_every = static_cast<int>(r);
           }},
          {"variants",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.observables.twists.clear();
               const auto items = split_list(v);
               if (items.size() == 1 && items[0] == "all") {
                   c.observables.twists = TwistChoice::all();
                   return;
               }
               for (const auto& s : items) {
                   if (s == "none") continue;
                   try {
                       c.observables.twists.push_back(TwistChoice::parse(s));
                   } catch (const std::invalid_argument& e) {
                       throw ConfigError(l, e.what());
                   }
               }
           }}}},
        {"ramp",
         {{"shape",
           [](SimulationConfig& c, const std::string& v, int l) {
               auto& s = c.params.ramp.shape;
               if (v == "constant") s = Ramp::Constant;
               else if (v == "c1") s = Ramp::C1;
               else if (v == "c2") s = Ramp::C2;
               else throw ConfigError(l, "shape must be constant, c1 or c2");
           }},
          {"t_ramp",
           [](SimulationConfig& c, const std::string& v, int l) {
               c.params.ramp.t_ramp = to_double(v, l);
               if (c.params.ramp.t_ramp < 0) throw ConfigError(l, "t_ramp must be >= 0");
           }}}},
    };
    return s;
}

}  // namespace

std::array<cplx, 2> spin_state(const std::string& axis) {
    const double r = 1 / std::sqrt(2.0);
    if (axis == "z") return {cplx(1), cplx(0)};
    if (axis == "-z") return {cplx(0), cplx(1)};
    if (axis == "x") return {cplx(r), cplx(r)};
    if (axis == "-x") return {cplx(r), cplx(-r)};
    if (axis == "y") return {cplx(r), cplx(0, r)};
    if (axis == "-y") return {cplx(r), cplx(0, -r)};
    throw std::invalid_argument("spin must be one of x, y, z, -x, -y, -z");
}

SimulationConfig::SimulationConfig() {
    ensemble.potential.kind = PotentialSpec::Disorder;
    ensemble.seeds = {1};
    params.alpha = 0.3;
    params.beta = 0.1;
    observables.twists = {TwistChoice::parse("full-sin"), TwistChoice::parse("wilson")};
}

SimulationConfig parse_config(const std::string& text) {
    SimulationConfig c;
    std::istringstream is(text);
    std::string raw, section;
    std::set<std::string> seen;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            if (!schema().count(section)) throw ConfigError(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected key = value");
        const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        if (section.empty()) throw ConfigError(line, "key '" + key + "' outside a section");
        const auto& keys = schema().at(section);
        const auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError(line, "unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(section + "." + key).second) throw ConfigError(line, "duplicate key '" + key + "'");
        if (value.empty()) throw ConfigError(line, "empty value for '" + key + "'");
        it->second(c, value, line);
    }
    return c;
}

SimulationConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(0, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const SimulationConfig& c) {
    const auto& e = c.ensemble;
    const auto& p = c.params;
    std::ostringstream os;
    os << "[grid]\n"
       << "n = " << e.n << "\na = " << fmt(e.a) << "\npacket_width = " << fmt(e.width) << "\nspin = " << c.spin_axis
       << "\nkx = " << fmt(e.kx) << "\nky = " << fmt(e.ky) << "\ndressed_start = " << (e.dressed_start ? "true" : "false")
       << "\n\n[params]\n"
       << "m = " << fmt(p.m) << "\nhbar = " << fmt(p.hbar) << "\nalpha = " << fmt(p.alpha) << "\nbeta = " << fmt(p.beta)
       << "\ndt = " << fmt(p.dt) << "\nn_steps = " << p.n_steps << "\n\n[potential]\nkind = "
       << (e.potential.kind == PotentialSpec::None       ? "none"
           : e.potential.kind == PotentialSpec::Disorder ? "disorder"
                                                         : "harmonic")
       << "\nW = " << fmt(e.potential.W) << "\nxi = " << fmt(e.potential.xi) << "\nomega = " << fmt(e.potential.omega)
       << "\nseeds = ";
    for (std::size_t i = 0; i < e.seeds.size(); ++i) os << (i ? ", " : "") << e.seeds[i];
    os << "\n\n[observables]\nrecord_every = " << c.observables.record_every << "\nvariants = ";
    if (c.observables.twists.empty()) os << "none";
    for (std::size_t i = 0; i < c.observables.twists.size(); ++i)
        os << (i ? ", " : "") << c.observables.twists[i].label();
    os << "\n\n[ramp]\nshape = "
       << (p.ramp.shape == Ramp::Constant ? "constant" : p.ramp.shape == Ramp::C1 ? "c1" : "c2")
       << "\nt_ramp = " << fmt(p.ramp.t_ramp) << "\n";
    return os.str();
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const SimulationConfig& c) { return fnv1a_hex(to_text(c)); }

}  // namespace twistlab
