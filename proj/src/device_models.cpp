#include "thermocell/device_models.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

namespace thermocell {

void validate(const BjtParams& p) {
    if (!(p.vg0 > p.vbe_at_tref && p.vbe_at_tref > 0.0)) throw ConfigError("bjt: need vg0 > vbe_at_tref > 0");
    if (!(p.t_ref >= 200.0 && p.t_ref <= 400.0)) throw ConfigError("bjt: t_ref outside [200, 400] K");
    if (!(p.n_proc > 0.0)) throw ConfigError("bjt: n_proc must be positive");
    if (!(p.mismatch_sigma_vbe >= 0.0)) throw ConfigError("bjt: mismatch_sigma_vbe must be >= 0");
}

void validate(const CurrentSourceParams& p) {
    if (!(p.r1 > 0.0 && p.r2 > 0.0)) throw ConfigError("current_source: r1, r2 must be positive");
    if (!(p.mirror_ratio >= 1.0)) throw ConfigError("current_source: mirror_ratio must be >= 1");
    if (!(p.bias_current_ratio > 1.0)) throw ConfigError("current_source: bias_current_ratio must be > 1");
    if (!(p.alpha > 0.0)) throw ConfigError("current_source: alpha must be positive");
    if (p.trim_code < 0 || p.trim_code > 63) throw ConfigError("current_source: trim_code must fit 6 bits");
    if (!(p.trim_step >= 0.0) || !(p.i_trim_bias >= 0.0)) throw ConfigError("current_source: trim parameters must be >= 0");
    if (!(p.noise_rms_chopper_off >= 0.0 && p.noise_rms_chopper_on >= 0.0))
        throw ConfigError("current_source: noise levels must be >= 0");
}

void validate(const HeaterParams& p) {
    if (!(p.p_max > 0.0)) throw ConfigError("heater: p_max must be positive");
}

double vbe(const BjtParams& p, double t, double ic_ratio) {
    if (!(t >= 250.0 && t <= 400.0)) throw DomainError("vbe: temperature outside [250, 400] K");
    if (!(ic_ratio > 0.0)) throw DomainError("vbe: collector current ratio must be positive");
    const double x = t / p.t_ref;
    const double vt = thermal_voltage(t);
    return p.vg0 * (1.0 - x) + x * p.vbe_at_tref - p.n_proc * vt * std::log(x) + vt * std::log(ic_ratio) + p.offset;
}

double delta_vbe(const CurrentSourceParams& p, double t) {
    if (!(t > 0.0)) throw DomainError("delta_vbe: temperature must be positive");
    return thermal_voltage(t) * std::log(p.bias_current_ratio);
}

double i_ctat(const CurrentSourceParams& p, const BjtParams& bjt, double t, Rng* noise) {
    const double v_trim = vbe(bjt, t, t / bjt.t_ref) + p.i_trim_bias * p.trim_code * p.trim_step;
    double i = v_trim / p.r1 / p.mirror_ratio;
    if (p.noise_enabled && noise) i += noise->gaussian(p.noise_rms());
    return i;
}

double i_ptat(const CurrentSourceParams& p, double t) { return p.alpha * delta_vbe(p, t) / p.r2; }

double heater_power(const HeaterParams& p, double duty) {
    if (!(duty >= 0.0 && duty <= 1.0)) throw DomainError("heater_power: duty outside [0, 1]");
    return duty * p.p_max;
}

double fit_alpha(const CurrentSourceParams& cs, const BjtParams& bjt, double t_cold, double ratio_at_cold) {
    if (!(ratio_at_cold > 0.0)) throw FitError("fit_alpha: ratio must be positive");
    CurrentSourceParams unit = cs;
    unit.alpha = 1.0;
    unit.noise_enabled = false;
    return i_ctat(unit, bjt, t_cold) / (ratio_at_cold * i_ptat(unit, t_cold));
}

DeviceSet nominal_devices(double ratio_at_cold, double t_cold_c) {
    DeviceSet d;
    d.cs.alpha = fit_alpha(d.cs, d.bjt, to_kelvin(t_cold_c), ratio_at_cold);
    return d;
}

DeviceSet draw_mismatch(const DeviceSet& nominal, const MismatchSigmas& s, Rng& rng) {
    DeviceSet d = nominal;
    // fixed draw order keeps streams stable when sigmas are zero
    const double g_vbe = rng.gaussian();
    const double g_r1 = rng.gaussian();
    const double g_r2 = rng.gaussian();
    const double g_m = rng.gaussian();
    d.bjt.offset = nominal.bjt.offset + s.vbe * g_vbe;
    d.cs.r1 = nominal.cs.r1 * (1.0 + s.r1 * g_r1);
    d.cs.r2 = nominal.cs.r2 * (1.0 + s.r2 * g_r2);
    d.cs.mirror_ratio = nominal.cs.mirror_ratio * (1.0 + s.mirror * g_m);
    return d;
}

// ---------------- Network ----------------

namespace {

struct Parser {
    const std::string& s;
    std::size_t pos = 0;

    void skip() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    [[noreturn]] void fail(const std::string& what) {
        throw ConfigError("network: " + what + " at offset " + std::to_string(pos) + " in '" + s + "'");
    }

    Network expr() {
        std::vector<Network> parts{term()};
        skip();
        while (pos < s.size() && s[pos] == '+') {
            ++pos;
            parts.push_back(term());
            skip();
        }
        return parts.size() == 1 ? parts.front() : Network::series(std::move(parts));
    }
    Network term() {
        std::vector<Network> parts{factor()};
        skip();
        while (pos < s.size() && s[pos] == '|') {
            ++pos;
            parts.push_back(factor());
            skip();
        }
        return parts.size() == 1 ? parts.front() : Network::parallel(std::move(parts));
    }
    Network factor() {
        skip();
        if (pos >= s.size()) fail("unexpected end");
        char c = s[pos];
        if (c == '(') {
            ++pos;
            Network n = expr();
            skip();
            if (pos >= s.size() || s[pos] != ')') fail("expected ')'");
            ++pos;
            return n;
        }
        if (c == 'R' || c == 'r' || c == 'C' || c == 'c') {
            ++pos;
            skip();
            const char* begin = s.c_str() + pos;
            char* end = nullptr;
            double v = std::strtod(begin, &end);
            if (end == begin) fail("expected a value");
            pos += static_cast<std::size_t>(end - begin);
            if (!(v > 0.0) || !std::isfinite(v)) fail("element values must be positive");
            return (c == 'R' || c == 'r') ? Network::resistor(v) : Network::capacitor(v);
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace

Network Network::parse(const std::string& text) {
    Parser p{text};
    Network n = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("trailing input");
    return n;
}

Network Network::resistor(double r) {
    if (!(r > 0.0)) throw ConfigError("network: R must be positive");
    Network n;
    n.kind_ = Kind::R;
    n.value_ = r;
    return n;
}

Network Network::capacitor(double c) {
    if (!(c > 0.0)) throw ConfigError("network: C must be positive");
    Network n;
    n.kind_ = Kind::C;
    n.value_ = c;
    return n;
}

Network Network::series(std::vector<Network> parts) {
    if (parts.empty()) throw ConfigError("network: empty series group");
    Network n;
    n.kind_ = Kind::Series;
    n.children_ = std::move(parts);
    return n;
}

Network Network::parallel(std::vector<Network> parts) {
    if (parts.empty()) throw ConfigError("network: empty parallel group");
    Network n;
    n.kind_ = Kind::Parallel;
    n.children_ = std::move(parts);
    return n;
}

std::complex<double> Network::impedance(double f) const {
    const double w = 2.0 * kPi * f;
    switch (kind_) {
        case Kind::R:
            return {value_, 0.0};
        case Kind::C:
            return 1.0 / std::complex<double>(0.0, w * value_);
        case Kind::Series: {
            std::complex<double> z = 0.0;
            for (const auto& c : children_) z += c.impedance(f);
            return z;
        }
        case Kind::Parallel: {
            std::complex<double> y = 0.0;
            for (const auto& c : children_) y += 1.0 / c.impedance(f);
            return 1.0 / y;
        }
    }
    return {};
}

std::string Network::to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
        case Kind::R:
            os << 'R' << value_;
            break;
        case Kind::C:
            os << 'C' << value_;
            break;
        case Kind::Series:
        case Kind::Parallel: {
            os << '(';
            for (std::size_t i = 0; i < children_.size(); ++i) {
                if (i) os << (kind_ == Kind::Series ? " + " : " | ");
                os << children_[i].to_string();
            }
            os << ')';
            break;
        }
    }
    return os.str();
}

std::size_t Network::element_count() const {
    if (kind_ == Kind::R || kind_ == Kind::C) return 1;
    std::size_t n = 0;
    for (const auto& c : children_) n += c.element_count();
    return n;
}

void Network::reset_state() {
    v_prev_ = i_prev_ = 0.0;
    for (auto& c : children_) c.reset_state();
}

// Norton companion: i = g*v + ieq
void Network::companion(double h) {
    switch (kind_) {
        case Kind::R:
            g_ = 1.0 / value_;
            ieq_ = 0.0;
            break;
        case Kind::C:
            g_ = 2.0 * value_ / h;
            ieq_ = -(g_ * v_prev_ + i_prev_);
            break;
        case Kind::Parallel:
            g_ = ieq_ = 0.0;
            for (auto& c : children_) {
                c.companion(h);
                g_ += c.g_;
                ieq_ += c.ieq_;
            }
            break;
        case Kind::Series: {
            double r = 0.0, s = 0.0;
            for (auto& c : children_) {
                c.companion(h);
                r += 1.0 / c.g_;
                s += c.ieq_ / c.g_;
            }
            g_ = 1.0 / r;
            ieq_ = g_ * s;
            break;
        }
    }
}

void Network::commit(double v, double i) {
    switch (kind_) {
        case Kind::R:
            break;
        case Kind::C:
            v_prev_ = v;
            i_prev_ = i;
            break;
        case Kind::Parallel:
            for (auto& c : children_) c.commit(v, c.g_ * v + c.ieq_);
            break;
        case Kind::Series:
            for (auto& c : children_) c.commit((i - c.ieq_) / c.g_, i);
            break;
    }
}

double Network::step(double v, double h) {
    if (!(h > 0.0)) throw DomainError("network step must be positive");
    companion(h);
    const double i = g_ * v + ieq_;
    commit(v, i);
    return i;
}

CvResponse cv_linear_gaussian(double conductance, double i_peak, double v_peak, double width) {
    if (!(width > 0.0)) throw ConfigError("cv model: peak width must be positive");
    return [=](double v, double) {
        const double d = (v - v_peak) / width;
        return conductance * v + i_peak * std::exp(-0.5 * d * d);
    };
}

CvResponse cv_resistor(double r) {
    if (!(r > 0.0)) throw ConfigError("cv model: resistance must be positive");
    return [=](double v, double) { return v / r; };
}

void validate(const SensorFrontEndModel& m) {
    switch (m.kind) {
        case SensorKind::PhLinear:
            if (!(m.ph_sensitivity_i > 0.0)) throw ConfigError("sensor: ph_sensitivity_i must be positive");
            break;
        case SensorKind::CvPluggable:
            if (!m.cv_response) throw ConfigError("sensor: cv_pluggable needs a response function");
            break;
        case SensorKind::ImpedanceNetwork:
            if (!m.network || m.network->element_count() < 1) throw ConfigError("sensor: impedance network is empty");
            break;
    }
}

double ph_derating(double temp_kelvin) {
    const double c = to_celsius(temp_kelvin);
    return c > 25.0 ? 1.0 - 0.01 * (c - 25.0) : 1.0;
}

double sensor_current(SensorFrontEndModel& m, double v, double t_now, double temp_kelvin) {
    switch (m.kind) {
        case SensorKind::PhLinear:
            return m.ph_sensitivity_i * (m.ph - m.ph_reference) * ph_derating(temp_kelvin);
        case SensorKind::CvPluggable:
            if (!m.cv_response) throw ConfigError("sensor: cv_pluggable needs a response function");
            return m.cv_response(v, t_now);
        case SensorKind::ImpedanceNetwork: {
            if (!m.network) throw ConfigError("sensor: impedance network is empty");
            double span = t_now - m.last_t;
            if (span < 0.0) throw DomainError("sensor: time went backwards");
            double i = 0.0;
            if (span == 0.0) {
                // zero-length step: evaluate with a tiny step on a copy so state is untouched
                Network probe = *m.network;
                return probe.step(v, m.max_step * 1e-3);
            }
            const int n = static_cast<int>(std::ceil(span / m.max_step));
            const double h = span / n;
            for (int k = 1; k <= n; ++k) {
                const double vk = m.last_v + (v - m.last_v) * (static_cast<double>(k) / n);
                i = m.network->step(vk, h);
            }
            m.last_t = t_now;
            m.last_v = v;
            return i;
        }
    }
    throw ConfigError("sensor: unknown model kind");
}

}  // namespace thermocell
