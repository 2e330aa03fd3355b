#pragma once

// Rotary position embedding math: per-pair wavelengths, context coverage, base
// extension planning, and a reference rotation kernel.
//
// Pair i (0 <= i < d/2) rotates by angle position * base^(-2i/d), so its
// wavelength (tokens per full turn) is 2*pi * base^(2i/d). Pairs are the
// adjacent coordinates (2i, 2i+1).

#include <numbers>
#include <span>

#include "longctx/common.hpp"

namespace longctx::rope {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct RopePlan {
    int head_dim = 128;
    double base_old = 500000.0;
    double base_new = 200000000.0;
    std::int64_t native_len = 8192;
    std::int64_t target_len = 81920;

    void validate() const {
        if (head_dim <= 0 || head_dim % 2 != 0) throw PreconditionError("rope: head_dim must be a positive even integer");
        if (!(base_old > 1) || !(base_new > 1)) throw PreconditionError("rope: bases must exceed 1");
        if (native_len <= 0) throw PreconditionError("rope: native_len must be positive");
        if (target_len < native_len) throw PreconditionError("rope: target_len must be >= native_len");
    }
};

struct WavelengthProfile {
    double base = 0;
    int head_dim = 0;
    std::vector<double> lambdas;  // strictly increasing in i

    /// Number of pairs whose wavelength reaches `length` tokens.
    std::size_t coverage(double length) const {
        return static_cast<std::size_t>(std::count_if(lambdas.begin(), lambdas.end(), [&](double l) { return l >= length; }));
    }
};

inline double inv_frequency(double base, int head_dim, int pair) {
    return std::pow(base, -2.0 * pair / head_dim);
}

inline double wavelength(double base, int head_dim, int pair) {
    return kTwoPi * std::pow(base, 2.0 * pair / head_dim);
}

inline WavelengthProfile wavelengths(double base, int head_dim) {
    if (head_dim <= 0 || head_dim % 2 != 0) throw PreconditionError("wavelengths: head_dim must be a positive even integer");
    if (!(base > 1)) throw PreconditionError("wavelengths: base must exceed 1");
    WavelengthProfile p{base, head_dim, {}};
    for (int i = 0; i < head_dim / 2; ++i) p.lambdas.push_back(wavelength(base, head_dim, i));
    return p;
}

/// Rotate each coordinate pair of `v` by position * base^(-2i/d).
inline std::vector<double> apply_rotary(std::span<const double> v, std::int64_t position, double base) {
    if (v.empty() || v.size() % 2 != 0) throw PreconditionError("apply_rotary: vector length must be even and non-zero");
    const int d = static_cast<int>(v.size());
    std::vector<double> out(v.size());
    for (int i = 0; i < d / 2; ++i) {
        const double theta = static_cast<double>(position) * inv_frequency(base, d, i);
        const double c = std::cos(theta), s = std::sin(theta);
        const double x = v[2 * i], y = v[2 * i + 1];
        out[2 * i] = x * c - y * s;
        out[2 * i + 1] = x * s + y * c;
    }
    return out;
}

inline std::vector<double> apply_rotary(std::span<const double> v, std::int64_t position, double base, int head_dim) {
    if (static_cast<int>(v.size()) != head_dim)
        throw PreconditionError("apply_rotary: vector length " + std::to_string(v.size()) + " != head_dim " +
                                std::to_string(head_dim));
    return apply_rotary(v, position, base);
}

/// Smallest base whose longest wavelength reaches `target_len`, found by bisection
/// on the monotone largest wavelength to within one token of length. Empty when no
/// base can reach it (d = 2 has a single, base-independent wavelength of 2*pi).
inline std::optional<double> min_base_for(double target_len, int head_dim) {
    const int top = head_dim / 2 - 1;
    if (top == 0) return target_len <= kTwoPi ? std::optional<double>(1.0) : std::nullopt;
    const auto lam = [&](double b) { return wavelength(b, head_dim, top); };
    double lo = 1.0, hi = 2.0;
    if (lam(lo) >= target_len) return lo;
    while (lam(hi) < target_len) {
        lo = hi;
        hi *= 2.0;
    }
    while (lam(hi) - lam(lo) > 1.0 && hi - lo > 1e-9 * hi) {
        const double mid = 0.5 * (lo + hi);
        (lam(mid) >= target_len ? hi : lo) = mid;
    }
    return hi;
}

struct ExtensionReport {
    RopePlan plan;
    WavelengthProfile old_profile, new_profile;
    std::size_t coverage_old = 0, coverage_new = 0;
    std::optional<double> min_base;
    bool extension_needed = true;
    bool old_base_sufficient = false;
    bool new_base_sufficient = false;
    std::vector<std::string> findings;

    json to_json() const {
        return {{"head_dim", plan.head_dim},
                {"base_old", plan.base_old},
                {"base_new", plan.base_new},
                {"native_len", plan.native_len},
                {"target_len", plan.target_len},
                {"coverage_old", coverage_old},
                {"coverage_new", coverage_new},
                {"pairs", plan.head_dim / 2},
                {"min_base", min_base ? json(*min_base) : json(nullptr)},
                {"extension_needed", extension_needed},
                {"old_base_sufficient", old_base_sufficient},
                {"new_base_sufficient", new_base_sufficient},
                {"findings", findings}};
    }

    /// Per-pair wavelengths at both bases.
    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "pair,lambda_base_old,lambda_base_new,covers_target_old,covers_target_new\n";
        for (std::size_t i = 0; i < old_profile.lambdas.size(); ++i) {
            const double lo = old_profile.lambdas[i], ln = new_profile.lambdas[i];
            const double t = static_cast<double>(plan.target_len);
            os << i << ',' << lo << ',' << ln << ',' << (lo >= t ? 1 : 0) << ',' << (ln >= t ? 1 : 0) << '\n';
        }
        return os.str();
    }
};

/// Coverage facts for extending from native_len to target_len. Pure function of the plan.
inline ExtensionReport plan_extension(const RopePlan& plan) {
    plan.validate();
    ExtensionReport r;
    r.plan = plan;
    r.old_profile = wavelengths(plan.base_old, plan.head_dim);
    r.new_profile = wavelengths(plan.base_new, plan.head_dim);
    const auto target = static_cast<double>(plan.target_len);
    r.coverage_old = r.old_profile.coverage(target);
    r.coverage_new = r.new_profile.coverage(target);
    r.min_base = min_base_for(target, plan.head_dim);
    r.old_base_sufficient = r.min_base && plan.base_old >= *r.min_base;
    r.new_base_sufficient = r.min_base && plan.base_new >= *r.min_base;
    r.extension_needed = plan.target_len > plan.native_len || plan.base_new != plan.base_old;

    std::ostringstream os;
    os.precision(15);
    if (plan.target_len == plan.native_len && plan.base_new == plan.base_old) {
        r.findings.push_back("no extension needed: target length equals native length and the base is unchanged");
    } else {
        os << "pairs with wavelength >= " << plan.target_len << " tokens: " << r.coverage_old << "/"
           << plan.head_dim / 2 << " at base " << plan.base_old << ", " << r.coverage_new << "/" << plan.head_dim / 2
           << " at base " << plan.base_new;
        r.findings.push_back(os.str());
    }
    if (!r.min_base) {
        r.findings.push_back("no base gives the longest wavelength >= target length for this head_dim");
    } else {
        std::ostringstream m;
        m.precision(10);
        m << "minimum base with longest wavelength >= target length: " << *r.min_base;
        r.findings.push_back(m.str());
        if (!r.new_base_sufficient)
            r.findings.push_back("insufficient top-frequency wavelength: new base is below the minimum base, so the "
                                 "longest wavelength is shorter than the target length");
        else
            r.findings.push_back("new base meets the longest-wavelength coverage criterion (this is a sufficiency "
                                 "check, not an optimality claim)");
    }
    return r;
}

}  // namespace longctx::rope
