#pragma once

#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "prodcredit/errors.hpp"
#include "prodcredit/rng.hpp"

namespace prodcredit {

// Sampleable scalar law with a known mean. Serves as the jump-size law of
// compound-Poisson specs and as the lenders' belief distribution. Laws with
// a density and finite moment generating function additionally support
// Gauss-Legendre quadrature of jump integrals.
class Distribution {
public:
    enum class Kind { point_mass, uniform, normal, lognormal, exponential };

    static Distribution point_mass(double value) {
        return Distribution(Kind::point_mass, value, 0.0);
    }
    static Distribution uniform(double lo, double hi) {
        if (!(lo < hi)) throw ValidationError("uniform law: requires lo < hi");
        return Distribution(Kind::uniform, lo, hi);
    }
    static Distribution normal(double mean, double stddev) {
        if (!(stddev > 0.0)) throw ValidationError("normal law: requires stddev > 0");
        return Distribution(Kind::normal, mean, stddev);
    }
    static Distribution lognormal(double log_mean, double log_stddev) {
        if (!(log_stddev > 0.0)) throw ValidationError("lognormal law: requires log_stddev > 0");
        return Distribution(Kind::lognormal, log_mean, log_stddev);
    }
    static Distribution exponential(double rate) {
        if (!(rate > 0.0)) throw ValidationError("exponential law: requires rate > 0");
        return Distribution(Kind::exponential, rate, 0.0);
    }

    Kind kind() const { return kind_; }

    double mean() const {
        switch (kind_) {
            case Kind::point_mass: return a_;
            case Kind::uniform: return 0.5 * (a_ + b_);
            case Kind::normal: return a_;
            case Kind::lognormal: return std::exp(a_ + 0.5 * b_ * b_);
            case Kind::exponential: return 1.0 / a_;
        }
        return 0.0;
    }

    double variance() const {
        switch (kind_) {
            case Kind::point_mass: return 0.0;
            case Kind::uniform: return (b_ - a_) * (b_ - a_) / 12.0;
            case Kind::normal: return b_ * b_;
            case Kind::lognormal: {
                const double s2 = b_ * b_;
                return (std::exp(s2) - 1.0) * std::exp(2.0 * a_ + s2);
            }
            case Kind::exponential: return 1.0 / (a_ * a_);
        }
        return 0.0;
    }

    double sample(rng::SplitMix64& gen) const {
        switch (kind_) {
            case Kind::point_mass: return a_;
            case Kind::uniform: return a_ + (b_ - a_) * gen.next_uniform();
            case Kind::normal: return a_ + b_ * gen.next_normal();
            case Kind::lognormal: return std::exp(a_ + b_ * gen.next_normal());
            case Kind::exponential: return -std::log(gen.next_uniform()) / a_;
        }
        return 0.0;
    }

    bool has_density() const { return kind_ != Kind::point_mass; }

    double density(double x) const {
        switch (kind_) {
            case Kind::uniform:
                return (x >= a_ && x <= b_) ? 1.0 / (b_ - a_) : 0.0;
            case Kind::normal: {
                const double z = (x - a_) / b_;
                return std::exp(-0.5 * z * z) /
                       (b_ * std::sqrt(2.0 * std::numbers::pi));
            }
            case Kind::lognormal: {
                if (x <= 0.0) return 0.0;
                const double z = (std::log(x) - a_) / b_;
                return std::exp(-0.5 * z * z) /
                       (x * b_ * std::sqrt(2.0 * std::numbers::pi));
            }
            case Kind::exponential:
                return x >= 0.0 ? a_ * std::exp(-a_ * x) : 0.0;
            case Kind::point_mass:
                throw DomainError("point-mass law has no density");
        }
        return 0.0;
    }

    // Finite interval carrying essentially all of the mass, for quadrature.
    std::pair<double, double> quadrature_support(double tail_width = 10.0) const {
        switch (kind_) {
            case Kind::point_mass: return {a_, a_};
            case Kind::uniform: return {a_, b_};
            case Kind::normal: return {a_ - tail_width * b_, a_ + tail_width * b_};
            case Kind::lognormal:
                return {std::exp(a_ - tail_width * b_), std::exp(a_ + tail_width * b_)};
            case Kind::exponential: return {0.0, (tail_width * tail_width) / a_};
        }
        return {0.0, 0.0};
    }

    // Law of factor * X for factor > 0.
    Distribution scaled(double factor) const {
        if (!(factor > 0.0))
            throw ValidationError("scaled law: factor must be > 0");
        switch (kind_) {
            case Kind::point_mass: return point_mass(a_ * factor);
            case Kind::uniform: return uniform(a_ * factor, b_ * factor);
            case Kind::normal: return normal(a_ * factor, b_ * factor);
            case Kind::lognormal: return lognormal(a_ + std::log(factor), b_);
            case Kind::exponential: return exponential(a_ / factor);
        }
        return *this;
    }

    std::string describe() const {
        switch (kind_) {
            case Kind::point_mass: return fmt::format("point_mass({})", a_);
            case Kind::uniform: return fmt::format("uniform({}, {})", a_, b_);
            case Kind::normal: return fmt::format("normal({}, {})", a_, b_);
            case Kind::lognormal: return fmt::format("lognormal({}, {})", a_, b_);
            case Kind::exponential: return fmt::format("exponential({})", a_);
        }
        return "?";
    }

private:
    Distribution(Kind k, double a, double b) : kind_(k), a_(a), b_(b) {}

    Kind kind_;
    double a_;
    double b_;
};

}  // namespace prodcredit
