#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pw {

inline constexpr const char* kVersion = "0.1.0";
// Generator identity string embedded in reports so outputs are traceable to
// the exact stream-derivation scheme (see rng.hpp).
inline constexpr const char* kRngId = "splitmix64-v1";

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Law construction / validation failures.
struct DimensionMismatch : Error { using Error::Error; };
struct NonZeroMean : Error { using Error::Error; };
struct NotNormalized : Error { using Error::Error; };
struct BadExponent : Error { using Error::Error; };

// Scaling / diagnostic failures.
struct NotInDomain : Error { using Error::Error; };
struct DegenerateLaw : Error { using Error::Error; };

// Numerics.
struct BoxTooSmall : Error { using Error::Error; };
struct NumericUnderflow : Error { using Error::Error; };

// Statistics.
struct InsufficientData : Error { using Error::Error; };
struct DegenerateCovariance : Error { using Error::Error; };

// Anything wrong with a spec/config that is not one of the above.
struct InvalidSpec : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// Compensated (Kahan) accumulator for verification sums where plain double
// accumulation would eat into the tolerance being checked.
struct KahanSum {
    double s = 0.0;
    double c = 0.0;
    void add(double x) {
        double y = x - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    double value() const { return s; }
};

}  // namespace pw
