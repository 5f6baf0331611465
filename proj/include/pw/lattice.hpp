#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pw/common.hpp"
#include "pw/rng.hpp"

// Lattice points, step laws, and norming sequences.
//
// Conventions used throughout the project:
//   * points live on the integer lattice Z^d, d >= 2;
//   * every distance is the max (L-infinity) norm;
//   * a step law is immutable once built; construct through the make_*
//     factories below, which validate centering and normalization.

namespace pw {

using Coord = std::int64_t;

struct LatticePoint {
    std::vector<Coord> c;

    LatticePoint() = default;
    explicit LatticePoint(std::vector<Coord> v) : c(std::move(v)) {}
    static LatticePoint zero(int d) { return LatticePoint(std::vector<Coord>(d, 0)); }

    int dim() const { return static_cast<int>(c.size()); }
    Coord max_norm() const {
        Coord m = 0;
        for (Coord v : c) m = std::max(m, v < 0 ? -v : v);
        return m;
    }
    bool operator==(const LatticePoint& o) const { return c == o.c; }
    bool operator<(const LatticePoint& o) const { return c < o.c; }
};

LatticePoint operator+(const LatticePoint& a, const LatticePoint& b);
LatticePoint operator-(const LatticePoint& a, const LatticePoint& b);
Coord max_norm_distance(const LatticePoint& a, const LatticePoint& b);

enum class LawFamily { Table, AxisPowerTail, ProductLazy };

// Coarse tail classification assigned at construction time:
//   FiniteVariance - second moments exist (norming sqrt(n));
//   LType          - infinite variance with slowly varying truncated second
//                    moment growing like 2c*log x (norming sqrt(c n log n));
//   BType          - infinite variance, not L-type; must pass the
//                    domain-of-attraction diagnostic before a norming
//                    sequence can be derived numerically;
//   HeavyTail      - tail exponent too small even for that; such rows are
//                    only legal as impurity overrides, never as a base law.
enum class LawClass { FiniteVariance, BType, LType, HeavyTail };

struct TableEntry {
    LatticePoint jump;
    double prob = 0.0;
};

struct JumpLaw {
    LawFamily family = LawFamily::Table;
    LawClass law_class = LawClass::FiniteVariance;
    int d = 0;
    bool symmetric = false;
    double hold = 0.0;  // P(jump == 0)
    // Row-major d*d second-moment matrix; absent when the variance is infinite.
    std::optional<std::vector<double>> covariance;

    // Table / ProductLazy payload (ProductLazy is materialized as its table).
    std::vector<TableEntry> entries;
    std::vector<double> cum;  // sampling CDF over entries; cum.back() == 1.0

    // AxisPowerTail payload: P(jump = k*e_i) proportional to |k|^-beta,
    // symmetric over both signs and all d axes.
    double beta = 0.0;
    std::optional<Coord> tail_cutoff;  // magnitude cap; law renormalized within
    double normalizer = 0.0;           // sum over k>=1 (up to cutoff) of k^-beta
    std::vector<double> pref_pmf;      // prefix sums of k^-beta,   index 0..kPrefix
    std::vector<double> pref_l2;       // prefix sums of k^(2-beta), index 0..kPrefix

    // --- pmf and moments -------------------------------------------------
    double prob_at(const LatticePoint& jump) const;
    // P(||jump|| > r).
    double mass_beyond(double r) const;
    // Truncated second moment of a single coordinate: E[x_i^2; |x_i| <= x].
    // All built-in families are exchangeable across axes, so one function
    // serves every axis.
    double axis_second_moment_below(double x) const;
    // sum over ||x|| < r (strict) of ||x||^2 P(x).
    double vector_second_moment_below(double r) const;
    // sum over ||x|| < r (strict) of x x' P(x), row-major d*d.
    std::vector<double> truncated_matrix(double r) const;
    std::optional<Coord> support_radius() const;  // absent when unbounded

    // Enumerate support points with ||jump|| <= radius (exact probabilities;
    // the zero jump is included when hold > 0).
    void for_support_within(
        Coord radius,
        const std::function<void(const LatticePoint&, double)>& fn) const;

    // --- sampling ---------------------------------------------------------
    // Writes one jump into out[0..d).  Table rows sample by CDF inversion;
    // AxisPowerTail samples the magnitude by exact inverse CDF over the whole
    // (unbounded) support, bracketing the tail analytically -- never by
    // truncating the law.
    void sample_into(SplitMix64& rng, Coord* out) const;
    LatticePoint sample(SplitMix64& rng) const;
};

// Factories (the only supported way to build a law).
JumpLaw make_table_law(std::vector<TableEntry> entries);
// Transition row for an impurity site: same validation as make_table_law
// except the mean may be anything (a site may, say, deterministically kick
// the walk somewhere).  Walk bases must be centered; override rows need not.
JumpLaw make_table_row(std::vector<TableEntry> entries);
JumpLaw make_axis_power_tail_law(int d, double beta, double hold = 0.0,
                                 std::optional<Coord> tail_cutoff = std::nullopt);
// Same family but admitted only as an impurity override: beta may go down to
// just above 1 (the row then has finite moments only of order < beta - 1, and
// is classified HeavyTail when beta <= 2).
JumpLaw make_impurity_tail_law(int d, double beta, double hold = 0.0);
JumpLaw make_product_lazy_law(int d);
// Lazy simple random walk: hold and each of the 2d unit steps get 1/(2d+1).
JumpLaw make_lazy_srw(int d);

// --- norming sequences ----------------------------------------------------

enum class ScalingKind { Diffusive, LType, NumericBType, PerAxis };

// One fixed-point solve of B = sqrt(n * L(B)) starting from sqrt(n), where L
// is the law's truncated per-axis second moment.  Stops when the relative
// change drops below 1e-6 (or after 200 rounds).  May collapse to 0 for tiny
// n where L vanishes below the first support point; callers clamp.
double solve_scaling_fixed_point(const JumpLaw& law, std::uint64_t n);

class ScalingSequence {
  public:
    static ScalingSequence diffusive();
    static ScalingSequence ltype(double c);
    static ScalingSequence numeric(std::shared_ptr<const JumpLaw> law);
    static ScalingSequence per_axis(std::vector<ScalingSequence> axes);

    // B_n.  Asymptotics only speak for large n, and the raw L-type /
    // fixed-point formulas dip below sqrt(n) (or collapse) at small n, which
    // would break monotonicity; so every kind is floored at sqrt(n).  This
    // leaves the Diffusive kind exact and the others unchanged wherever the
    // formula exceeds sqrt(n), and keeps B_n positive and nondecreasing.
    double operator()(std::uint64_t n) const;
    double axis(std::uint64_t n, int ax) const;

    ScalingKind kind() const { return kind_; }
    double c() const { return c_; }
    const std::vector<ScalingSequence>& axes() const { return per_axis_; }

  private:
    ScalingKind kind_ = ScalingKind::Diffusive;
    double c_ = 0.0;
    std::shared_ptr<const JumpLaw> law_;
    std::vector<ScalingSequence> per_axis_;
};

// Classify and build the norming sequence for a base law.  FiniteVariance ->
// Diffusive; LType -> closed form with c read off the tail constant; BType ->
// numeric fixed point, but only after the domain-of-attraction diagnostic
// passes (throws NotInDomain otherwise, as it does for every HeavyTail law).
ScalingSequence compute_scaling(const JumpLaw& law);

// --- diagnostics ------------------------------------------------------------

struct DoaReport {
    std::vector<double> radii;
    // ratio1[r] = R^2 P(||x|| > R) / sum_{||x||<R} ||x||^2 P(x); must decay
    // to 0 for membership in the normal domain of attraction.
    std::vector<double> ratio1;
    // ratio2[p][r]: truncated quadratic forms along a fixed probe pair of
    // directions; must stabilize as R grows.
    std::vector<std::string> pair_labels;
    std::vector<std::vector<double>> ratio2;
    bool condition1_ok = false;
    bool condition2_ok = false;
    bool pass = false;
};

DoaReport domain_of_attraction_check(const JumpLaw& law,
                                     const std::vector<double>& radii);

// True iff the differences of support points generate the full integer
// lattice Z^d (integer lattice reduction on difference vectors).  Note this
// is weaker than aperiodicity in one direction and stronger in the other;
// the two are checked separately.
bool one_lattice_check(const JumpLaw& law);

// sum_{k=1}^{x} k^(-s) and sum_{k=m}^{inf} k^(-s) (s > 1 for the tail),
// computed by prefix tables plus Euler-Maclaurin segments.  Exposed because
// the oracle and tests reuse them as independent series evaluators.
double power_sum_prefix(double s, std::uint64_t x);
double power_sum_tail(double s, double m);

}  // namespace pw
