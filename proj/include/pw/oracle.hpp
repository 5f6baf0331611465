#pragma once

#include <cstdint>
#include <vector>

#include "pw/engine.hpp"
#include "pw/lattice.hpp"

// Exact (to floating point) distributional computations on a dense box:
// n-step marginals by direct convolution, return probabilities, the renewal
// recursion linking returns to first-return survival, and taboo survival by
// absorbing mass.  These are the reference answers the sampling engine is
// tested against, so they share no code path with it.

namespace pw {

// Probability mass on the box [-radius, radius]^d, row-major with the last
// axis fastest.  Mass that steps off the box accumulates in `leaked` and is
// never redistributed; total() stays 1 up to rounding.
struct LatticePmf {
    int d = 0;
    Coord radius = 0;
    std::vector<double> mass;
    double leaked = 0.0;

    std::size_t index_of(const LatticePoint& p) const;  // NotInDomain if off-box
    bool contains(const LatticePoint& p) const;
    double at(const LatticePoint& p) const { return mass[index_of(p)]; }
    double& at(const LatticePoint& p) { return mass[index_of(p)]; }
    double total() const;  // sum of mass + leaked
};

LatticePmf make_point_pmf(int d, const LatticePoint& start, Coord radius);

// One transition of the walk described by spec (site-dependent rows: override
// laws on impurity sites, the base law elsewhere).  Unbounded laws are exact
// here: any jump longer than the box diameter leaves the box from every cell,
// and shorter jumps are enumerated, so the leak per cell is accounted in full.
LatticePmf step(const LatticePmf& pmf, const WalkSpec& spec);

// n-step marginal started from spec.start.  Throws BoxTooSmall if more than
// 1% of the mass has leaked by step n -- pick a larger radius.
LatticePmf n_step_pmf(const WalkSpec& spec, std::uint64_t n, Coord radius);
// Same for a pure walk (no impurities) started at the origin.
LatticePmf n_step_pmf(const JumpLaw& law, std::uint64_t n, Coord radius);

// Mass within max-norm distance r of the origin.
double mass_within(const LatticePmf& pmf, Coord r);

// u(k) = P_0(X_k = 0) for k = 0..n_max, exact: the box radius grows with
// n_max * support_radius, so nothing leaks.  Bounded-support laws only.
std::vector<double> return_probabilities(const JumpLaw& law, std::uint64_t n_max);

// d=2 product-lazy closed form u(n) = (C(2n,n)/4^n)^2, evaluated by the
// stable ratio recurrence.  product_lazy_return_sequence returns u(0..n_max).
double product_lazy_return(std::uint64_t n);
std::vector<double> product_lazy_return_sequence(std::uint64_t n_max);

// First-return survival R(k) = P_0(first return to 0 is later than k) from
// return probabilities via the last-exit decomposition
//   sum_{k=0..n} u(k) R(n-k) = 1.
// Validates u(0) = 1 and that the computed R stays within [0,1] (1e-9 slack)
// and nonincreasing; throws NumericUnderflow otherwise (e.g. for a u that is
// not a return-probability sequence).
std::vector<double> survival_by_renewal(const std::vector<double>& u);

// C_n = sum_{k<=n} u(k) for n = 0..len(u)-1 (expected visits to the origin).
std::vector<double> c_n_partial_sums(const std::vector<double>& u);

// Taboo survival P(first visit to B at a step >= 1 is later than k) for
// k = 0..n, by absorbing the mass that enters B after each transition.  Mass
// already on B at step 0 is not absorbed (first-visit times count from 1).
// Leaked mass never reaches B and so counts as surviving; the 1% leak gate
// applies as in n_step_pmf.
std::vector<double> taboo_survival_dp(const WalkSpec& spec,
                                      const std::vector<LatticePoint>& taboo,
                                      std::uint64_t n, Coord radius);

// Extends exact return probabilities u(0..m) to n_max with the local-limit
// tail g / k^{d/2} for k > m, recording where the splice happened.  Useful
// for pushing the renewal recursion past the horizon where exact convolution
// is affordable; the error inherits the o(n^{-d/2}) term dropped at the
// splice point.
struct SplicedReturns {
    std::vector<double> u;
    std::uint64_t splice = 0;  // last exact index
};
SplicedReturns extend_returns_asymptotic(const std::vector<double>& u_exact,
                                         std::uint64_t n_max, double g, int d);

}  // namespace pw
