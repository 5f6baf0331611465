#include "pw/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pw/common.hpp"

namespace pw {

namespace {

constexpr double kLeakGate = 0.01;     // BoxTooSmall beyond this
constexpr double kSurvivalSlack = 1e-9;

std::size_t side_length(Coord radius) { return static_cast<std::size_t>(2 * radius + 1); }

std::size_t cell_count(int d, Coord radius) {
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= side_length(radius);
    return n;
}

// Support atoms of one law, flattened (atom i occupies jumps[i*d .. i*d+d)),
// truncated at the box diameter: a jump longer than 2R leaves the box from
// every cell, so truncation costs no accuracy -- the missing mass is exact
// leak.  The zero jump is included when the law holds in place.
struct SupportList {
    std::vector<Coord> jumps;
    std::vector<double> probs;
    std::size_t size() const { return probs.size(); }
};

SupportList collect_support(const JumpLaw& law, Coord diameter) {
    SupportList s;
    law.for_support_within(diameter, [&](const LatticePoint& j, double p) {
        s.jumps.insert(s.jumps.end(), j.c.begin(), j.c.end());
        s.probs.push_back(p);
    });
    return s;
}

}  // namespace

std::size_t LatticePmf::index_of(const LatticePoint& p) const {
    if (p.dim() != d) throw DimensionMismatch("point dimension does not match pmf");
    std::size_t idx = 0;
    for (int i = 0; i < d; ++i) {
        Coord c = p.c[static_cast<std::size_t>(i)];
        if (c < -radius || c > radius) throw NotInDomain("point outside the pmf box");
        idx = idx * side_length(radius) + static_cast<std::size_t>(c + radius);
    }
    return idx;
}

bool LatticePmf::contains(const LatticePoint& p) const {
    if (p.dim() != d) return false;
    for (Coord c : p.c)
        if (c < -radius || c > radius) return false;
    return true;
}

double LatticePmf::total() const {
    KahanSum s;
    for (double m : mass) s.add(m);
    s.add(leaked);
    return s.value();
}

LatticePmf make_point_pmf(int d, const LatticePoint& start, Coord radius) {
    if (d < 2) throw DimensionMismatch("lattice dimension must be >= 2");
    if (radius < 0) throw InvalidSpec("pmf box radius must be nonnegative");
    LatticePmf pmf;
    pmf.d = d;
    pmf.radius = radius;
    pmf.mass.assign(cell_count(d, radius), 0.0);
    pmf.at(start) = 1.0;
    return pmf;
}

namespace {

LatticePmf step_rows(const LatticePmf& pmf, const JumpLaw& base, const ImpuritySet* imps) {
    if (base.d != pmf.d) throw DimensionMismatch("law dimension does not match pmf");
    const int d = pmf.d;
    const Coord R = pmf.radius;
    const std::size_t side = side_length(R);

    const Coord diameter = 2 * R;
    SupportList base_support = collect_support(base, diameter);
    std::vector<SupportList> row_support;
    if (imps != nullptr) {
        row_support.reserve(imps->rows().size());
        for (const auto& row : imps->rows()) row_support.push_back(collect_support(row.law, diameter));
    }

    LatticePmf out;
    out.d = d;
    out.radius = R;
    out.mass.assign(pmf.mass.size(), 0.0);
    KahanSum leak;
    leak.add(pmf.leaked);

    std::vector<Coord> cur(static_cast<std::size_t>(d), -R);
    const std::size_t cells = pmf.mass.size();
    for (std::size_t idx = 0; idx < cells; ++idx) {
        double m = pmf.mass[idx];
        if (m != 0.0) {
            const SupportList* sup = &base_support;
            if (imps != nullptr && imps->inside_cube(cur.data(), d)) {
                const auto& rows = imps->rows();
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const auto& sc = rows[r].site.c;
                    bool match = true;
                    for (int i = 0; i < d; ++i)
                        if (sc[static_cast<std::size_t>(i)] != cur[static_cast<std::size_t>(i)]) {
                            match = false;
                            break;
                        }
                    if (match) {
                        sup = &row_support[r];
                        break;
                    }
                }
            }
            double in_sum = 0.0;
            const std::size_t atoms = sup->size();
            for (std::size_t a = 0; a < atoms; ++a) {
                const Coord* j = sup->jumps.data() + a * static_cast<std::size_t>(d);
                bool inside = true;
                std::size_t didx = 0;
                for (int i = 0; i < d; ++i) {
                    Coord c = cur[static_cast<std::size_t>(i)] + j[i];
                    if (c < -R || c > R) {
                        inside = false;
                        break;
                    }
                    didx = didx * side + static_cast<std::size_t>(c + R);
                }
                if (inside) {
                    double p = sup->probs[a];
                    out.mass[didx] += m * p;
                    in_sum += p;
                }
            }
            if (in_sum < 1.0) leak.add(m * (1.0 - in_sum));
        }
        // odometer, last axis fastest
        for (int i = d - 1; i >= 0; --i) {
            if (++cur[static_cast<std::size_t>(i)] <= R) break;
            cur[static_cast<std::size_t>(i)] = -R;
        }
    }
    out.leaked = leak.value();
    return out;
}

}  // namespace

LatticePmf step(const LatticePmf& pmf, const WalkSpec& spec) {
    return step_rows(pmf, spec.base, &spec.impurities);
}

LatticePmf n_step_pmf(const WalkSpec& spec, std::uint64_t n, Coord radius) {
    LatticePmf pmf = make_point_pmf(spec.d(), spec.start, radius);
    for (std::uint64_t k = 0; k < n; ++k) pmf = step_rows(pmf, spec.base, &spec.impurities);
    if (pmf.leaked > kLeakGate)
        throw BoxTooSmall("more than 1% of the mass left the pmf box");
    return pmf;
}

LatticePmf n_step_pmf(const JumpLaw& law, std::uint64_t n, Coord radius) {
    LatticePmf pmf = make_point_pmf(law.d, LatticePoint::zero(law.d), radius);
    for (std::uint64_t k = 0; k < n; ++k) pmf = step_rows(pmf, law, nullptr);
    if (pmf.leaked > kLeakGate)
        throw BoxTooSmall("more than 1% of the mass left the pmf box");
    return pmf;
}

double mass_within(const LatticePmf& pmf, Coord r) {
    if (r < 0) return 0.0;
    if (r >= pmf.radius) {
        KahanSum s;
        for (double m : pmf.mass) s.add(m);
        return s.value();
    }
    const int d = pmf.d;
    KahanSum s;
    std::vector<Coord> cur(static_cast<std::size_t>(d), -r);
    for (;;) {
        LatticePoint p;
        p.c = cur;
        s.add(pmf.mass[pmf.index_of(p)]);
        int i = d - 1;
        for (; i >= 0; --i) {
            if (++cur[static_cast<std::size_t>(i)] <= r) break;
            cur[static_cast<std::size_t>(i)] = -r;
        }
        if (i < 0) break;
    }
    return s.value();
}

std::vector<double> return_probabilities(const JumpLaw& law, std::uint64_t n_max) {
    std::optional<Coord> sr = law.support_radius();
    if (!sr) throw InvalidSpec("return probabilities need a bounded-support law");
    Coord radius = *sr * static_cast<Coord>(n_max);
    if (radius == 0) radius = 1;
    LatticePmf pmf = make_point_pmf(law.d, LatticePoint::zero(law.d), radius);
    const LatticePoint origin = LatticePoint::zero(law.d);
    std::vector<double> u;
    u.reserve(static_cast<std::size_t>(n_max) + 1);
    u.push_back(1.0);
    for (std::uint64_t k = 1; k <= n_max; ++k) {
        pmf = step_rows(pmf, law, nullptr);
        u.push_back(pmf.at(origin));
    }
    return u;
}

double product_lazy_return(std::uint64_t n) {
    // a_n = C(2n, n) / 4^n via a_n = a_{n-1} (2n-1) / (2n); u = a_n^2 in d=2.
    double a = 1.0;
    for (std::uint64_t k = 1; k <= n; ++k)
        a *= (2.0 * static_cast<double>(k) - 1.0) / (2.0 * static_cast<double>(k));
    return a * a;
}

std::vector<double> product_lazy_return_sequence(std::uint64_t n_max) {
    std::vector<double> u;
    u.reserve(static_cast<std::size_t>(n_max) + 1);
    double a = 1.0;
    u.push_back(1.0);
    for (std::uint64_t k = 1; k <= n_max; ++k) {
        a *= (2.0 * static_cast<double>(k) - 1.0) / (2.0 * static_cast<double>(k));
        u.push_back(a * a);
    }
    return u;
}

std::vector<double> survival_by_renewal(const std::vector<double>& u) {
    if (u.empty() || std::abs(u.front() - 1.0) > 1e-12)
        throw NumericUnderflow("return probabilities must start with u(0) = 1");
    for (double v : u)
        if (!(v >= 0.0) || v > 1.0 + 1e-12)
            throw NumericUnderflow("return probabilities must lie in [0, 1]");
    const std::size_t n = u.size();
    std::vector<double> r(n);
    r[0] = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        KahanSum s;
        for (std::size_t j = 1; j <= k; ++j) s.add(u[j] * r[k - j]);
        double rk = 1.0 - s.value();
        if (rk < -kSurvivalSlack || rk > r[k - 1] + kSurvivalSlack)
            throw NumericUnderflow(
                "renewal recursion left [0, 1] or lost monotonicity; the input is "
                "not a return-probability sequence (or is numerically exhausted)");
        r[k] = rk;
    }
    return r;
}

std::vector<double> c_n_partial_sums(const std::vector<double>& u) {
    std::vector<double> c;
    c.reserve(u.size());
    KahanSum s;
    for (double v : u) {
        s.add(v);
        c.push_back(s.value());
    }
    return c;
}

std::vector<double> taboo_survival_dp(const WalkSpec& spec,
                                      const std::vector<LatticePoint>& taboo,
                                      std::uint64_t n, Coord radius) {
    if (taboo.empty()) throw InvalidSpec("taboo set must not be empty");
    LatticePmf pmf = make_point_pmf(spec.d(), spec.start, radius);
    std::vector<std::size_t> cells;
    cells.reserve(taboo.size());
    for (const auto& b : taboo) cells.push_back(pmf.index_of(b));  // validates the box

    std::vector<double> survive;
    survive.reserve(static_cast<std::size_t>(n) + 1);
    survive.push_back(1.0);
    KahanSum absorbed;
    for (std::uint64_t k = 1; k <= n; ++k) {
        pmf = step_rows(pmf, spec.base, &spec.impurities);
        for (std::size_t idx : cells) {
            absorbed.add(pmf.mass[idx]);
            pmf.mass[idx] = 0.0;
        }
        survive.push_back(1.0 - absorbed.value());
    }
    if (pmf.leaked > kLeakGate)
        throw BoxTooSmall("more than 1% of the mass left the taboo box");
    return survive;
}

SplicedReturns extend_returns_asymptotic(const std::vector<double>& u_exact,
                                         std::uint64_t n_max, double g, int d) {
    if (u_exact.empty() || std::abs(u_exact.front() - 1.0) > 1e-12)
        throw InvalidSpec("exact prefix must start with u(0) = 1");
    if (!(g > 0.0)) throw InvalidSpec("local-limit constant must be positive");
    if (d < 2) throw DimensionMismatch("lattice dimension must be >= 2");
    if (n_max + 1 < u_exact.size())
        throw InvalidSpec("extension horizon is shorter than the exact prefix");
    SplicedReturns out;
    out.u = u_exact;
    out.u.reserve(static_cast<std::size_t>(n_max) + 1);
    out.splice = u_exact.size() - 1;
    const double half_d = static_cast<double>(d) / 2.0;
    for (std::uint64_t k = u_exact.size(); k <= n_max; ++k)
        out.u.push_back(g / std::pow(static_cast<double>(k), half_d));
    return out;
}

}  // namespace pw
