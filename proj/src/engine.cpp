#include "pw/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "pw/common.hpp"
#include "pw/rng.hpp"

namespace pw {

ImpuritySet::ImpuritySet(std::vector<ImpurityOverride> rows, int d) {
    if (d < 2) throw DimensionMismatch("lattice dimension must be >= 2");
    std::set<std::vector<Coord>> seen;
    for (const auto& row : rows) {
        if (row.site.dim() != d)
            throw DimensionMismatch("impurity site dimension does not match the walk");
        if (row.law.d != d)
            throw DimensionMismatch("impurity law dimension does not match the walk");
        if (!seen.insert(row.site.c).second)
            throw InvalidSpec("duplicate impurity site");
    }
    std::sort(rows.begin(), rows.end(),
              [](const ImpurityOverride& a, const ImpurityOverride& b) {
                  return a.site < b.site;
              });
    rows_ = std::move(rows);
    cube_radius_ = 0;
    for (const auto& row : rows_) cube_radius_ = std::max(cube_radius_, row.site.max_norm());
}

const JumpLaw* ImpuritySet::row_at(const Coord* c, int d) const {
    for (const auto& row : rows_) {
        const Coord* sc = row.site.c.data();
        bool match = true;
        for (int i = 0; i < d; ++i)
            if (sc[i] != c[i]) {
                match = false;
                break;
            }
        if (match) return &row.law;
    }
    return nullptr;
}

WalkSpec make_walk_spec(JumpLaw base, ImpuritySet impurities, LatticePoint start,
                        std::uint64_t horizon, std::uint64_t seed, RecordMode record) {
    if (start.dim() != base.d)
        throw DimensionMismatch("start point dimension does not match the base law");
    if (!impurities.empty() && !impurities.rows().front().site.c.empty() &&
        impurities.rows().front().site.dim() != base.d)
        throw DimensionMismatch("impurity dimension does not match the base law");
    if (base.law_class == LawClass::HeavyTail)
        throw InvalidSpec("heavy-tail laws are admissible as impurity overrides only");
    if (base.family == LawFamily::Table) {
        for (int i = 0; i < base.d; ++i) {
            KahanSum mean;
            for (const auto& e : base.entries)
                mean.add(e.prob * static_cast<double>(e.jump.c[static_cast<std::size_t>(i)]));
            if (std::abs(mean.value()) > 1e-12)
                throw NonZeroMean("walk base law must be centered");
        }
    }
    if (record == RecordMode::FullPath && horizon > 10'000'000ULL)
        throw InvalidSpec("full-path recording caps the horizon at 10^7 steps");
    WalkSpec spec;
    spec.base = std::move(base);
    spec.impurities = std::move(impurities);
    spec.start = std::move(start);
    spec.horizon = horizon;
    spec.seed = seed;
    spec.record = record;
    return spec;
}

namespace {

void validate_checkpoints(const std::vector<std::uint64_t>& cps, std::uint64_t horizon) {
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (cps[i] > horizon)
            throw InvalidSpec("checkpoint step beyond the horizon");
        if (i > 0 && cps[i] <= cps[i - 1])
            throw InvalidSpec("checkpoint steps must be strictly increasing");
    }
}

inline Coord abs_max(const Coord* c, int d) {
    Coord m = 0;
    for (int i = 0; i < d; ++i) {
        Coord v = c[i] < 0 ? -c[i] : c[i];
        if (v > m) m = v;
    }
    return m;
}

}  // namespace

PathSummary simulate_trajectory(const WalkSpec& spec, std::uint64_t trajectory,
                                const std::vector<std::uint64_t>& checkpoint_steps) {
    validate_checkpoints(checkpoint_steps, spec.horizon);
    const int d = spec.d();
    const Coord N = spec.impurities.cube_radius();
    const std::uint64_t horizon = spec.horizon;
    const bool keep_walking = spec.record != RecordMode::EndpointOnly;
    const bool record_path = spec.record == RecordMode::FullPath;
    const std::uint64_t extra_cap = std::max<std::uint64_t>(10000, horizon);

    SplitMix64 rng = make_stream(spec.seed, trajectory, StreamRole::Walk);
    std::vector<Coord> pos = spec.start.c;
    std::vector<Coord> jump(static_cast<std::size_t>(d), 0);

    PathSummary s;
    s.horizon = horizon;
    if (record_path) s.path.reserve(static_cast<std::size_t>(horizon) + 1);

    bool start_inside = false;
    bool prev_inside = false;
    bool window_open = true;  // still before the (horizon+1)-th outside step
    std::uint64_t zeros_seen = 0;
    std::size_t cp_next = 0;

    for (std::uint64_t i = 0;; ++i) {
        const Coord anorm = abs_max(pos.data(), d);
        const bool inside = anorm <= N;
        const bool entrance = inside && (i == 0 || !prev_inside);
        if (i == 0) start_inside = inside;

        if (i <= horizon) {
            if (inside) {
                ++s.rho;
                if (entrance) ++s.nu;
            } else {
                ++s.outside_steps;
            }
            if (anorm > s.max_excursion) s.max_excursion = anorm;
            if (i >= 1) {
                if (start_inside && !inside && !s.tau) s.tau = i;
                if (inside && !s.first_hit_cube) s.first_hit_cube = i;
                if (anorm == 0 && !s.first_return_origin) s.first_return_origin = i;
            }
            while (cp_next < checkpoint_steps.size() && checkpoint_steps[cp_next] == i) {
                LatticePoint p;
                p.c = pos;
                s.checkpoints.push_back(std::move(p));
                ++cp_next;
            }
            if (record_path) {
                LatticePoint p;
                p.c = pos;
                s.path.push_back(std::move(p));
            }
            if (i == horizon) {
                s.endpoint.c = pos;
            }
        }

        if (window_open) {
            if (inside) {
                if (entrance) ++s.nu_bar;
            } else if (++zeros_seen == horizon + 1) {
                window_open = false;
            }
        }
        prev_inside = inside;

        bool more;
        if (i < horizon) {
            more = true;
        } else if (!keep_walking || !window_open) {
            more = false;
        } else {
            more = (i - horizon) < extra_cap;
        }
        if (!more) break;

        const JumpLaw* row = &spec.base;
        if (inside && !spec.impurities.empty()) {
            const JumpLaw* ov = spec.impurities.row_at(pos.data(), d);
            if (ov != nullptr) row = ov;
        }
        row->sample_into(rng, jump.data());
        for (int k = 0; k < d; ++k) pos[static_cast<std::size_t>(k)] += jump[static_cast<std::size_t>(k)];
    }

    s.nu_bar_complete = !window_open;
    return s;
}

CoupledSummary simulate_coupled_trajectory(const WalkSpec& spec, std::uint64_t trajectory,
                                           const std::vector<std::uint64_t>& checkpoint_steps) {
    validate_checkpoints(checkpoint_steps, spec.horizon);
    const int d = spec.d();
    const Coord N = spec.impurities.cube_radius();
    const bool couple_active = !spec.impurities.empty();
    const std::uint64_t horizon = spec.horizon;

    SplitMix64 rng_x = make_stream(spec.seed, trajectory, StreamRole::Walk);
    SplitMix64 rng_z = make_stream(spec.seed, trajectory, StreamRole::CoupledBase);
    std::vector<Coord> x = spec.start.c;
    std::vector<Coord> z = spec.start.c;
    std::vector<Coord> jump(static_cast<std::size_t>(d), 0);

    CoupledSummary s;
    s.horizon = horizon;
    std::size_t cp_next = 0;

    for (std::uint64_t i = 0;; ++i) {
        Coord dist = 0;
        for (int k = 0; k < d; ++k) {
            Coord v = x[static_cast<std::size_t>(k)] - z[static_cast<std::size_t>(k)];
            if (v < 0) v = -v;
            if (v > dist) dist = v;
        }
        if (dist > s.sup_distance) s.sup_distance = dist;
        const Coord anorm = abs_max(x.data(), d);
        const bool inside = anorm <= N;
        if (inside) ++s.rho;
        while (cp_next < checkpoint_steps.size() && checkpoint_steps[cp_next] == i) {
            LatticePoint px, pz;
            px.c = x;
            pz.c = z;
            s.checkpoints.emplace_back(std::move(px), std::move(pz));
            ++cp_next;
        }
        if (i == horizon) {
            s.x_endpoint.c = x;
            s.z_endpoint.c = z;
            break;
        }

        const JumpLaw* row = &spec.base;
        if (inside && couple_active) {
            const JumpLaw* ov = spec.impurities.row_at(x.data(), d);
            if (ov != nullptr) row = ov;
        }
        row->sample_into(rng_x, jump.data());
        if (inside) s.impurity_jump_norms.push_back(static_cast<double>(abs_max(jump.data(), d)));
        if (inside && couple_active) {
            // X moves by its own row; Z takes an independent base step.
            for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(k)] += jump[static_cast<std::size_t>(k)];
            spec.base.sample_into(rng_z, jump.data());
            for (int k = 0; k < d; ++k) z[static_cast<std::size_t>(k)] += jump[static_cast<std::size_t>(k)];
        } else {
            for (int k = 0; k < d; ++k) {
                x[static_cast<std::size_t>(k)] += jump[static_cast<std::size_t>(k)];
                z[static_cast<std::size_t>(k)] += jump[static_cast<std::size_t>(k)];
            }
        }
    }
    return s;
}

// --- standing assumptions ----------------------------------------------------

namespace {

// gcd of the lengths (up to 6) of jump cycles through the origin, on support
// atoms of norm <= 6.  0 means no cycle that short.  Conservative for laws
// whose only short cycles use longer jumps; the families built here always
// have unit jumps, so the truncation never bites.
int cycle_gcd(const JumpLaw& law) {
    constexpr int kDepth = 6;
    constexpr Coord kJumpCap = 6;
    std::vector<LatticePoint> jumps;
    law.for_support_within(kJumpCap, [&](const LatticePoint& j, double) {
        if (j.max_norm() > 0) jumps.push_back(j);
    });
    if (jumps.empty()) return 0;
    std::set<std::vector<Coord>> frontier;
    frontier.insert(LatticePoint::zero(law.d).c);
    int g = 0;
    for (int k = 1; k <= kDepth; ++k) {
        std::set<std::vector<Coord>> next;
        const Coord prune = kJumpCap * static_cast<Coord>(kDepth - k);
        for (const auto& v : frontier) {
            for (const auto& j : jumps) {
                std::vector<Coord> w = v;
                Coord nrm = 0;
                for (std::size_t a = 0; a < w.size(); ++a) {
                    w[a] += j.c[a];
                    Coord t = w[a] < 0 ? -w[a] : w[a];
                    if (t > nrm) nrm = t;
                }
                // A point farther than the remaining steps can carry it back
                // to the origin is dead weight.
                if (nrm <= prune) next.insert(std::move(w));
            }
        }
        if (next.count(LatticePoint::zero(law.d).c) != 0) g = std::gcd(g, k);
        if (g == 1) return 1;
        frontier = std::move(next);
    }
    return g;
}

struct BoxGraph {
    int d;
    Coord radius;
    std::size_t cells;
    std::vector<std::vector<std::uint32_t>> fwd;  // in-box adjacency
    std::vector<bool> from_free;  // one-step reachable from the exterior
    std::vector<bool> to_free;    // has a jump leaving the box
};

std::size_t box_index(const std::vector<Coord>& c, Coord radius) {
    std::size_t side = static_cast<std::size_t>(2 * radius + 1);
    std::size_t idx = 0;
    for (Coord v : c) idx = idx * side + static_cast<std::size_t>(v + radius);
    return idx;
}

BoxGraph build_box_graph(const WalkSpec& spec, Coord radius) {
    const int d = spec.d();
    std::size_t cells = 1;
    for (int i = 0; i < d; ++i) {
        cells *= static_cast<std::size_t>(2 * radius + 1);
        if (cells > 2'000'000)
            throw InvalidSpec("assumption-check box has too many sites; shrink the impurity layout");
    }
    BoxGraph gb;
    gb.d = d;
    gb.radius = radius;
    gb.cells = cells;
    gb.fwd.assign(cells, {});
    gb.from_free.assign(cells, false);
    gb.to_free.assign(cells, false);

    const Coord diameter = 2 * radius;
    // A jump longer than the box diameter exits the box from every cell and
    // can land on every cell from outside, so it only matters as an exterior
    // edge; the enumeration below covers the rest exactly.
    const bool base_long =
        spec.base.mass_beyond(static_cast<double>(diameter)) > 0.0;
    std::vector<LatticePoint> base_jumps;
    spec.base.for_support_within(diameter, [&](const LatticePoint& j, double) {
        base_jumps.push_back(j);
    });

    std::vector<Coord> cur(static_cast<std::size_t>(d), -radius);
    for (std::size_t idx = 0; idx < cells; ++idx) {
        bool row_long = base_long;
        const std::vector<LatticePoint>* jumps = &base_jumps;
        std::vector<LatticePoint> row_jumps;
        if (!spec.impurities.empty() && spec.impurities.inside_cube(cur.data(), d)) {
            const JumpLaw* ov = spec.impurities.row_at(cur.data(), d);
            if (ov != nullptr) {
                row_long = ov->mass_beyond(static_cast<double>(diameter)) > 0.0;
                ov->for_support_within(diameter, [&](const LatticePoint& j, double) {
                    row_jumps.push_back(j);
                });
                jumps = &row_jumps;
            }
        }
        if (row_long) gb.to_free[idx] = true;
        for (const auto& j : *jumps) {
            std::vector<Coord> dst = cur;
            bool in = true;
            for (int i = 0; i < d; ++i) {
                dst[static_cast<std::size_t>(i)] += j.c[static_cast<std::size_t>(i)];
                if (dst[static_cast<std::size_t>(i)] < -radius ||
                    dst[static_cast<std::size_t>(i)] > radius)
                    in = false;
            }
            if (in)
                gb.fwd[idx].push_back(static_cast<std::uint32_t>(box_index(dst, radius)));
            else
                gb.to_free[idx] = true;
        }
        // One base step from the exterior can land on this cell iff some base
        // jump starts outside the box (exterior sites always use the base law).
        if (base_long) {
            gb.from_free[idx] = true;
        } else {
            for (const auto& j : base_jumps) {
                bool src_outside = false;
                for (int i = 0; i < d; ++i) {
                    Coord src = cur[static_cast<std::size_t>(i)] - j.c[static_cast<std::size_t>(i)];
                    if (src < -radius || src > radius) src_outside = true;
                }
                if (src_outside) {
                    gb.from_free[idx] = true;
                    break;
                }
            }
        }
        for (int i = d - 1; i >= 0; --i) {
            if (++cur[static_cast<std::size_t>(i)] <= radius) break;
            cur[static_cast<std::size_t>(i)] = -radius;
        }
    }
    return gb;
}

// Sites in the same strongly connected component as the exterior: reachable
// from it and able to reach it.
std::pair<std::vector<bool>, std::vector<bool>> free_reachability(const BoxGraph& gb) {
    std::vector<bool> fwd_reach(gb.cells, false);
    std::vector<std::uint32_t> stack;
    for (std::size_t i = 0; i < gb.cells; ++i)
        if (gb.from_free[i]) {
            fwd_reach[i] = true;
            stack.push_back(static_cast<std::uint32_t>(i));
        }
    while (!stack.empty()) {
        std::uint32_t v = stack.back();
        stack.pop_back();
        for (std::uint32_t w : gb.fwd[v])
            if (!fwd_reach[w]) {
                fwd_reach[w] = true;
                stack.push_back(w);
            }
    }
    std::vector<std::vector<std::uint32_t>> rev(gb.cells);
    for (std::size_t v = 0; v < gb.cells; ++v)
        for (std::uint32_t w : gb.fwd[v]) rev[w].push_back(static_cast<std::uint32_t>(v));
    std::vector<bool> bwd_reach(gb.cells, false);
    for (std::size_t i = 0; i < gb.cells; ++i)
        if (gb.to_free[i]) {
            bwd_reach[i] = true;
            stack.push_back(static_cast<std::uint32_t>(i));
        }
    while (!stack.empty()) {
        std::uint32_t v = stack.back();
        stack.pop_back();
        for (std::uint32_t w : rev[v])
            if (!bwd_reach[w]) {
                bwd_reach[w] = true;
                stack.push_back(w);
            }
    }
    return {std::move(fwd_reach), std::move(bwd_reach)};
}

}  // namespace

AssumptionReport check_assumptions(const WalkSpec& spec) {
    AssumptionReport rep;
    rep.base_one_lattice = one_lattice_check(spec.base);
    rep.aperiodic = spec.base.hold > 0.0 || cycle_gcd(spec.base) == 1;

    rep.epsilon_sup = std::numeric_limits<double>::infinity();
    for (const auto& row : spec.impurities.rows()) {
        if (row.law.family == LawFamily::AxisPowerTail && !row.law.tail_cutoff)
            rep.epsilon_sup = std::min(rep.epsilon_sup, row.law.beta - 1.0);
    }
    rep.epsilon_ok = rep.epsilon_sup > 0.0;

    if (!rep.base_one_lattice) {
        rep.scc = SccVerdict::Indeterminate;
        rep.scc_note =
            "base-law support differences do not generate the full lattice; "
            "collapsing the exterior to one vertex is not justified";
    } else {
        const Coord N = spec.impurities.cube_radius();
        Coord reach = 0;
        for (const auto& row : spec.impurities.rows()) {
            std::optional<Coord> sr = row.law.support_radius();
            reach = std::max(reach, sr ? *sr : N + 2);
        }
        const Coord radius = N + reach;
        BoxGraph gb = build_box_graph(spec, radius);
        auto [fwd, bwd] = free_reachability(gb);
        auto verdict_for = [&](const LatticePoint& p) {
            if (p.max_norm() > radius) return true;  // exterior site, one blob
            std::size_t idx = box_index(p.c, radius);
            return fwd[idx] && bwd[idx];
        };
        bool origin_ok = verdict_for(LatticePoint::zero(spec.d()));
        bool start_ok = verdict_for(spec.start);
        if (origin_ok && start_ok) {
            rep.scc = SccVerdict::Pass;
        } else {
            rep.scc = SccVerdict::Fail;
            rep.scc_note = !origin_ok
                               ? "origin and free exterior are not mutually reachable"
                               : "start and free exterior are not mutually reachable";
        }
    }

    rep.pass = rep.scc == SccVerdict::Pass && rep.epsilon_ok && rep.aperiodic;
    return rep;
}

}  // namespace pw
