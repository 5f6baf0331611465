#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pw/lattice.hpp"

// Walk simulation: plain walks, walks with impurity overrides, the coupled
// pair used to compare a perturbed walk against its unperturbed shadow, and
// the standing-assumption checker.
//
// Occupation statistics are relative to the cube K_N = [-N-1/2, N+1/2]^d
// where N is the smallest integer with every impurity site inside; with no
// impurities N = 0, so the cube degenerates to the origin (and occupation
// statistics still count visits to it).

namespace pw {

struct ImpurityOverride {
    LatticePoint site;
    JumpLaw law;  // law of the jump taken from this site
};

class ImpuritySet {
  public:
    ImpuritySet() = default;
    // d is the lattice dimension the sites must live in.
    ImpuritySet(std::vector<ImpurityOverride> rows, int d);

    bool empty() const { return rows_.empty(); }
    std::size_t size() const { return rows_.size(); }
    Coord cube_radius() const { return cube_radius_; }  // N
    bool inside_cube(const Coord* c, int d) const {
        for (int i = 0; i < d; ++i) {
            Coord v = c[i] < 0 ? -c[i] : c[i];
            if (v > cube_radius_) return false;
        }
        return true;
    }
    bool inside_cube(const LatticePoint& p) const {
        return inside_cube(p.c.data(), p.dim());
    }
    const JumpLaw* row_at(const Coord* c, int d) const;
    const JumpLaw* row_at(const LatticePoint& p) const {
        return row_at(p.c.data(), p.dim());
    }
    const std::vector<ImpurityOverride>& rows() const { return rows_; }

  private:
    std::vector<ImpurityOverride> rows_;  // sorted by site
    Coord cube_radius_ = 0;
};

enum class RecordMode { EndpointOnly, Summary, FullPath };

struct WalkSpec {
    JumpLaw base;
    ImpuritySet impurities;
    LatticePoint start;
    std::uint64_t horizon = 0;
    std::uint64_t seed = 0;
    RecordMode record = RecordMode::Summary;

    int d() const { return base.d; }
};

// Validates dimensions and that the base law is usable as one (heavy-tail
// rows are override-only).  FullPath caps the horizon at 10^7 to bound
// memory; the other modes stream.
WalkSpec make_walk_spec(JumpLaw base, ImpuritySet impurities, LatticePoint start,
                        std::uint64_t horizon, std::uint64_t seed,
                        RecordMode record = RecordMode::Summary);

struct PathSummary {
    std::uint64_t horizon = 0;
    LatticePoint endpoint;        // X_n
    std::uint64_t rho = 0;        // #{0 <= i <= n : X_i in K_N}
    std::uint64_t nu = 0;         // inside-blocks started by time n
    std::uint64_t outside_steps = 0;  // #{0 <= i <= n : X_i not in K_N}
    // Inside-blocks started before the (n+1)-th step spent outside K_N.  The
    // window usually extends past the horizon, so Summary mode keeps walking
    // (statistics above stay frozen at the horizon) until that step is seen
    // or the continuation budget max(10^4, horizon) runs out; complete tells
    // which.  EndpointOnly never continues.
    std::uint64_t nu_bar = 0;
    bool nu_bar_complete = false;
    Coord max_excursion = 0;      // max over i <= n of ||X_i||
    std::optional<std::uint64_t> tau;                 // first exit from K_N (start inside only)
    std::optional<std::uint64_t> first_hit_cube;      // min k >= 1 with X_k in K_N
    std::optional<std::uint64_t> first_return_origin; // min k >= 1 with X_k = 0
    std::vector<LatticePoint> checkpoints;  // positions at the requested steps
    std::vector<LatticePoint> path;         // X_0..X_n, FullPath mode only
};

struct CoupledSummary {
    std::uint64_t horizon = 0;
    LatticePoint x_endpoint;
    LatticePoint z_endpoint;
    Coord sup_distance = 0;  // max over i <= n of ||X_i - Z_i||
    std::uint64_t rho = 0;
    // ||X_{i+1} - X_i|| for every i < n with X_i in K_N, in step order.
    std::vector<double> impurity_jump_norms;
    std::vector<std::pair<LatticePoint, LatticePoint>> checkpoints;  // (X, Z)
};

// One trajectory.  The random stream is derived from (spec.seed, trajectory),
// so a batch is reproducible trajectory by trajectory regardless of how the
// batch is scheduled.  checkpoint_steps must be sorted ascending and within
// the horizon.
PathSummary simulate_trajectory(const WalkSpec& spec, std::uint64_t trajectory,
                                const std::vector<std::uint64_t>& checkpoint_steps = {});
inline PathSummary simulate(const WalkSpec& spec) { return simulate_trajectory(spec, 0); }

// The coupled pair (X, Z): Z starts where X starts and copies X's increment
// whenever X is outside K_N; while X is inside, Z takes an independent
// base-law increment from a dedicated substream (so enabling the coupling
// never changes X's law).  With no impurities the walks are identical by
// definition -- the cube triggers no redraws then.
CoupledSummary simulate_coupled_trajectory(
    const WalkSpec& spec, std::uint64_t trajectory,
    const std::vector<std::uint64_t>& checkpoint_steps = {});
inline CoupledSummary simulate_coupled(const WalkSpec& spec) {
    return simulate_coupled_trajectory(spec, 0);
}

// --- standing assumptions ---------------------------------------------------

enum class SccVerdict { Pass, Fail, Indeterminate };

struct AssumptionReport {
    SccVerdict scc = SccVerdict::Indeterminate;
    std::string scc_note;
    bool epsilon_ok = false;   // every override admits a positive moment order
    double epsilon_sup = 0.0;  // shared sup of admissible orders (inf for bounded rows)
    bool aperiodic = false;    // base law: hold > 0 or unit cycle gcd
    bool base_one_lattice = false;
    bool pass = false;         // scc == Pass && epsilon_ok && aperiodic
};

// (a) Reachability between the start, the origin, and the unbounded exterior
// on a finite box K_{N+r} with the exterior collapsed to one super-vertex
// (sound when the base law is a 1-lattice; otherwise "indeterminate");
// (b) existence of a shared positive moment order for the override rows,
// decided analytically per family; (c) aperiodicity of the base law via
// hold > 0 or the gcd of return-cycle lengths up to depth 6.
AssumptionReport check_assumptions(const WalkSpec& spec);

// --- batches ----------------------------------------------------------------

inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {

template <typename Summary, typename State, typename Simulate>
State batch_impl(const WalkSpec& spec, std::uint64_t count, int threads,
                 const std::function<State()>& make_state,
                 const std::function<void(State&, std::uint64_t, const Summary&)>& accumulate,
                 const std::function<void(State&, State&&)>& merge,
                 const Simulate& one,
                 const std::vector<std::uint64_t>& checkpoint_steps) {
    int workers = resolve_thread_count(threads);
    if (count < static_cast<std::uint64_t>(workers))
        workers = count == 0 ? 1 : static_cast<int>(count);
    if (workers <= 1) {
        State state = make_state();
        for (std::uint64_t t = 0; t < count; ++t) accumulate(state, t, one(spec, t, checkpoint_steps));
        return state;
    }
    std::vector<State> parts;
    parts.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) parts.push_back(make_state());
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            State& mine = parts[static_cast<std::size_t>(w)];
            for (std::uint64_t t = static_cast<std::uint64_t>(w); t < count;
                 t += static_cast<std::uint64_t>(workers))
                accumulate(mine, t, one(spec, t, checkpoint_steps));
        });
    }
    for (auto& th : pool) th.join();
    State state = std::move(parts.front());
    for (int w = 1; w < workers; ++w) merge(state, std::move(parts[static_cast<std::size_t>(w)]));
    return state;
}

}  // namespace detail

// Runs trajectories [0, count), striding them across workers.  Trajectory t
// always uses the stream derived from (spec.seed, t), so the multiset of
// summaries is identical for every thread count; the caller's accumulate
// must be order-insensitive (integer tallies are) for the merged state to be
// bit-identical too.  threads <= 0 picks the hardware count.
template <typename State>
State batch_summaries(const WalkSpec& spec, std::uint64_t count, int threads,
                      std::function<State()> make_state,
                      std::function<void(State&, std::uint64_t, const PathSummary&)> accumulate,
                      std::function<void(State&, State&&)> merge,
                      const std::vector<std::uint64_t>& checkpoint_steps = {}) {
    return detail::batch_impl<PathSummary, State>(
        spec, count, threads, make_state, accumulate, merge,
        [](const WalkSpec& s, std::uint64_t t, const std::vector<std::uint64_t>& cp) {
            return simulate_trajectory(s, t, cp);
        },
        checkpoint_steps);
}

template <typename State>
State batch_coupled(const WalkSpec& spec, std::uint64_t count, int threads,
                    std::function<State()> make_state,
                    std::function<void(State&, std::uint64_t, const CoupledSummary&)> accumulate,
                    std::function<void(State&, State&&)> merge,
                    const std::vector<std::uint64_t>& checkpoint_steps = {}) {
    return detail::batch_impl<CoupledSummary, State>(
        spec, count, threads, make_state, accumulate, merge,
        [](const WalkSpec& s, std::uint64_t t, const std::vector<std::uint64_t>& cp) {
            return simulate_coupled_trajectory(s, t, cp);
        },
        checkpoint_steps);
}

}  // namespace pw
