#include "pw/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pw/oracle.hpp"

namespace pw {

namespace {

double u128_to_double(unsigned __int128 v) { return static_cast<double>(v); }
double i128_to_double(__int128 v) { return static_cast<double>(v); }

// Unbiased sample variance from integer power sums.
double variance_from_sums(std::uint64_t count, double sum, double sq) {
    if (count < 2) return 0.0;
    double n = static_cast<double>(count);
    double mean = sum / n;
    double var = (sq - n * mean * mean) / (n - 1.0);
    return var < 0.0 ? 0.0 : var;  // cancellation can dip a hair below zero
}

double stderr_from_sums(std::uint64_t count, double sum, double sq) {
    if (count < 2) return 0.0;
    return std::sqrt(variance_from_sums(count, sum, sq) / static_cast<double>(count));
}

int sign_bit(Coord v) { return v < 0 ? 1 : 0; }  // zero counts as positive

template <typename K>
void merge_hist(std::map<K, std::uint64_t>& into, const std::map<K, std::uint64_t>& from) {
    for (const auto& [k, v] : from) into[k] += v;
}

}  // namespace

EstimatorState::EstimatorState(int d, std::size_t checkpoints) {
    sum_coord.assign(static_cast<std::size_t>(d), 0);
    sum_coord2.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0);
    checkpoint_coord_hist.assign(
        checkpoints, std::vector<std::map<Coord, std::uint64_t>>(static_cast<std::size_t>(d)));
    checkpoint_sum.assign(checkpoints, std::vector<__int128>(static_cast<std::size_t>(d), 0));
    checkpoint_sum2.assign(
        checkpoints,
        std::vector<__int128>(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0));
    increment_sign_tables.assign(checkpoints >= 1 ? checkpoints - 1 : 0,
                                 std::array<std::uint64_t, 4>{0, 0, 0, 0});
}

namespace {

void add_endpoint_moments(EstimatorState& st, const LatticePoint& p) {
    std::size_t d = st.sum_coord.size();
    if (p.c.size() != d)
        throw DimensionMismatch("summary endpoint dimension does not match the accumulator");
    for (std::size_t i = 0; i < d; ++i) st.sum_coord[i] += p.c[i];
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            st.sum_coord2[i * d + j] +=
                static_cast<__int128>(p.c[i]) * static_cast<__int128>(p.c[j]);
}

void add_checkpoints(EstimatorState& st,
                     const std::function<const LatticePoint&(std::size_t)>& at,
                     std::size_t n_cp) {
    if (n_cp != st.checkpoint_coord_hist.size())
        throw DimensionMismatch("summary checkpoint count does not match the accumulator");
    std::size_t d = st.sum_coord.size();
    for (std::size_t k = 0; k < n_cp; ++k) {
        const LatticePoint& p = at(k);
        if (p.c.size() != d)
            throw DimensionMismatch("checkpoint dimension does not match the accumulator");
        for (std::size_t i = 0; i < d; ++i) {
            ++st.checkpoint_coord_hist[k][i][p.c[i]];
            st.checkpoint_sum[k][i] += p.c[i];
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                st.checkpoint_sum2[k][i * d + j] +=
                    static_cast<__int128>(p.c[i]) * static_cast<__int128>(p.c[j]);
    }
    // First-axis increments between consecutive checkpoints; the first one is
    // measured from the origin (grid diagnostics start there).
    for (std::size_t k = 0; k + 1 < n_cp; ++k) {
        Coord prev = k == 0 ? at(0).c[0] : at(k).c[0] - at(k - 1).c[0];
        Coord next = at(k + 1).c[0] - at(k).c[0];
        ++st.increment_sign_tables[k][static_cast<std::size_t>(sign_bit(prev) * 2 +
                                                               sign_bit(next))];
    }
}

}  // namespace

void EstimatorState::add(const PathSummary& s) {
    ++count;
    sum_rho += s.rho;
    sq_rho += static_cast<unsigned __int128>(s.rho) * s.rho;
    sum_nu += s.nu;
    sq_nu += static_cast<unsigned __int128>(s.nu) * s.nu;
    sum_nu_bar += s.nu_bar;
    sq_nu_bar += static_cast<unsigned __int128>(s.nu_bar) * s.nu_bar;
    if (!s.nu_bar_complete) nu_bar_truncated = true;
    ++rho_hist[s.rho];
    ++nu_hist[s.nu];
    ++nu_bar_hist[s.nu_bar];
    ++endpoint_hist[s.endpoint.c];
    add_endpoint_moments(*this, s.endpoint);
    add_checkpoints(
        *this, [&](std::size_t k) -> const LatticePoint& { return s.checkpoints[k]; },
        s.checkpoints.size());
}

void EstimatorState::add(const CoupledSummary& s) {
    ++count;
    sum_rho += s.rho;
    sq_rho += static_cast<unsigned __int128>(s.rho) * s.rho;
    std::uint64_t sup = static_cast<std::uint64_t>(s.sup_distance);
    sum_sup += sup;
    sq_sup += static_cast<unsigned __int128>(sup) * sup;
    ++rho_hist[s.rho];
    ++sup_hist[sup];
    ++endpoint_hist[s.x_endpoint.c];
    add_endpoint_moments(*this, s.x_endpoint);
    add_checkpoints(
        *this, [&](std::size_t k) -> const LatticePoint& { return s.checkpoints[k].first; },
        s.checkpoints.size());
}

void EstimatorState::merge(EstimatorState&& other) {
    if (other.sum_coord.size() != sum_coord.size() ||
        other.checkpoint_coord_hist.size() != checkpoint_coord_hist.size())
        throw DimensionMismatch("merging estimator states of different shapes");
    count += other.count;
    sum_rho += other.sum_rho;
    sum_nu += other.sum_nu;
    sum_nu_bar += other.sum_nu_bar;
    sum_sup += other.sum_sup;
    sq_rho += other.sq_rho;
    sq_nu += other.sq_nu;
    sq_nu_bar += other.sq_nu_bar;
    sq_sup += other.sq_sup;
    nu_bar_truncated = nu_bar_truncated || other.nu_bar_truncated;
    for (std::size_t i = 0; i < sum_coord.size(); ++i) sum_coord[i] += other.sum_coord[i];
    for (std::size_t i = 0; i < sum_coord2.size(); ++i) sum_coord2[i] += other.sum_coord2[i];
    merge_hist(rho_hist, other.rho_hist);
    merge_hist(nu_hist, other.nu_hist);
    merge_hist(nu_bar_hist, other.nu_bar_hist);
    merge_hist(sup_hist, other.sup_hist);
    merge_hist(endpoint_hist, other.endpoint_hist);
    for (std::size_t k = 0; k < checkpoint_coord_hist.size(); ++k) {
        for (std::size_t i = 0; i < checkpoint_coord_hist[k].size(); ++i)
            merge_hist(checkpoint_coord_hist[k][i], other.checkpoint_coord_hist[k][i]);
        for (std::size_t i = 0; i < checkpoint_sum[k].size(); ++i)
            checkpoint_sum[k][i] += other.checkpoint_sum[k][i];
        for (std::size_t i = 0; i < checkpoint_sum2[k].size(); ++i)
            checkpoint_sum2[k][i] += other.checkpoint_sum2[k][i];
    }
    for (std::size_t k = 0; k < increment_sign_tables.size(); ++k)
        for (std::size_t c = 0; c < 4; ++c)
            increment_sign_tables[k][c] += other.increment_sign_tables[k][c];
}

double EstimatorState::mean_rho() const {
    if (count == 0) throw InsufficientData("no summaries accumulated");
    return static_cast<double>(sum_rho) / static_cast<double>(count);
}
double EstimatorState::stderr_rho() const {
    return stderr_from_sums(count, static_cast<double>(sum_rho), u128_to_double(sq_rho));
}
double EstimatorState::mean_nu() const {
    if (count == 0) throw InsufficientData("no summaries accumulated");
    return static_cast<double>(sum_nu) / static_cast<double>(count);
}
double EstimatorState::stderr_nu() const {
    return stderr_from_sums(count, static_cast<double>(sum_nu), u128_to_double(sq_nu));
}
double EstimatorState::mean_nu_bar() const {
    if (count == 0) throw InsufficientData("no summaries accumulated");
    return static_cast<double>(sum_nu_bar) / static_cast<double>(count);
}
double EstimatorState::stderr_nu_bar() const {
    return stderr_from_sums(count, static_cast<double>(sum_nu_bar), u128_to_double(sq_nu_bar));
}
double EstimatorState::mean_sup() const {
    if (count == 0) throw InsufficientData("no summaries accumulated");
    return static_cast<double>(sum_sup) / static_cast<double>(count);
}
double EstimatorState::stderr_sup() const {
    return stderr_from_sums(count, static_cast<double>(sum_sup), u128_to_double(sq_sup));
}

std::uint64_t EstimatorState::quantile_rho(double q) const {
    return histogram_quantile(rho_hist, count, q);
}
std::uint64_t EstimatorState::quantile_sup(double q) const {
    return histogram_quantile(sup_hist, count, q);
}

std::vector<double> EstimatorState::endpoint_covariance() const {
    if (count < 2) throw InsufficientData("covariance needs at least two summaries");
    std::size_t d = sum_coord.size();
    double n = static_cast<double>(count);
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double sij = i128_to_double(sum_coord2[i * d + j]);
            double si = i128_to_double(sum_coord[i]);
            double sj = i128_to_double(sum_coord[j]);
            cov[i * d + j] = (sij - si * sj / n) / (n - 1.0);
        }
    return cov;
}

std::uint64_t histogram_quantile(const std::map<std::uint64_t, std::uint64_t>& hist,
                                 std::uint64_t count, double q) {
    if (count == 0 || hist.empty()) throw InsufficientData("empty histogram");
    if (q < 0.0 || q > 1.0) throw InvalidSpec("quantile level outside [0, 1]");
    double raw = std::ceil(q * static_cast<double>(count));
    std::uint64_t target = raw < 1.0 ? 1 : static_cast<std::uint64_t>(raw);
    if (target > count) target = count;
    std::uint64_t cum = 0;
    for (const auto& [value, c] : hist) {
        cum += c;
        if (cum >= target) return value;
    }
    return hist.rbegin()->first;  // unreachable when the histogram sums to count
}

EstimatorState collect_summaries(const WalkSpec& spec, std::uint64_t trajectories,
                                 int threads,
                                 const std::vector<std::uint64_t>& checkpoint_steps) {
    int d = spec.d();
    std::size_t n_cp = checkpoint_steps.size();
    return batch_summaries<EstimatorState>(
        spec, trajectories, threads, [d, n_cp] { return EstimatorState(d, n_cp); },
        [](EstimatorState& st, std::uint64_t, const PathSummary& s) { st.add(s); },
        [](EstimatorState& st, EstimatorState&& o) { st.merge(std::move(o)); },
        checkpoint_steps);
}

EstimatorState collect_coupled(const WalkSpec& spec, std::uint64_t trajectories,
                               int threads) {
    int d = spec.d();
    return batch_coupled<EstimatorState>(
        spec, trajectories, threads, [d] { return EstimatorState(d, 0); },
        [](EstimatorState& st, std::uint64_t, const CoupledSummary& s) { st.add(s); },
        [](EstimatorState& st, EstimatorState&& o) { st.merge(std::move(o)); });
}

// --- fits -------------------------------------------------------------------

namespace {

FitReport least_squares(const std::vector<double>& x, const std::vector<double>& y,
                        FitModel model) {
    std::size_t m = x.size();
    if (m < 2) throw InsufficientData("a fit needs at least two grid points");
    double xbar = 0, ybar = 0;
    for (std::size_t i = 0; i < m; ++i) {
        xbar += x[i];
        ybar += y[i];
    }
    xbar /= static_cast<double>(m);
    ybar /= static_cast<double>(m);
    double sxx = 0, sxy = 0, stot = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (x[i] - xbar) * (x[i] - xbar);
        sxy += (x[i] - xbar) * (y[i] - ybar);
        stot += (y[i] - ybar) * (y[i] - ybar);
    }
    if (sxx <= 0.0) throw InsufficientData("fit abscissae are all equal");
    FitReport rep;
    rep.model = model;
    rep.b = sxy / sxx;
    rep.a = ybar - rep.b * xbar;
    double sse = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double r = y[i] - (rep.a + rep.b * x[i]);
        sse += r * r;
    }
    // With all ordinates equal the model is exact and r^2 is 1 by convention.
    rep.r_squared = stot <= 1e-300 ? 1.0 : 1.0 - sse / stot;
    if (m > 2) {
        double s2 = sse / static_cast<double>(m - 2);
        rep.se_b = std::sqrt(s2 / sxx);
        rep.se_a = std::sqrt(s2 * (1.0 / static_cast<double>(m) + xbar * xbar / sxx));
    }
    return rep;
}

}  // namespace

FitReport fit_log_model(const std::vector<GridRow>& grid) {
    std::vector<double> x, y;
    for (const auto& row : grid) {
        if (row.n == 0) throw InvalidSpec("grid point n = 0 in a log fit");
        x.push_back(std::log(static_cast<double>(row.n)));
        y.push_back(row.mean);
    }
    return least_squares(x, y, FitModel::LogLinear);
}

FitReport fit_power_model(const std::vector<GridRow>& grid) {
    std::vector<double> x, y;
    for (const auto& row : grid) {
        if (row.n == 0) throw InvalidSpec("grid point n = 0 in a power fit");
        if (row.mean <= 0.0)
            throw InsufficientData("power-law fit needs strictly positive means");
        x.push_back(std::log(static_cast<double>(row.n)));
        y.push_back(std::log(row.mean));
    }
    FitReport rep = least_squares(x, y, FitModel::PowerLaw);
    rep.a = std::exp(rep.a);  // multiplier of n^b; se_a stays on the log scale
    return rep;
}

// --- experiments ------------------------------------------------------------

namespace {

void validate_grid(const std::vector<std::uint64_t>& n_grid) {
    if (n_grid.empty()) throw InvalidSpec("empty horizon grid");
    for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
        if (n_grid[i] >= n_grid[i + 1])
            throw InvalidSpec("horizon grid must be strictly increasing");
    if (n_grid.front() == 0) throw InvalidSpec("horizon grid must start above 0");
}

void gate_decades(const std::vector<std::uint64_t>& n_grid) {
    double span = std::log10(static_cast<double>(n_grid.back()) /
                             static_cast<double>(n_grid.front()));
    if (span < 2.0 - 1e-9)
        throw InsufficientData("horizon grid spans fewer than two decades");
}

void gate_stderr(const GridRow& row, const Thresholds& thr) {
    if (row.mean > 0.0 && row.stderr_mean / row.mean > thr.stderr_rel_max)
        throw InsufficientData("grid mean too noisy at n = " + std::to_string(row.n));
}

}  // namespace

std::vector<EstimatorState> grid_states(const WalkSpec& spec,
                                        const std::vector<std::uint64_t>& n_grid,
                                        std::uint64_t trajectories, int threads) {
    validate_grid(n_grid);
    if (trajectories < 2) throw InvalidSpec("grid batches need at least two trajectories");
    std::vector<EstimatorState> states;
    states.reserve(n_grid.size());
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        WalkSpec point = spec;
        point.horizon = n_grid[gi];
        point.seed = grid_seed(spec.seed, static_cast<std::uint64_t>(gi));
        states.push_back(collect_summaries(point, trajectories, threads));
    }
    return states;
}

GrowthReport occupation_growth_from(const std::vector<EstimatorState>& states,
                                    const std::vector<std::uint64_t>& n_grid,
                                    const Thresholds& thr) {
    validate_grid(n_grid);
    if (states.size() != n_grid.size())
        throw DimensionMismatch("one estimator state per grid point required");
    gate_decades(n_grid);
    GrowthReport rep;
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        const EstimatorState& st = states[gi];
        GridRow row{n_grid[gi], st.mean_rho(), st.stderr_rho(),
                    static_cast<double>(st.quantile_rho(0.5)),
                    static_cast<double>(st.quantile_rho(0.9))};
        gate_stderr(row, thr);
        rep.grid.push_back(row);
    }
    rep.log_fit = fit_log_model(rep.grid);
    rep.power_fit = fit_power_model(rep.grid);
    rep.verdict =
        rep.log_fit.r_squared > thr.r2_min && rep.power_fit.b < thr.power_exp_max;
    return rep;
}

GrowthReport occupation_growth(const WalkSpec& spec,
                               const std::vector<std::uint64_t>& n_grid,
                               std::uint64_t trajectories, int threads,
                               const Thresholds& thr) {
    return occupation_growth_from(grid_states(spec, n_grid, trajectories, threads), n_grid,
                                  thr);
}

EntranceReport entrance_counts_from(const std::vector<EstimatorState>& states,
                                    const std::vector<std::uint64_t>& n_grid,
                                    const Thresholds& thr) {
    validate_grid(n_grid);
    if (states.size() != n_grid.size())
        throw DimensionMismatch("one estimator state per grid point required");
    gate_decades(n_grid);
    EntranceReport rep;
    rep.ordering_ok = true;
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        const EstimatorState& st = states[gi];
        GridRow nu_row{n_grid[gi], st.mean_nu(), st.stderr_nu(),
                       static_cast<double>(histogram_quantile(st.nu_hist, st.count, 0.5)),
                       static_cast<double>(histogram_quantile(st.nu_hist, st.count, 0.9))};
        GridRow bar_row{
            n_grid[gi], st.mean_nu_bar(), st.stderr_nu_bar(),
            static_cast<double>(histogram_quantile(st.nu_bar_hist, st.count, 0.5)),
            static_cast<double>(histogram_quantile(st.nu_bar_hist, st.count, 0.9))};
        gate_stderr(nu_row, thr);
        gate_stderr(bar_row, thr);
        double joint_se = std::sqrt(nu_row.stderr_mean * nu_row.stderr_mean +
                                    bar_row.stderr_mean * bar_row.stderr_mean);
        if (nu_row.mean > bar_row.mean + 2.0 * joint_se) rep.ordering_ok = false;
        if (st.nu_bar_truncated) rep.nu_bar_truncated = true;
        rep.nu_grid.push_back(nu_row);
        rep.nu_bar_grid.push_back(bar_row);
    }
    rep.nu_bar_log_fit = fit_log_model(rep.nu_bar_grid);
    rep.verdict = rep.ordering_ok && rep.nu_bar_log_fit.r_squared > thr.r2_min;
    return rep;
}

EntranceReport entrance_counts(const WalkSpec& spec,
                               const std::vector<std::uint64_t>& n_grid,
                               std::uint64_t trajectories, int threads,
                               const Thresholds& thr) {
    return entrance_counts_from(grid_states(spec, n_grid, trajectories, threads), n_grid,
                                thr);
}

CouplingReport coupling_distance(const WalkSpec& spec,
                                 const std::vector<std::uint64_t>& n_grid,
                                 std::uint64_t trajectories, int threads,
                                 const ScalingSequence& scaling, const Thresholds& thr) {
    validate_grid(n_grid);
    if (trajectories < 2) throw InvalidSpec("grid batches need at least two trajectories");
    gate_decades(n_grid);
    CouplingReport rep;
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        WalkSpec point = spec;
        point.horizon = n_grid[gi];
        point.seed = grid_seed(spec.seed, static_cast<std::uint64_t>(gi));
        EstimatorState st = collect_coupled(point, trajectories, threads);
        double b = scaling(n_grid[gi]);
        GridRow row{n_grid[gi], st.mean_sup() / b, st.stderr_sup() / b,
                    static_cast<double>(st.quantile_sup(0.5)) / b,
                    static_cast<double>(st.quantile_sup(0.9)) / b};
        gate_stderr(row, thr);
        rep.grid.push_back(row);
    }
    // Verdict: both quantile tracks strictly decreasing and the final median
    // under the configured fraction of the initial one.  A grid that is zero
    // everywhere (identical walks) has nothing left to decrease and counts as
    // vanished outright.
    bool all_zero = true, strict = true;
    for (std::size_t gi = 0; gi < rep.grid.size(); ++gi) {
        if (rep.grid[gi].q50 != 0.0 || rep.grid[gi].q90 != 0.0) all_zero = false;
        if (gi + 1 < rep.grid.size() && (rep.grid[gi + 1].q50 >= rep.grid[gi].q50 ||
                                         rep.grid[gi + 1].q90 >= rep.grid[gi].q90))
            strict = false;
    }
    rep.vanishing = all_zero ||
                    (strict && rep.grid.back().q50 <
                                   thr.coupling_final_ratio * rep.grid.front().q50);
    return rep;
}

// --- functional-CLT diagnostic ------------------------------------------------

namespace {

// Determinant by plain Gaussian elimination with partial pivoting; the
// matrices here are tiny (d x d for lattice dimension d).
double determinant(std::vector<double> m, std::size_t d) {
    double det = 1.0;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::abs(m[r * d + col]) > std::abs(m[piv * d + col])) piv = r;
        if (std::abs(m[piv * d + col]) < 1e-300) return 0.0;
        if (piv != col) {
            for (std::size_t c = 0; c < d; ++c) std::swap(m[piv * d + c], m[col * d + c]);
            det = -det;
        }
        det *= m[col * d + col];
        for (std::size_t r = col + 1; r < d; ++r) {
            double f = m[r * d + col] / m[col * d + col];
            for (std::size_t c = col; c < d; ++c) m[r * d + c] -= f * m[col * d + c];
        }
    }
    return det;
}

}  // namespace

FcltReport fclt_check(const WalkSpec& spec, const std::vector<double>& probes,
                      std::uint64_t trajectories, int threads,
                      const ScalingSequence& scaling, const Thresholds& thr) {
    if (probes.empty()) throw InvalidSpec("no probe times");
    for (std::size_t i = 0; i < probes.size(); ++i) {
        if (probes[i] <= 0.0 || probes[i] > 1.0)
            throw InvalidSpec("probe times must lie in (0, 1]");
        if (i > 0 && probes[i] <= probes[i - 1])
            throw InvalidSpec("probe times must be strictly increasing");
    }
    if (trajectories < 2) throw InvalidSpec("the diagnostic needs at least two trajectories");

    FcltReport rep;
    rep.horizon = spec.horizon;
    rep.probes = probes;
    for (double t : probes) {
        auto step = static_cast<std::uint64_t>(std::floor(t * static_cast<double>(spec.horizon)));
        if (step == 0 || (!rep.probe_steps.empty() && step <= rep.probe_steps.back()))
            throw InvalidSpec("probe steps collide at this horizon");
        rep.probe_steps.push_back(step);
    }

    EstimatorState st = collect_summaries(spec, trajectories, threads, rep.probe_steps);
    std::size_t d = st.sum_coord.size();
    double b = scaling(spec.horizon);
    double n = static_cast<double>(st.count);

    for (std::size_t k = 0; k < rep.probe_steps.size(); ++k) {
        std::vector<double> sigma(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double sij = i128_to_double(st.checkpoint_sum2[k][i * d + j]);
                double si = i128_to_double(st.checkpoint_sum[k][i]);
                double sj = i128_to_double(st.checkpoint_sum[k][j]);
                sigma[i * d + j] = (sij - si * sj / n) / (n - 1.0) / (b * b);
            }
        std::vector<double> vars(d, 0.0), ks(d, 0.0);
        for (std::size_t a = 0; a < d; ++a) {
            vars[a] = sigma[a * d + a];
            if (vars[a] <= 0.0) {
                ks[a] = 1.0;
                continue;
            }
            double sd = std::sqrt(vars[a]);
            ks[a] = ks_statistic_hist(
                st.checkpoint_coord_hist[k][a], st.count,
                [b](Coord c) { return static_cast<double>(c) / b; },
                [sd](double x) { return normal_cdf(x / sd); });
        }
        rep.sigma.push_back(std::move(sigma));
        rep.axis_variance.push_back(std::move(vars));
        rep.axis_ks.push_back(std::move(ks));
    }

    if (determinant(rep.sigma.back(), d) <= 0.0)
        throw DegenerateCovariance("final-probe covariance estimate is singular");

    rep.ks_ok = true;
    for (const auto& probe : rep.axis_ks)
        for (double v : probe)
            if (v >= thr.ks_max) rep.ks_ok = false;

    rep.independence_ok = true;
    for (const auto& table : st.increment_sign_tables) {
        double p = chi2_independence_p(table);
        rep.independence_p.push_back(p);
        if (p < thr.chi2_p_min) rep.independence_ok = false;
    }
    return rep;
}

double rel_frobenius_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("matrix sizes differ");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num) / std::sqrt(den);
}

// --- path anatomy -----------------------------------------------------------

BlockDecomposition block_decomposition(const std::vector<LatticePoint>& path,
                                       Coord cube_radius) {
    if (path.empty()) throw InvalidSpec("empty path");
    BlockDecomposition dec;
    dec.first_inside = path.front().max_norm() <= cube_radius;
    bool cur_inside = dec.first_inside;
    std::uint64_t run = 0;
    auto flush = [&] {
        (cur_inside ? dec.inside_lengths : dec.outside_lengths).push_back(run);
    };
    for (const auto& p : path) {
        bool inside = p.max_norm() <= cube_radius;
        if (inside == cur_inside) {
            ++run;
        } else {
            flush();
            cur_inside = inside;
            run = 1;
        }
    }
    flush();
    return dec;
}

// --- small numerics ---------------------------------------------------------

double ks_statistic(std::vector<double> samples,
                    const std::function<double(double)>& cdf) {
    if (samples.empty()) throw InsufficientData("no samples");
    std::sort(samples.begin(), samples.end());
    double m = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double f = cdf(samples[i]);
        d = std::max(d, f - static_cast<double>(i) / m);
        d = std::max(d, static_cast<double>(i + 1) / m - f);
    }
    return d;
}

double ks_statistic_hist(const std::map<Coord, std::uint64_t>& hist, std::uint64_t count,
                         const std::function<double(Coord)>& value_of,
                         const std::function<double(double)>& cdf) {
    if (count == 0 || hist.empty()) throw InsufficientData("empty histogram");
    double m = static_cast<double>(count);
    double d = 0.0;
    std::uint64_t cum = 0;
    for (const auto& [coord, c] : hist) {
        double f = cdf(value_of(coord));
        d = std::max(d, f - static_cast<double>(cum) / m);
        cum += c;
        d = std::max(d, static_cast<double>(cum) / m - f);
    }
    return d;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw InvalidSpec("gamma_q needs a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // Lower series: P(a,x) = x^a e^-x / Gamma(a) * sum x^k / (a)_{k+1}.
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-16) break;
        }
        double p = sum * std::exp(-x + a * std::log(x) - lg);
        return std::clamp(1.0 - p, 0.0, 1.0);
    }
    // Upper tail by Lentz's continued fraction.
    const double fpmin = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / fpmin, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::clamp(std::exp(-x + a * std::log(x) - lg) * h, 0.0, 1.0);
}

double chi2_survival(double x, int dof) {
    if (dof < 1) throw InvalidSpec("chi-square needs dof >= 1");
    if (x <= 0.0) return 1.0;
    return gamma_q(static_cast<double>(dof) / 2.0, x / 2.0);
}

double chi2_independence_p(const std::array<std::uint64_t, 4>& table) {
    double a = static_cast<double>(table[0]), b = static_cast<double>(table[1]);
    double c = static_cast<double>(table[2]), d = static_cast<double>(table[3]);
    double n = a + b + c + d;
    double r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
    if (r1 == 0.0 || r2 == 0.0 || c1 == 0.0 || c2 == 0.0) return 1.0;
    double diff = a * d - b * c;
    double stat = n * diff * diff / (r1 * r2 * c1 * c2);
    return chi2_survival(stat, 1);
}

namespace {

// Two-sample homogeneity chi-square over a shared atom set.  Atoms are pooled
// in key order until both expected counts clear 5; a trailing underfull pool
// joins the previous cell.  dof = cells - 1.
template <typename Key>
double chi2_twosample_impl(const std::map<Key, std::uint64_t>& a,
                           const std::map<Key, std::uint64_t>& b) {
    double n1 = 0, n2 = 0;
    std::map<Key, std::pair<std::uint64_t, std::uint64_t>> joint;
    for (const auto& [k, v] : a) {
        joint[k].first += v;
        n1 += static_cast<double>(v);
    }
    for (const auto& [k, v] : b) {
        joint[k].second += v;
        n2 += static_cast<double>(v);
    }
    if (n1 == 0.0 || n2 == 0.0) throw InsufficientData("a sample is empty");
    double scale = std::min(n1, n2) / (n1 + n2);
    std::vector<std::pair<double, double>> cells;
    double ca = 0, cb = 0;
    for (const auto& [k, v] : joint) {
        ca += static_cast<double>(v.first);
        cb += static_cast<double>(v.second);
        if (scale * (ca + cb) >= 5.0) {
            cells.emplace_back(ca, cb);
            ca = cb = 0;
        }
    }
    if (ca + cb > 0) {
        if (cells.empty()) {
            cells.emplace_back(ca, cb);
        } else {
            cells.back().first += ca;
            cells.back().second += cb;
        }
    }
    if (cells.size() < 2) return 1.0;
    double stat = 0.0;
    for (const auto& [va, vb] : cells) {
        double tot = va + vb;
        double diff = n2 * va - n1 * vb;
        stat += diff * diff / (n1 * n2 * tot);
    }
    return chi2_survival(stat, static_cast<int>(cells.size()) - 1);
}

}  // namespace

double chi2_twosample_p(const std::map<std::vector<Coord>, std::uint64_t>& a,
                        const std::map<std::vector<Coord>, std::uint64_t>& b) {
    return chi2_twosample_impl(a, b);
}

double chi2_twosample_p(const std::map<std::uint64_t, std::uint64_t>& a,
                        const std::map<std::uint64_t, std::uint64_t>& b) {
    return chi2_twosample_impl(a, b);
}

double tv_distance(const std::map<std::vector<Coord>, std::uint64_t>& hist,
                   std::uint64_t count, const LatticePmf& exact) {
    if (count == 0) throw InsufficientData("empty histogram");
    double m = static_cast<double>(count);
    double acc = exact.leaked;
    std::vector<Coord> cur(static_cast<std::size_t>(exact.d), -exact.radius);
    for (std::size_t idx = 0; idx < exact.mass.size(); ++idx) {
        auto it = hist.find(cur);
        double emp = it == hist.end() ? 0.0 : static_cast<double>(it->second) / m;
        acc += std::abs(exact.mass[idx] - emp);
        for (int i = exact.d - 1; i >= 0; --i) {
            if (++cur[static_cast<std::size_t>(i)] <= exact.radius) break;
            cur[static_cast<std::size_t>(i)] = -exact.radius;
        }
    }
    for (const auto& [cell, c] : hist) {
        if (cell.size() != static_cast<std::size_t>(exact.d))
            throw DimensionMismatch("histogram atom dimension differs from the pmf");
        bool in = true;
        for (Coord v : cell)
            if (v < -exact.radius || v > exact.radius) in = false;
        if (!in) acc += static_cast<double>(c) / m;
    }
    return acc / 2.0;
}

}  // namespace pw
