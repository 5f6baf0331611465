#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pw/engine.hpp"
#include "pw/lattice.hpp"

// Estimation on top of the engine: batched accumulation with bit-exact
// merges, growth fits, coupling and endpoint diagnostics, and the small
// numerics (KS, chi-square tails) they need.  Every accumulator is integer,
// so a batch's merged state is byte-identical for any worker count and
// quantiles are exact order statistics, not approximations.

namespace pw {

struct Thresholds {
    double r2_min = 0.95;            // log-model fit quality
    double power_exp_max = 0.2;      // power-law exponent bound for slow growth
    double ks_max = 0.1;             // marginal KS distance
    double cov_rel_tol = 0.05;       // covariance Frobenius error, unperturbed
    double cov_rel_tol_perturbed = 0.10;
    double coupling_final_ratio = 0.5;  // last/first scaled median bound
    double tv_max = 0.01;            // total-variation distance
    double stderr_rel_max = 0.1;     // stderr/mean gate before any fit
    double chi2_p_min = 0.001;       // independence / homogeneity p-value
};

// --- accumulation -----------------------------------------------------------

struct EstimatorState {
    std::uint64_t count = 0;

    std::uint64_t sum_rho = 0, sum_nu = 0, sum_nu_bar = 0, sum_sup = 0;
    unsigned __int128 sq_rho = 0, sq_nu = 0, sq_nu_bar = 0, sq_sup = 0;
    bool nu_bar_truncated = false;  // some trajectory hit the continuation cap

    std::vector<__int128> sum_coord;    // endpoint first moments, length d
    std::vector<__int128> sum_coord2;   // endpoint second moments, d*d row-major

    std::map<std::uint64_t, std::uint64_t> rho_hist;
    std::map<std::uint64_t, std::uint64_t> nu_hist;
    std::map<std::uint64_t, std::uint64_t> nu_bar_hist;
    std::map<std::uint64_t, std::uint64_t> sup_hist;
    std::map<std::vector<Coord>, std::uint64_t> endpoint_hist;
    // Per checkpoint, per axis: coordinate histogram (for KS against a
    // continuous target) -- filled by add() when summaries carry checkpoints.
    std::vector<std::vector<std::map<Coord, std::uint64_t>>> checkpoint_coord_hist;
    // Per checkpoint: first and second moments of the position, as above.
    std::vector<std::vector<__int128>> checkpoint_sum;
    std::vector<std::vector<__int128>> checkpoint_sum2;
    // Sign of the first-axis increment between consecutive checkpoints
    // (checkpoint 0 measured from the start); 2x2 tables between neighbours.
    std::vector<std::array<std::uint64_t, 4>> increment_sign_tables;

    explicit EstimatorState(int d = 0, std::size_t checkpoints = 0);
    void add(const PathSummary& s);
    void add(const CoupledSummary& s);  // endpoint_hist takes X; sup from the pair
    void merge(EstimatorState&& other);

    double mean_rho() const;
    double stderr_rho() const;
    double mean_nu() const;
    double stderr_nu() const;
    double mean_nu_bar() const;
    double stderr_nu_bar() const;
    double mean_sup() const;
    double stderr_sup() const;
    std::uint64_t quantile_rho(double q) const;
    std::uint64_t quantile_sup(double q) const;
    // Unbiased endpoint covariance estimate, d*d row-major.
    std::vector<double> endpoint_covariance() const;
};

// Order statistic ceil(q * count) (1-based) of an integer histogram.
std::uint64_t histogram_quantile(const std::map<std::uint64_t, std::uint64_t>& hist,
                                 std::uint64_t count, double q);

// Batched run collecting the full EstimatorState.  Grid experiments derive a
// fresh spec seed per grid point (grid_seed) before calling these.
EstimatorState collect_summaries(const WalkSpec& spec, std::uint64_t trajectories,
                                 int threads,
                                 const std::vector<std::uint64_t>& checkpoint_steps = {});
EstimatorState collect_coupled(const WalkSpec& spec, std::uint64_t trajectories,
                               int threads);

// --- fits -------------------------------------------------------------------

struct GridRow {
    std::uint64_t n = 0;
    double mean = 0.0;
    double stderr_mean = 0.0;
    double q50 = 0.0;
    double q90 = 0.0;
};

enum class FitModel { LogLinear, PowerLaw };

// Ordinary least squares of the grid means against a + b*log n (LogLinear)
// or log a + p*log n (PowerLaw, i.e. a * n^p fitted in log-log space).
struct FitReport {
    FitModel model = FitModel::LogLinear;
    double a = 0.0;
    double b = 0.0;        // slope, resp. exponent
    double se_a = 0.0;
    double se_b = 0.0;
    double r_squared = 0.0;
};

FitReport fit_log_model(const std::vector<GridRow>& grid);
FitReport fit_power_model(const std::vector<GridRow>& grid);  // means must be > 0

// --- experiments ------------------------------------------------------------

// Each of these runs one independent batch per grid point, deriving the
// point's seed with grid_seed(spec.seed, index), and throws InsufficientData
// if any grid mean has stderr/mean above thresholds.stderr_rel_max or the
// grid spans fewer than two decades.

// One batch per horizon in n_grid (the walk's own horizon is ignored); both
// occupation and entrance reports can be built from the same states, so a
// caller needing both pays for the simulation once.
std::vector<EstimatorState> grid_states(const WalkSpec& spec,
                                        const std::vector<std::uint64_t>& n_grid,
                                        std::uint64_t trajectories, int threads);

struct GrowthReport {
    std::vector<GridRow> grid;         // occupation time rho
    FitReport log_fit;
    FitReport power_fit;
    bool verdict = false;  // log fit tight and power exponent small
};
GrowthReport occupation_growth(const WalkSpec& spec,
                               const std::vector<std::uint64_t>& n_grid,
                               std::uint64_t trajectories, int threads,
                               const Thresholds& thr);
GrowthReport occupation_growth_from(const std::vector<EstimatorState>& states,
                                    const std::vector<std::uint64_t>& n_grid,
                                    const Thresholds& thr);

struct EntranceReport {
    std::vector<GridRow> nu_grid;
    std::vector<GridRow> nu_bar_grid;
    FitReport nu_bar_log_fit;
    bool nu_bar_truncated = false;  // some window hit the continuation cap
    bool ordering_ok = false;  // mean nu <= mean nu_bar + 2 joint stderr, each point
    bool verdict = false;
};
EntranceReport entrance_counts(const WalkSpec& spec,
                               const std::vector<std::uint64_t>& n_grid,
                               std::uint64_t trajectories, int threads,
                               const Thresholds& thr);
EntranceReport entrance_counts_from(const std::vector<EstimatorState>& states,
                                    const std::vector<std::uint64_t>& n_grid,
                                    const Thresholds& thr);

struct CouplingReport {
    std::vector<GridRow> grid;  // sup distance scaled by B_n
    bool vanishing = false;     // scaled medians head to zero along the grid
};
CouplingReport coupling_distance(const WalkSpec& spec,
                                 const std::vector<std::uint64_t>& n_grid,
                                 std::uint64_t trajectories, int threads,
                                 const ScalingSequence& scaling,
                                 const Thresholds& thr);

// Functional-CLT style diagnostic at one horizon: positions at steps
// floor(n t) for probe times t in (0, 1], covariance of the scaled position
// per probe, per-axis KS against a centered normal with the estimated
// variance, and a sign-independence chi-square between consecutive probe
// increments.  Throws DegenerateCovariance if the final-probe covariance
// estimate is singular.
struct FcltReport {
    std::uint64_t horizon = 0;
    std::vector<double> probes;
    std::vector<std::uint64_t> probe_steps;
    // Per probe: scaled covariance estimate (d*d), per-axis variance, KS.
    std::vector<std::vector<double>> sigma;
    std::vector<std::vector<double>> axis_variance;
    std::vector<std::vector<double>> axis_ks;
    std::vector<double> independence_p;  // between consecutive increments
    bool ks_ok = false;
    bool independence_ok = false;
};
FcltReport fclt_check(const WalkSpec& spec, const std::vector<double>& probes,
                      std::uint64_t trajectories, int threads,
                      const ScalingSequence& scaling, const Thresholds& thr);

// Relative Frobenius distance ||a - b||_F / ||b||_F of d*d matrices.
double rel_frobenius_diff(const std::vector<double>& a, const std::vector<double>& b);

// --- path anatomy -----------------------------------------------------------

// Alternating lengths of inside-K_N and outside-K_N stretches of a stored
// path, in temporal order.  first_inside tells which kind starts.
struct BlockDecomposition {
    bool first_inside = false;
    std::vector<std::uint64_t> inside_lengths;
    std::vector<std::uint64_t> outside_lengths;
};
BlockDecomposition block_decomposition(const std::vector<LatticePoint>& path,
                                       Coord cube_radius);

// --- small numerics ---------------------------------------------------------

// Exact Kolmogorov-Smirnov distance between a sample and a continuous CDF.
double ks_statistic(std::vector<double> samples,
                    const std::function<double(double)>& cdf);
// Same from an integer histogram of coordinates, with value_of mapping an
// atom to the real line (e.g. scaling by B_n).
double ks_statistic_hist(const std::map<Coord, std::uint64_t>& hist,
                         std::uint64_t count,
                         const std::function<double(Coord)>& value_of,
                         const std::function<double(double)>& cdf);

double normal_cdf(double x);  // standard normal
// Regularized upper incomplete gamma Q(a, x); chi2_survival(x, k) = Q(k/2, x/2).
double gamma_q(double a, double x);
double chi2_survival(double x, int dof);
// Independence p-value of a 2x2 contingency table (1 dof, no continuity
// correction); degenerate margins give p = 1.
double chi2_independence_p(const std::array<std::uint64_t, 4>& table);
// Two-sample homogeneity p-value for endpoint histograms.  Cells are pooled
// in key order until each pooled expected count reaches 5.
double chi2_twosample_p(const std::map<std::vector<Coord>, std::uint64_t>& a,
                        const std::map<std::vector<Coord>, std::uint64_t>& b);
double chi2_twosample_p(const std::map<std::uint64_t, std::uint64_t>& a,
                        const std::map<std::uint64_t, std::uint64_t>& b);

// Total-variation distance between an endpoint histogram and an exact pmf on
// a box (atoms outside the box contribute in full).
struct LatticePmf;  // oracle.hpp
double tv_distance(const std::map<std::vector<Coord>, std::uint64_t>& hist,
                   std::uint64_t count, const LatticePmf& exact);

}  // namespace pw
