#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "doctest.h"
#include "pw/common.hpp"
#include "pw/engine.hpp"
#include "pw/lattice.hpp"
#include "pw/oracle.hpp"
#include "pw/stats.hpp"

using namespace pw;

namespace {

LatticePoint pt(Coord a, Coord b) { return LatticePoint{{a, b}}; }

JumpLaw sticky_row() {
    return make_table_law({{pt(0, 0), 0.9},
                           {pt(1, 0), 0.025},
                           {pt(-1, 0), 0.025},
                           {pt(0, 1), 0.025},
                           {pt(0, -1), 0.025}});
}

ImpuritySet origin_sticky() { return ImpuritySet({{pt(0, 0), sticky_row()}}, 2); }

PathSummary fake_summary(std::uint64_t rho, std::uint64_t nu, std::uint64_t nu_bar,
                         LatticePoint endpoint) {
    PathSummary s;
    s.rho = rho;
    s.nu = nu;
    s.nu_bar = nu_bar;
    s.nu_bar_complete = true;
    s.endpoint = std::move(endpoint);
    return s;
}

bool states_equal(const EstimatorState& a, const EstimatorState& b) {
    return a.count == b.count && a.sum_rho == b.sum_rho && a.sum_nu == b.sum_nu &&
           a.sum_nu_bar == b.sum_nu_bar && a.sum_sup == b.sum_sup && a.sq_rho == b.sq_rho &&
           a.sq_nu == b.sq_nu && a.sq_nu_bar == b.sq_nu_bar && a.sq_sup == b.sq_sup &&
           a.nu_bar_truncated == b.nu_bar_truncated && a.sum_coord == b.sum_coord &&
           a.sum_coord2 == b.sum_coord2 && a.rho_hist == b.rho_hist &&
           a.nu_hist == b.nu_hist && a.nu_bar_hist == b.nu_bar_hist &&
           a.sup_hist == b.sup_hist && a.endpoint_hist == b.endpoint_hist &&
           a.checkpoint_coord_hist == b.checkpoint_coord_hist &&
           a.checkpoint_sum == b.checkpoint_sum && a.checkpoint_sum2 == b.checkpoint_sum2 &&
           a.increment_sign_tables == b.increment_sign_tables;
}

}  // namespace

TEST_CASE("estimator moments and quantiles from a handmade batch") {
    EstimatorState st(2, 0);
    st.add(fake_summary(1, 1, 1, pt(1, 0)));
    st.add(fake_summary(2, 1, 2, pt(-1, 0)));
    st.add(fake_summary(3, 2, 3, pt(0, 1)));
    st.add(fake_summary(4, 2, 4, pt(0, -1)));
    CHECK(st.count == 4);
    CHECK(st.mean_rho() == doctest::Approx(2.5));
    // Unbiased variance 5/3, so the stderr is sqrt(5/12).
    CHECK(st.stderr_rho() == doctest::Approx(std::sqrt(5.0 / 12.0)).epsilon(1e-12));
    CHECK(st.quantile_rho(0.5) == 2);
    CHECK(st.quantile_rho(0.9) == 4);
    CHECK(st.quantile_rho(0.0) == 1);
    CHECK(st.quantile_rho(1.0) == 4);
    auto cov = st.endpoint_covariance();
    CHECK(cov[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(cov[3] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(cov[1] == doctest::Approx(0.0));
    CHECK(cov[2] == doctest::Approx(0.0));

    EstimatorState empty(2, 0);
    CHECK_THROWS_AS(empty.mean_rho(), InsufficientData);
    CHECK_THROWS_AS(empty.quantile_rho(0.5), InsufficientData);
    EstimatorState one(2, 0);
    one.add(fake_summary(1, 1, 1, pt(0, 0)));
    CHECK_THROWS_AS(one.endpoint_covariance(), InsufficientData);
    CHECK(one.stderr_rho() == 0.0);
}

TEST_CASE("histogram quantile is the exact order statistic") {
    std::map<std::uint64_t, std::uint64_t> h = {{3, 2}, {7, 5}, {9, 3}};
    CHECK(histogram_quantile(h, 10, 0.1) == 3);   // 1st
    CHECK(histogram_quantile(h, 10, 0.2) == 3);   // 2nd
    CHECK(histogram_quantile(h, 10, 0.21) == 7);  // 3rd
    CHECK(histogram_quantile(h, 10, 0.7) == 7);
    CHECK(histogram_quantile(h, 10, 0.71) == 9);
    CHECK(histogram_quantile(h, 10, 1.0) == 9);
    CHECK_THROWS_AS(histogram_quantile({}, 0, 0.5), InsufficientData);
    CHECK_THROWS_AS(histogram_quantile(h, 10, 1.5), InvalidSpec);
}

TEST_CASE("merged halves equal one pass, and thread count is invisible") {
    JumpLaw lazy = make_lazy_srw(2);
    WalkSpec spec = make_walk_spec(lazy, origin_sticky(), pt(0, 0), 200, 31415);
    std::vector<std::uint64_t> cps = {50, 100, 200};

    EstimatorState whole = collect_summaries(spec, 2000, 1, cps);
    EstimatorState threaded = collect_summaries(spec, 2000, 7, cps);
    CHECK(states_equal(whole, threaded));

    EstimatorState lo(2, cps.size()), hi(2, cps.size());
    for (std::uint64_t t = 0; t < 1000; ++t) lo.add(simulate_trajectory(spec, t, cps));
    for (std::uint64_t t = 1000; t < 2000; ++t) hi.add(simulate_trajectory(spec, t, cps));
    lo.merge(std::move(hi));
    CHECK(states_equal(whole, lo));

    EstimatorState coupled1 = collect_coupled(spec, 500, 1);
    EstimatorState coupled5 = collect_coupled(spec, 500, 5);
    CHECK(states_equal(coupled1, coupled5));
    CHECK(coupled1.sup_hist.size() > 1);
    CHECK_NOTHROW(coupled1.quantile_sup(0.5));

    EstimatorState bad(3, 0);
    CHECK_THROWS_AS(whole.merge(std::move(bad)), DimensionMismatch);
}

TEST_CASE("least squares recovers exact models") {
    std::vector<GridRow> grid;
    for (std::uint64_t n : {10ULL, 100ULL, 1000ULL, 10000ULL}) {
        GridRow row;
        row.n = n;
        row.mean = 2.0 + 3.0 * std::log(static_cast<double>(n));
        grid.push_back(row);
    }
    FitReport lg = fit_log_model(grid);
    CHECK(lg.model == FitModel::LogLinear);
    CHECK(lg.a == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(lg.b == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(lg.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lg.se_b == doctest::Approx(0.0));

    std::vector<GridRow> pgrid;
    for (std::uint64_t n : {10ULL, 100ULL, 1000ULL, 10000ULL}) {
        GridRow row;
        row.n = n;
        row.mean = 5.0 * std::pow(static_cast<double>(n), 0.3);
        pgrid.push_back(row);
    }
    FitReport pw_fit = fit_power_model(pgrid);
    CHECK(pw_fit.model == FitModel::PowerLaw);
    CHECK(pw_fit.a == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(pw_fit.b == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(pw_fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));

    // Flat data: the slope vanishes and r^2 is 1 by the convention.
    std::vector<GridRow> flat = grid;
    for (auto& row : flat) row.mean = 4.0;
    FitReport fl = fit_log_model(flat);
    CHECK(fl.b == doctest::Approx(0.0));
    CHECK(fl.r_squared == doctest::Approx(1.0));

    CHECK_THROWS_AS(fit_log_model({grid[0]}), InsufficientData);
    std::vector<GridRow> neg = grid;
    neg[1].mean = 0.0;
    CHECK_THROWS_AS(fit_power_model(neg), InsufficientData);
}

TEST_CASE("occupation growth: slow logarithmic growth is recognized") {
    JumpLaw lazy = make_lazy_srw(2);
    WalkSpec spec = make_walk_spec(lazy, origin_sticky(), pt(0, 0), 100, 5150);
    std::vector<std::uint64_t> grid = {100, 1000, 10000};
    GrowthReport rep = occupation_growth(spec, grid, 2000, 0, Thresholds{});
    REQUIRE(rep.grid.size() == 3);
    // Frozen from this seed; the bands are ~5 standard errors wide.
    CHECK(rep.grid[0].mean == doctest::Approx(20.87).epsilon(0.1));
    CHECK(rep.grid[1].mean > rep.grid[0].mean);
    CHECK(rep.grid[2].mean > rep.grid[1].mean);
    CHECK(rep.log_fit.b > 2.0);
    CHECK(rep.log_fit.b < 5.0);
    CHECK(rep.log_fit.r_squared > 0.95);
    CHECK(rep.power_fit.b < 0.2);
    CHECK(rep.verdict);

    // Same states, same report.
    auto states = grid_states(spec, grid, 2000, 0);
    GrowthReport rep2 = occupation_growth_from(states, grid, Thresholds{});
    CHECK(rep2.log_fit.r_squared == rep.log_fit.r_squared);
    CHECK(rep2.grid[1].mean == rep.grid[1].mean);

    CHECK_THROWS_AS(occupation_growth(spec, {100, 200, 300}, 2000, 0, Thresholds{}),
                    InsufficientData);  // under two decades
    CHECK_THROWS_AS(occupation_growth(spec, {100, 1000, 500}, 200, 0, Thresholds{}),
                    InvalidSpec);
    CHECK_THROWS_AS(occupation_growth(spec, {}, 200, 0, Thresholds{}), InvalidSpec);
    CHECK_THROWS_AS(occupation_growth(spec, grid, 2, 0, Thresholds{}), InsufficientData);
}

TEST_CASE("entrance counts: initial blocks stay below windowed blocks") {
    JumpLaw lazy = make_lazy_srw(2);
    WalkSpec spec = make_walk_spec(lazy, origin_sticky(), pt(0, 0), 100, 5150);
    std::vector<std::uint64_t> grid = {100, 1000, 10000};
    EntranceReport rep = entrance_counts(spec, grid, 2000, 0, Thresholds{});
    REQUIRE(rep.nu_grid.size() == 3);
    REQUIRE(rep.nu_bar_grid.size() == 3);
    CHECK(rep.ordering_ok);
    CHECK_FALSE(rep.nu_bar_truncated);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rep.nu_grid[i].mean <= rep.nu_bar_grid[i].mean);
        CHECK(rep.nu_grid[i].n == grid[i]);
    }
    // The window widens with the horizon, so the two counts converge.
    double gap0 = rep.nu_bar_grid[0].mean - rep.nu_grid[0].mean;
    double gap2 = rep.nu_bar_grid[2].mean - rep.nu_grid[2].mean;
    CHECK(gap2 < gap0);
    CHECK(rep.nu_bar_log_fit.r_squared > 0.95);
    CHECK(rep.verdict);
}

TEST_CASE("coupling distance dies away under diffusive scaling") {
    JumpLaw lazy = make_lazy_srw(2);
    WalkSpec spec = make_walk_spec(lazy, origin_sticky(), pt(0, 0), 100, 5150);
    std::vector<std::uint64_t> grid = {100, 1000, 10000};
    CouplingReport rep =
        coupling_distance(spec, grid, 1000, 0, ScalingSequence::diffusive(), Thresholds{});
    REQUIRE(rep.grid.size() == 3);
    CHECK(rep.grid[0].q50 > rep.grid[1].q50);
    CHECK(rep.grid[1].q50 > rep.grid[2].q50);
    CHECK(rep.grid[0].q90 > rep.grid[1].q90);
    CHECK(rep.grid[1].q90 > rep.grid[2].q90);
    CHECK(rep.grid[2].q50 < 0.25 * rep.grid[0].q50);
    CHECK(rep.vanishing);

    // Without impurities the pair never separates: everything is zero.
    WalkSpec pure = make_walk_spec(lazy, {}, pt(0, 0), 100, 6);
    CouplingReport rep2 =
        coupling_distance(pure, grid, 200, 0, ScalingSequence::diffusive(), Thresholds{});
    for (const auto& row : rep2.grid) {
        CHECK(row.mean == 0.0);
        CHECK(row.q90 == 0.0);
    }
    CHECK(rep2.vanishing);
}

TEST_CASE("scaled position marginals look like the right normal") {
    JumpLaw lazy = make_lazy_srw(2);
    WalkSpec spec = make_walk_spec(lazy, {}, pt(0, 0), 4096, 777);
    FcltReport rep =
        fclt_check(spec, {0.25, 0.5, 1.0}, 4000, 0, ScalingSequence::diffusive(), Thresholds{});
    REQUIRE(rep.probe_steps == std::vector<std::uint64_t>{1024, 2048, 4096});
    REQUIRE(rep.axis_variance.size() == 3);
    // Per-axis variance of the scaled position at time t is 0.4 t for this law.
    CHECK(rep.axis_variance[0][0] == doctest::Approx(0.1).epsilon(0.1));
    CHECK(rep.axis_variance[1][1] == doctest::Approx(0.2).epsilon(0.1));
    CHECK(rep.axis_variance[2][0] == doctest::Approx(0.4).epsilon(0.1));
    CHECK(rep.axis_variance[2][1] == doctest::Approx(0.4).epsilon(0.1));
    CHECK(std::abs(rep.sigma[2][1]) < 0.02);  // off-diagonal
    for (const auto& probe : rep.axis_ks)
        for (double v : probe) CHECK(v < 0.05);
    REQUIRE(rep.independence_p.size() == 2);
    for (double p : rep.independence_p) CHECK(p > 0.05);
    CHECK(rep.ks_ok);
    CHECK(rep.independence_ok);

    CHECK_THROWS_AS(fclt_check(spec, {}, 100, 0, ScalingSequence::diffusive(), Thresholds{}),
                    InvalidSpec);
    CHECK_THROWS_AS(
        fclt_check(spec, {0.5, 0.2}, 100, 0, ScalingSequence::diffusive(), Thresholds{}),
        InvalidSpec);
    CHECK_THROWS_AS(
        fclt_check(spec, {0.5, 1.5}, 100, 0, ScalingSequence::diffusive(), Thresholds{}),
        InvalidSpec);
    WalkSpec tiny = make_walk_spec(lazy, {}, pt(0, 0), 10, 1);
    CHECK_THROWS_AS(
        fclt_check(tiny, {0.01, 0.02}, 100, 0, ScalingSequence::diffusive(), Thresholds{}),
        InvalidSpec);  // both probes floor to step 0
}

TEST_CASE("relative frobenius distance") {
    std::vector<double> eye = {1, 0, 0, 1};
    std::vector<double> twice = {2, 0, 0, 2};
    CHECK(rel_frobenius_diff(eye, eye) == 0.0);
    CHECK(rel_frobenius_diff(twice, eye) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rel_frobenius_diff(eye, twice) == doctest::Approx(0.5).epsilon(1e-12));
    std::vector<double> zero = {0, 0, 0, 0};
    CHECK(rel_frobenius_diff(zero, zero) == 0.0);
    CHECK(std::isinf(rel_frobenius_diff(eye, zero)));
    CHECK_THROWS_AS(rel_frobenius_diff(eye, {1, 0, 0}), DimensionMismatch);
}

TEST_CASE("block decomposition tiles the path") {
    std::vector<LatticePoint> path = {pt(0, 0), pt(1, 0),  pt(2, 0),
                                      pt(3, 0), pt(2, 0),  pt(1, 0)};
    BlockDecomposition dec = block_decomposition(path, 1);
    CHECK(dec.first_inside);
    CHECK(dec.inside_lengths == std::vector<std::uint64_t>{2, 1});
    CHECK(dec.outside_lengths == std::vector<std::uint64_t>{3});
    CHECK_THROWS_AS(block_decomposition({}, 1), InvalidSpec);

    JumpLaw lazy = make_lazy_srw(2);
    ImpuritySet imps = origin_sticky();
    WalkSpec spec = make_walk_spec(lazy, imps, pt(0, 0), 300, 11, RecordMode::FullPath);
    for (std::uint64_t t = 0; t < 100; ++t) {
        PathSummary s = simulate_trajectory(spec, t);
        BlockDecomposition d = block_decomposition(s.path, imps.cube_radius());
        std::uint64_t in_total = 0, out_total = 0;
        for (auto v : d.inside_lengths) in_total += v;
        for (auto v : d.outside_lengths) out_total += v;
        CHECK(in_total == s.rho);
        CHECK(out_total == s.outside_steps);
        CHECK(d.inside_lengths.size() == s.nu);
        CHECK(d.first_inside);  // the walk starts at the impurity
        // Runs alternate, so the counts differ by at most one.
        auto diff = static_cast<std::int64_t>(d.inside_lengths.size()) -
                    static_cast<std::int64_t>(d.outside_lengths.size());
        CHECK(diff >= -1);
        CHECK(diff <= 1);
    }
}

TEST_CASE("kolmogorov-smirnov distances, frozen cases") {
    // Two symmetric points against the standard normal.
    double d2 = ks_statistic({-1.0, 1.0}, normal_cdf);
    CHECK(d2 == doctest::Approx(0.341344746068543).epsilon(1e-12));
    // A point mass at the median.
    CHECK(ks_statistic({0.0}, normal_cdf) == doctest::Approx(0.5));
    // A stratified uniform sample against the uniform CDF.
    std::vector<double> u;
    for (int i = 0; i < 1000; ++i) u.push_back((i + 0.5) / 1000.0);
    double du = ks_statistic(u, [](double x) { return std::clamp(x, 0.0, 1.0); });
    CHECK(du == doctest::Approx(0.0005).epsilon(1e-9));
    CHECK_THROWS_AS(ks_statistic({}, normal_cdf), InsufficientData);

    // The histogram route agrees with the sample route.
    std::map<Coord, std::uint64_t> hist = {{-1, 1}, {1, 1}};
    double dh = ks_statistic_hist(
        hist, 2, [](Coord c) { return static_cast<double>(c); }, normal_cdf);
    CHECK(dh == doctest::Approx(d2).epsilon(1e-15));
    std::map<Coord, std::uint64_t> wide = {{-1, 250}, {0, 500}, {1, 250}};
    double dw = ks_statistic_hist(
        wide, 1000, [](Coord c) { return static_cast<double>(c) / 2.0; }, normal_cdf);
    double ds = ks_statistic(
        [] {
            std::vector<double> v(250, -0.5);
            v.insert(v.end(), 500, 0.0);
            v.insert(v.end(), 250, 0.5);
            return v;
        }(),
        normal_cdf);
    CHECK(dw == doctest::Approx(ds).epsilon(1e-15));

    // Drawing from the hypothesized law itself keeps the statistic inside the
    // 99% Kolmogorov band 1.63/sqrt(m).
    SplitMix64 gen(20260816);
    std::vector<double> self(10000);
    for (double& x : self) x = gen.next_unit();
    double dself = ks_statistic(self, [](double x) { return std::clamp(x, 0.0, 1.0); });
    CHECK(dself < 1.63 / 100.0);
}

TEST_CASE("gamma tail, chi-square tail, normal cdf") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-9));
    CHECK(normal_cdf(-1.959963985) == doctest::Approx(0.025).epsilon(1e-7));

    // Q(1/2, x) = erfc(sqrt(x)).
    for (double x : {0.09, 1.0, 2.5, 9.0})
        CHECK(gamma_q(0.5, x) == doctest::Approx(std::erfc(std::sqrt(x))).epsilon(1e-10));
    // Two degrees of freedom: the tail is exactly exp(-x/2).
    for (double x : {0.5, 2.0, 10.0, 40.0})
        CHECK(chi2_survival(x, 2) == doctest::Approx(std::exp(-x / 2.0)).epsilon(1e-10));
    CHECK(gamma_q(3.0, 0.0) == 1.0);
    CHECK(chi2_survival(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-8));
    CHECK(chi2_survival(45.31474661812586, 20) == doctest::Approx(0.001).epsilon(1e-6));
    CHECK(chi2_survival(-1.0, 5) == 1.0);
    CHECK_THROWS_AS(gamma_q(0.0, 1.0), InvalidSpec);
    CHECK_THROWS_AS(gamma_q(1.0, -1.0), InvalidSpec);
    CHECK_THROWS_AS(chi2_survival(1.0, 0), InvalidSpec);
}

TEST_CASE("contingency and homogeneity chi-square") {
    CHECK(chi2_independence_p({25, 25, 25, 25}) == doctest::Approx(1.0));
    // 2x2 with balanced margins and a diagonal excess of 10: stat = 4.
    CHECK(chi2_independence_p({30, 20, 20, 30}) ==
          doctest::Approx(std::erfc(std::sqrt(2.0))).epsilon(1e-10));
    CHECK(chi2_independence_p({5, 5, 0, 0}) == 1.0);
    CHECK(chi2_independence_p({0, 0, 0, 0}) == 1.0);

    std::map<std::uint64_t, std::uint64_t> a = {{0, 500}, {1, 300}, {2, 200}};
    CHECK(chi2_twosample_p(a, a) == doctest::Approx(1.0));
    std::map<std::uint64_t, std::uint64_t> b = {{0, 200}, {1, 300}, {2, 500}};
    CHECK(chi2_twosample_p(a, b) < 1e-10);
    // Too small to form two pooled cells: no evidence either way.
    std::map<std::uint64_t, std::uint64_t> tiny = {{0, 2}, {1, 1}};
    CHECK(chi2_twosample_p(tiny, tiny) == 1.0);

    std::map<std::vector<Coord>, std::uint64_t> va = {{{0, 0}, 400}, {{1, 0}, 600}};
    std::map<std::vector<Coord>, std::uint64_t> vb = {{{0, 0}, 420}, {{1, 0}, 580}};
    double p = chi2_twosample_p(va, vb);
    CHECK(p > 0.05);
    CHECK(p < 1.0);
}

TEST_CASE("total variation against an exact law") {
    JumpLaw lazy = make_lazy_srw(2);
    LatticePmf one_step = n_step_pmf(lazy, 1, 1);
    std::map<std::vector<Coord>, std::uint64_t> perfect = {
        {{0, 0}, 1}, {{1, 0}, 1}, {{-1, 0}, 1}, {{0, 1}, 1}, {{0, -1}, 1}};
    CHECK(tv_distance(perfect, 5, one_step) == doctest::Approx(0.0).epsilon(1e-12));

    std::map<std::vector<Coord>, std::uint64_t> point = {{{0, 0}, 1}};
    CHECK(tv_distance(point, 1, one_step) == doctest::Approx(0.8).epsilon(1e-12));

    std::map<std::vector<Coord>, std::uint64_t> far = {{{9, 9}, 5}};
    CHECK(tv_distance(far, 5, one_step) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(tv_distance(far, 0, one_step), InsufficientData);
}
