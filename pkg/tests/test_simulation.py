import json
import warnings

import numpy as np
import pytest
from scipy import stats

from spatial_extremes import (
    BrownResnick, CorrelationSpec, ExtremalT, GaussianCopula, GeometricGaussian, HuslerReiss,
    Independence, InvalidParameterError, MaximaPanel, RandomSetSchlather, Schlather, SimConfig, SiteSet,
    Smith, StudentTCopula, SurfaceModel, TrendSurface, UnsupportedSpecError, VariogramSpec,
    extremal_coefficient, fmadogram, simulate_copula_limit, simulate_maxstable, synth_dataset,
)
from spatial_extremes.evd import GevParams, gev_cdf
from spatial_extremes.simulation import simulate_frechet

EXP = CorrelationSpec("exponential", 34.1)
MAX_STABLE = {
    "smith": Smith.isotropic(259.0),
    "schlather": Schlather(EXP),
    "randomset": RandomSetSchlather(EXP, 40.0),
    "geometric_gaussian": GeometricGaussian(11.1, CorrelationSpec("whittle_matern", 700.0, 0.37)),
    "brown_resnick": BrownResnick(VariogramSpec(30.0, 0.74)),
}


def frechet_ks(values):
    return stats.kstest(values[np.isfinite(values)].ravel(), lambda z: np.exp(-1 / z)).statistic


@pytest.mark.parametrize("name", sorted(MAX_STABLE))
class TestMaxStable:
    def test_coincident_sites(self, name):
        sites = SiteSet.from_coords([[3, 4], [3, 4], [20, 1]])
        v = simulate_maxstable(MAX_STABLE[name], sites, 200, seed=1).values
        assert np.array_equal(v[0], v[1])

    def test_marginal_ks(self, name):
        # n * D = 10^4; few sites keep the pooled values close to independent
        sites = SiteSet.from_coords([[0, 0], [60, 0]])
        v = simulate_maxstable(MAX_STABLE[name], sites, 5000, seed=2).values
        assert frechet_ks(v) < 0.02

    def test_theta_matches_theory(self, name):
        spec = MAX_STABLE[name]
        sites = SiteSet.from_coords([[0, 0], [5, 0], [15, 0], [40, 0]])
        est = fmadogram(simulate_maxstable(spec, sites, 5000, seed=7), "frechet", pairs=[(0, 1), (0, 2), (0, 3)])
        want = extremal_coefficient(np.column_stack([est.distance, 0 * est.distance]), spec)
        assert np.all(np.abs(est.theta - want) < 3 * est.se + 1e-3)

    def test_max_stability(self, name):
        spec = MAX_STABLE[name]
        sites = SiteSet.from_coords([[0, 0], [15, 0]])
        base = fmadogram(simulate_maxstable(spec, sites, 4000, seed=11), "frechet")
        blocks = [simulate_maxstable(spec, sites, 4000, seed=100 + i).values for i in range(5)]
        pooled = MaximaPanel(sites, range(4000), np.max(blocks, axis=0) / 5)
        est = fmadogram(pooled, "frechet")
        assert frechet_ks(pooled.values) < 0.03
        assert abs(est.theta[0] - base.theta[0]) < 3 * np.hypot(est.se[0], base.se[0])

    def test_seed_determinism(self, name):
        sites = SiteSet.from_coords([[0, 0], [9, 9]])
        a = simulate_maxstable(MAX_STABLE[name], sites, 50, seed=5).values
        b = simulate_maxstable(MAX_STABLE[name], sites, 50, seed=5).values
        assert np.array_equal(a, b)


def test_smith_reference_pair():
    sites = SiteSet.from_coords([[0, 0], [12.4, 0]])
    est = fmadogram(simulate_maxstable(Smith.isotropic(259.0), sites, 20_000, seed=21), "frechet")
    assert abs(est.theta[0] - 1.300) < 0.03


def test_schlather_never_exceeds_bound():
    sites = SiteSet.from_coords([[0, 0], [50, 0], [400, 0]])
    est = fmadogram(simulate_maxstable(Schlather(EXP), sites, 5000, seed=4), "frechet")
    assert np.all(est.theta <= 1 + 1 / np.sqrt(2) + 0.05)


def test_point_budget_warning():
    sites = SiteSet.from_coords(np.column_stack([np.linspace(0, 500, 30), np.zeros(30)]))
    with pytest.warns(RuntimeWarning, match="budget"):
        simulate_maxstable(Smith.isotropic(4.0), sites, 2, SimConfig(max_points=5), seed=1)


def test_rejects_copula_spec():
    with pytest.raises(UnsupportedSpecError):
        simulate_maxstable(HuslerReiss(1, 1), SiteSet.from_coords([[0, 0]]), 2, seed=0)


def test_sim_config_validation():
    with pytest.raises(InvalidParameterError):
        SimConfig(copula_m=0)


class TestCopulaLimit:
    def test_gaussian_independent(self):
        sites = SiteSet.from_coords([[0, 0], [1e7, 0]])
        p = simulate_copula_limit(GaussianCopula(CorrelationSpec("exponential", 1.0)), sites, 20_000, 1, seed=3)
        assert abs(fmadogram(p, "frechet").theta[0] - 2.0) < 0.03
        assert frechet_ks(p.values) < 0.02

    def test_hr_zero_lag_comonotone(self):
        sites = SiteSet.from_coords([[5, 5], [5, 5]])
        p = simulate_copula_limit(HuslerReiss(10.0, 1.0), sites, 100, 50, seed=3)
        assert np.allclose(p.values[0], p.values[1])

    def test_extremal_t_reference(self):
        sites = SiteSet.from_coords([[0, 0], [50, 0]])
        spec = ExtremalT(1.0, CorrelationSpec("exponential", 1e-9))
        p = simulate_copula_limit(spec, sites, 20_000, 1000, seed=5)
        assert abs(fmadogram(p, "frechet").theta[0] - 1.707107) < 0.03

    def test_dispatch_uses_m_one_for_copulas(self):
        sites = SiteSet.from_coords([[0, 0], [10, 0]])
        spec = StudentTCopula(4.0, CorrelationSpec("exponential", 10.0))
        a = simulate_frechet(spec, sites, 30, SimConfig(copula_m=500), seed=9).values
        b = simulate_copula_limit(spec, sites, 30, 1, seed=9).values
        assert np.array_equal(a, b)


class TestSynthDataset:
    def test_independence_marginal_ks(self):
        m = SurfaceModel(TrendSurface(30, 0.05, -0.1), TrendSurface(8), TrendSurface(0.15))
        sites = SiteSet.from_coords([[0, 0], [40, 10], [80, 70]])
        passes = 0
        for seed in range(10):
            panel, _ = synth_dataset(Independence(), m, sites, range(300), seed=seed)
            # one 5% test per seed: Bonferroni over the three sites
            pv = []
            for d in range(3):
                g = GevParams(*(float(a[d]) for a in m.arrays(sites.coords)))
                pv.append(stats.kstest(panel.values[d], lambda y: gev_cdf(y, g)).pvalue)
            passes += min(pv) > 0.05 / 3
        assert passes >= 9

    def test_truth_round_trip(self):
        m = SurfaceModel(TrendSurface(30), TrendSurface(8), TrendSurface(0.1))
        sites = SiteSet.from_coords([[0, 0], [5, 5]])
        _, truth = synth_dataset(Smith.isotropic(100.0), m, sites, [2000, 2001], seed=3)
        back = json.loads(json.dumps(truth))
        assert back == truth
        assert truth["spec"]["family"] == "Smith" and truth["surface"]["eta"] == [30, 0.0, 0.0]

    def test_exchangeable_under_relabeling(self):
        m = SurfaceModel(TrendSurface(30), TrendSurface(8), TrendSurface(0.1))
        a = SiteSet.from_coords([[0, 0], [10, 0], [0, 10]])
        b = SiteSet.from_coords([[0, 0], [0, 10], [10, 0]])
        pa, _ = synth_dataset(Smith.isotropic(100.0), m, a, range(20), seed=3)
        pb, _ = synth_dataset(Smith.isotropic(100.0), m, b, range(20), seed=3)
        # the isotropic Smith law is invariant under the reflection swapping sites 1 and 2
        assert pa.values.shape == pb.values.shape
        assert stats.ks_2samp(pa.values[1], pb.values[2]).pvalue > 1e-3
