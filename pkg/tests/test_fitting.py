import math

import numpy as np
import pytest
from scipy import stats
from hypothesis import given, strategies as st

from spatial_extremes import (
    AllStartsFailedError, CorrelationSpec, FitConfig, GaussianCopula, GevParams, Independence,
    MaximaPanel, ModelTemplate, OptimConfig, PairSet, ParameterVector, Schlather, SingularHessianError,
    SiteSet, Smith, SurfaceModel, TrendSurface, bivariate_logdensity, fit_model, full_nll_elliptical,
    InvalidParameterError, UnsupportedSpecError, gev_cdf, gev_logpdf, optimize_multistart, pairwise_nll, sandwich_and_clic, score_and_hessian, synth_dataset,
    to_unit_frechet,
)
from spatial_extremes.fitting import MARGIN_NAMES

MARG = {"eta_b0": 20.0, "eta_b1": 0.05, "eta_b2": -0.1, "tau_b0": 5.0, "tau_b1": 0.0, "tau_b2": 0.0,
        "xi_b0": 0.1, "xi_b1": 0.0, "xi_b2": 0.0}


def gev_here(params, x):
    return GevParams(params["eta_b0"] + params["eta_b1"] * x[0] + params["eta_b2"] * x[1],
                     params["tau_b0"] + params["tau_b1"] * x[0] + params["tau_b2"] * x[1],
                     params["xi_b0"] + params["xi_b1"] * x[0] + params["xi_b2"] * x[1])


def surface(params):
    return SurfaceModel(*(TrendSurface(*(params[f"{b}_b{i}"] for i in range(3))) for b in ("eta", "tau", "xi")))


def panel_of(coords, values):
    return MaximaPanel(SiteSet.from_coords(coords), range(np.shape(values)[1]), values)


@pytest.fixture(scope="module")
def schlather_panel():
    sites = SiteSet.from_coords([[0, 0], [12, 3], [5, 20], [25, 15]])
    spec = Schlather(CorrelationSpec("exponential", 20.0))
    panel, _ = synth_dataset(spec, surface(MARG), sites, range(3), seed=4)
    return panel


class TestPairwiseNll:
    def test_independence_one_pair_one_year(self):
        coords = [[0, 0], [10, 5]]
        y = np.array([[24.0], [19.5]])
        t = ModelTemplate("independence")
        got = pairwise_nll(MARG, panel_of(coords, y), t)
        want = -sum(float(gev_logpdf(y[d, 0], gev_here(MARG, coords[d]))) for d in range(2))
        assert got == pytest.approx(want, rel=1e-12)

    def test_year_additivity(self, schlather_panel):
        t = ModelTemplate("schlather")
        params = dict(MARG, lam=20.0)
        total = pairwise_nll(params, schlather_panel, t)
        parts = sum(pairwise_nll(params, panel_of(schlather_panel.sites.coords, schlather_panel.values[:, [i]]), t)
                    for i in range(3))
        assert total == pytest.approx(parts, rel=1e-12)

    def test_brute_force_schlather(self, schlather_panel):
        t = ModelTemplate("schlather")
        params = dict(MARG, lam=20.0)
        spec = Schlather(CorrelationSpec("exponential", 20.0))
        c = schlather_panel.sites.coords
        ll = 0.0
        for i in range(3):
            for j in range(4):
                for k in range(j + 1, 4):
                    gj, gk = gev_here(params, c[j]), gev_here(params, c[k])
                    yj, yk = schlather_panel.values[j, i], schlather_panel.values[k, i]
                    zj, zk = float(to_unit_frechet(yj, gj)), float(to_unit_frechet(yk, gk))
                    ll += float(bivariate_logdensity(zj, zk, c[k] - c[j], spec))
                    # Jacobian dz/dy = z^(1 - xi) / tau
                    for z, g in ((zj, gj), (zk, gk)):
                        ll += (1 - g.xi) * math.log(z) - math.log(g.tau)
        assert pairwise_nll(params, schlather_panel, t) == pytest.approx(-ll, rel=1e-10)

    def test_pair_and_year_permutation(self, schlather_panel, rng):
        t = ModelTemplate("schlather")
        params = dict(MARG, lam=20.0)
        pairs = PairSet.build(schlather_panel.sites.coords)
        perm = rng.permutation(len(pairs))
        shuffled = PairSet(pairs.idx[perm], pairs.lags[perm], pairs.distances[perm])
        yperm = panel_of(schlather_panel.sites.coords, schlather_panel.values[:, ::-1])
        a = pairwise_nll(params, schlather_panel, t, pairs)
        assert pairwise_nll(params, schlather_panel, t, shuffled) == pytest.approx(a, rel=1e-12)
        assert pairwise_nll(params, yperm, t) == pytest.approx(a, rel=1e-12)

    def test_missing_cell_drops_only_its_pairs(self, schlather_panel):
        t = ModelTemplate("schlather")
        params = dict(MARG, lam=20.0)
        v = schlather_panel.values.copy()
        v[0, 1] = np.nan
        holed = panel_of(schlather_panel.sites.coords, v)
        full_pairs = PairSet.build(schlather_panel.sites.coords)
        # year 1 keeps only the three pairs not touching site 0
        y1 = panel_of(schlather_panel.sites.coords[1:], schlather_panel.values[1:, [1]])
        rest = panel_of(schlather_panel.sites.coords, schlather_panel.values[:, [0, 2]])
        want = pairwise_nll(params, y1, t) + pairwise_nll(params, rest, t, full_pairs)
        assert pairwise_nll(params, holed, t) == pytest.approx(want, rel=1e-12)

    def test_out_of_support_is_inf(self):
        # xi > 0 support is y > eta - tau/xi = -30
        y = np.array([[-100.0], [20.0]])
        assert pairwise_nll(MARG, panel_of([[0, 0], [1, 1]], y), ModelTemplate("independence")) == math.inf

    def test_nonpositive_dependence_parameter_is_inf(self, schlather_panel):
        assert pairwise_nll(dict(MARG, lam=-1.0), schlather_panel, ModelTemplate("schlather")) == math.inf

    def test_empty_pairs(self, schlather_panel):
        with pytest.raises(InvalidParameterError):
            pairwise_nll(dict(MARG, lam=20.0), schlather_panel, ModelTemplate("schlather"),
                         PairSet.build(schlather_panel.sites.coords, cutoff=0.1))


class TestFullElliptical:
    def test_single_site_is_marginal(self):
        y = np.array([[21.0, 25.0, 18.0]])
        want = -float(np.sum(gev_logpdf(y[0], gev_here(MARG, [3, 4]))))
        got = full_nll_elliptical(dict(MARG, lam=10.0), panel_of([[3, 4]], y), ModelTemplate("gaussian"))
        assert got == pytest.approx(want, rel=1e-12)

    def test_zero_correlation_is_independence(self, rng):
        coords = [[0, 0], [1e5, 0], [0, 1e5]]
        y = 20 + 5 * rng.gumbel(size=(3, 6))
        t = ModelTemplate("gaussian")
        got = full_nll_elliptical(dict(MARG, lam=1.0), panel_of(coords, y), t)
        want = -sum(float(np.sum(gev_logpdf(y[d], gev_here(MARG, coords[d])))) for d in range(3))
        assert got == pytest.approx(want, rel=1e-10)

    def test_bivariate_gaussian_by_hand(self):
        coords = [[0, 0], [10, 0]]
        lam = 10 / math.log(2)  # rho = 0.5
        rho = 0.5
        y = np.array([[22.0, 15.0], [26.0, 19.0]])
        ll = 0.0
        for i in range(2):
            x = []
            for d in range(2):
                g = gev_here(MARG, coords[d])
                x.append(stats.norm.ppf(float(gev_cdf(y[d, i], g))))
                ll += float(gev_logpdf(y[d, i], g))
            q = (rho ** 2 * (x[0] ** 2 + x[1] ** 2) - 2 * rho * x[0] * x[1]) / (2 * (1 - rho ** 2))
            ll += -0.5 * math.log(1 - rho ** 2) - q
        got = full_nll_elliptical(dict(MARG, lam=lam), panel_of(coords, y), ModelTemplate("gaussian"))
        assert got == pytest.approx(-ll, rel=1e-10)

    def test_bivariate_student_vs_scipy(self):
        coords = [[0, 0], [10, 0]]
        lam, nu = 10 / math.log(2), 4.0
        R = np.array([[1, 0.5], [0.5, 1]])
        y = np.array([[22.0], [26.0]])
        ll = 0.0
        x = []
        for d in range(2):
            g = gev_here(MARG, coords[d])
            x.append(stats.t.ppf(float(gev_cdf(y[d, 0], g)), nu))
            ll += float(gev_logpdf(y[d, 0], g)) - stats.t.logpdf(x[-1], nu)
        ll += stats.multivariate_t(np.zeros(2), R, df=nu).logpdf(x)
        got = full_nll_elliptical(dict(MARG, lam=lam, nu=nu), panel_of(coords, y), ModelTemplate("student"))
        assert got == pytest.approx(-ll, rel=1e-9)


class TestOptimizer:
    def test_quadratic_bowl(self):
        res = optimize_multistart(lambda x: float((x[0] - 3) ** 2), [[0.0]], seed=0)
        assert abs(res.x[0] - 3) < 1e-3 and res.converged

    def test_two_basins(self):
        # shallow local minimum at -2, global at +3
        def f(x):
            return float(min((x[0] + 2) ** 2 + 1.0, (x[0] - 3) ** 2))

        res = optimize_multistart(f, [[-4.0], [-2.5], [-1.0], [2.0], [5.0]], seed=0)
        assert abs(res.x[0] - 3) < 1e-3 and len(res.trace) == 5
        assert min(t["value"] for t in res.trace) == res.value

    def test_infinite_starts_skipped(self):
        def f(x):
            return math.inf if x[0] < 0 else float((x[0] - 1) ** 2)

        res = optimize_multistart(f, [[-1.0], [0.5]], seed=0)
        assert abs(res.x[0] - 1) < 1e-3 and res.trace[0]["value"] == math.inf

    def test_all_starts_failed(self):
        with pytest.raises(AllStartsFailedError):
            optimize_multistart(lambda x: math.inf, [[0.0], [1.0]])

    def test_deterministic(self):
        def f(x):
            return float(np.sum((x - 1) ** 2) + np.sin(5 * x[0]))

        def starts(rng, i):
            return rng.normal(size=2)

        a = optimize_multistart(f, starts, OptimConfig(starts=3), seed=9)
        b = optimize_multistart(f, starts, OptimConfig(starts=3), seed=9)
        assert np.array_equal(a.x, b.x) and a.trace == b.trace


class TestSandwich:
    def test_normal_location(self, rng):
        sigma, n = 2.0, 500
        y = rng.normal(1.0, sigma, n)
        J, K = score_and_hessian(lambda x: 0.5 * ((y - x[0]) / sigma) ** 2, np.array([y.mean()]))
        assert J[0, 0] == pytest.approx(n / sigma ** 2, rel=1e-6)
        assert K[0, 0] == pytest.approx(J[0, 0], rel=0.15)

    def test_information_identity(self, rng):
        y = rng.normal(1.0, 2.0, 500)

        def nll(x):
            return 0.5 * ((y - x[0]) / math.exp(x[1])) ** 2 + x[1]

        xhat = np.array([y.mean(), math.log(y.std())])
        J, K = score_and_hessian(nll, xhat)
        ev = np.linalg.eigvals(np.linalg.solve(J, K)).real
        assert np.all((ev > 0.7) & (ev < 1.4))

    def test_quadratic_exact(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        J, _ = score_and_hessian(lambda x: np.array([0.5 * x @ A @ x, 0.0]), np.array([0.3, -0.2]))
        assert np.allclose(J, A, atol=1e-6)

    @pytest.mark.parametrize("p", [1, 3, 5])
    def test_k_equals_j_is_aic(self, p, rng):
        M = rng.normal(size=(p, p))
        J = M @ M.T + p * np.eye(p)
        cov, tr, clic = sandwich_and_clic(J, J, -12.5)
        assert tr == pytest.approx(p, rel=1e-12)
        assert clic == pytest.approx(25.0 + 2 * p, rel=1e-12)
        assert np.allclose(cov, np.linalg.inv(J), atol=1e-12)

    def test_diagonal(self):
        cov, tr, _ = sandwich_and_clic(2 * np.eye(3), np.eye(3), 0.0)
        assert np.allclose(cov, np.eye(3) / 4) and tr == pytest.approx(1.5)

    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_random_spd(self, p, seed):
        r = np.random.default_rng(seed)
        A, B = r.normal(size=(p, p)), r.normal(size=(p, p))
        J, K = A @ A.T + np.eye(p), B @ B.T + 0.1 * np.eye(p)
        cov, tr, _ = sandwich_and_clic(J, K, 0.0)
        Ji = np.linalg.inv(J)
        assert np.allclose(cov, Ji @ K @ Ji, rtol=1e-8, atol=1e-10)
        assert np.allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) > -1e-10)
        assert tr == pytest.approx(np.trace(Ji @ K), rel=1e-8)

    def test_singular(self):
        with pytest.raises(SingularHessianError) as e:
            sandwich_and_clic(np.array([[1.0, 1.0], [1.0, 1.0]]), np.eye(2), 0.0)
        assert e.value.condition_number > 1e14


class TestParameterVector:
    def test_default_mask(self):
        vals = {k: v for k, v in MARG.items() if k not in ("xi_b1", "xi_b2")}
        pv = ParameterVector.for_template(ModelTemplate("smith"), dict(vals, sigma11=100.0))
        assert pv.free_names == [n for n in pv.names if n not in ("xi_b1", "xi_b2")]
        # supplying a value frees the slope
        pv = ParameterVector.for_template(ModelTemplate("smith"), dict(MARG, sigma11=100.0))
        assert pv.free.all()

    def test_unknown_name(self):
        with pytest.raises(InvalidParameterError):
            ParameterVector.for_template(ModelTemplate("smith"), {"lam": 1.0})

    def test_dep_names(self):
        assert ModelTemplate("smith", anisotropic=True).dep_names == ("sigma11", "sigma12", "sigma22")
        assert ModelTemplate("extremal_t", corr_family="whittle_matern").dep_names == ("nu", "lam", "kappa")
        assert ModelTemplate("independence").dep_names == ()


@pytest.fixture(scope="module")
def iid_panel():
    r = np.random.default_rng(77)
    sites = SiteSet.from_coords(r.uniform(0, 50, (10, 2)))
    truth = dict(MARG, eta_b0=30.0, tau_b0=8.0)
    panel, _ = synth_dataset(Independence(), surface(truth), sites, range(50), seed=78)
    return panel, truth


class TestFitModel:
    def test_independence_recovery(self, iid_panel):
        panel, truth = iid_panel
        rep = fit_model(panel, ModelTemplate("independence"), seed=1)
        d = rep.estimates.as_dict()
        for i, n in enumerate(rep.estimates.names):
            if rep.estimates.free[i]:
                assert abs(d[n] - truth[n]) < 3 * rep.std_errors[i], n
        assert rep.clic == pytest.approx(-2 * rep.ell_p + 2 * rep.tr_jk, rel=1e-12)
        # the likelihood is infinite off the support, so a fitted model keeps every cell
        assert rep.excluded_cells == 0
        assert rep.ell_p == pytest.approx(-pairwise_nll(rep.estimates, panel, ModelTemplate("independence")),
                                          rel=1e-12)

    def test_all_fixed_echo(self, iid_panel):
        panel, truth = iid_panel
        t = ModelTemplate("independence")
        rep = fit_model(panel, t, initial=truth, fixed=MARGIN_NAMES)
        assert rep.estimates.as_dict() == truth
        assert rep.ell_p == -pairwise_nll(truth, panel, t)
        assert rep.tr_jk == 0 and not rep.estimates.free.any()

    def test_shape_slopes_stay_fixed_unless_given(self, iid_panel):
        panel, truth = iid_panel
        t = ModelTemplate("independence")
        rep = fit_model(panel, t, seed=1)
        d = rep.estimates.as_dict()
        assert d["xi_b1"] == 0.0 and d["xi_b2"] == 0.0
        assert set(rep.estimates.free_names).isdisjoint({"xi_b1", "xi_b2"})
        rep = fit_model(panel, t, initial={"xi_b1": 0.0, "xi_b2": 0.0}, seed=1)
        assert {"xi_b1", "xi_b2"} <= set(rep.estimates.free_names)

    def test_fixed_needs_value(self, iid_panel):
        with pytest.raises(InvalidParameterError):
            fit_model(iid_panel[0], ModelTemplate("smith"), fixed=["sigma11"])

    def test_full_likelihood_restricted(self, iid_panel):
        with pytest.raises(UnsupportedSpecError):
            fit_model(iid_panel[0], ModelTemplate("smith"), cfg=FitConfig(likelihood="full"))

    def test_smith_multistart_stability(self):
        r = np.random.default_rng(5)
        sites = SiteSet.from_coords(r.uniform(0, 40, (8, 2)))
        panel, _ = synth_dataset(Smith.isotropic(150.0), surface(MARG), sites, range(30), seed=6)
        rep = fit_model(panel, ModelTemplate("smith"), cfg=FitConfig(optim=OptimConfig(starts=5)), seed=2)
        vals = [t["value"] for t in rep.trace]
        assert len(vals) == 5 and max(vals) - min(vals) < 0.5
