"""Pairwise composite and full likelihoods, multi-start optimization, sandwich variance and CLIC."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .dependence import (
    BrownResnick, ExtremalT, GaussianCopula, GeometricGaussian, HuslerReiss, Independence,
    RandomSetSchlather, Schlather, Smith, StudentTCopula, _kind, extremal_coefficient,
    logdensity_from_params, pair_params, _normal_scores, _student_scores,
)
from .errors import (
    AllStartsFailedError, InvalidParameterError, NotPositiveDefiniteError, NonPositiveScaleError,
    SingularHessianError, UnsupportedSpecError,
)
from .diagnostics import fmadogram
from .evd import student_t_logpdf
from .margins import (
    MaximaPanel, SurfaceModel, TrendSurface, gev_logpdf_arrays, log_frechet_arrays, panel_to_frechet,
)
from .spatial import CorrelationSpec, VariogramSpec, cholesky

MARGIN_NAMES = ("eta_b0", "eta_b1", "eta_b2", "tau_b0", "tau_b1", "tau_b2", "xi_b0", "xi_b1", "xi_b2")
# slots fixed at zero unless the caller frees them
MARGIN_FIXED_BY_DEFAULT = ("xi_b1", "xi_b2")

FAMILIES = ("smith", "schlather", "randomset", "geometric_gaussian", "brown_resnick",
            "husler_reiss", "extremal_t", "gaussian", "student", "independence")

POSITIVE = {"sigma11", "sigma22", "lam", "kappa", "nu", "sigma2", "radius", "alpha"}
UPPER = {"alpha": 2.0}


# --- model templates and parameter vectors -----------------------------------------


@dataclass(frozen=True)
class ModelTemplate:
    """Dependence family plus structural options; parameter values live elsewhere."""

    family: str
    corr_family: str = "exponential"
    anisotropic: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedSpecError(f"unknown family {self.family!r}")

    @property
    def corr_names(self) -> tuple:
        return ("lam",) if self.corr_family == "exponential" else ("lam", "kappa")

    @property
    def dep_names(self) -> tuple:
        f = self.family
        if f == "smith":
            return ("sigma11", "sigma12", "sigma22") if self.anisotropic else ("sigma11",)
        if f in ("schlather", "gaussian"):
            return self.corr_names
        if f == "randomset":
            return self.corr_names + ("radius",)
        if f == "geometric_gaussian":
            return ("sigma2",) + self.corr_names
        if f == "brown_resnick":
            return ("lam", "alpha")
        if f == "husler_reiss":
            return ("lam", "kappa")
        if f in ("extremal_t", "student"):
            return ("nu",) + self.corr_names
        return ()

    @property
    def names(self) -> tuple:
        return MARGIN_NAMES + self.dep_names

    def upper(self, name: str) -> float:
        if name == "kappa" and (self.family == "husler_reiss" or self.corr_family == "stable"):
            return 2.0
        return UPPER.get(name, math.inf)

    def build_spec(self, dep: dict):
        """Dependence spec from a name -> value mapping."""
        f = self.family
        if f == "independence":
            return Independence()
        if f == "smith":
            if self.anisotropic:
                om = np.array([[dep["sigma11"], dep["sigma12"]], [dep["sigma12"], dep["sigma22"]]])
                return Smith(om)
            return Smith.isotropic(dep["sigma11"])
        if f == "brown_resnick":
            return BrownResnick(VariogramSpec(dep["lam"], dep["alpha"]))
        if f == "husler_reiss":
            return HuslerReiss(dep["lam"], dep["kappa"])
        corr = CorrelationSpec(self.corr_family, dep["lam"], dep.get("kappa"))
        if f == "schlather":
            return Schlather(corr)
        if f == "randomset":
            return RandomSetSchlather(corr, dep["radius"])
        if f == "geometric_gaussian":
            return GeometricGaussian(dep["sigma2"], corr)
        if f == "extremal_t":
            return ExtremalT(dep["nu"], corr)
        if f == "gaussian":
            return GaussianCopula(corr)
        return StudentTCopula(dep["nu"], corr)


@dataclass
class ParameterVector:
    """Named parameters on the natural scale with a free/fixed mask."""

    names: tuple
    values: np.ndarray
    free: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.values = np.asarray(self.values, dtype=float).copy()
        self.free = np.asarray(self.free, dtype=bool).copy()
        if not (len(self.names) == len(self.values) == len(self.free)):
            raise InvalidParameterError("names, values and mask must have equal length")
        if not np.all(np.isfinite(self.values[self.free])):
            raise InvalidParameterError("free parameters must be finite")

    @classmethod
    def for_template(cls, template: ModelTemplate, values: dict | None = None,
                     fixed: Sequence[str] = ()) -> "ParameterVector":
        values = dict(values or {})
        unknown = set(values) - set(template.names)
        if unknown:
            raise InvalidParameterError(f"unknown parameter(s) {sorted(unknown)}")
        vals = [values.get(n, 0.0 if n in MARGIN_NAMES else math.nan) for n in template.names]
        free = [n not in fixed and not (n in MARGIN_FIXED_BY_DEFAULT and n not in values)
                for n in template.names]
        return cls(template.names, vals, free)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))

    @property
    def free_names(self) -> list:
        return [n for n, f in zip(self.names, self.free) if f]

    def with_free(self, x) -> "ParameterVector":
        v = self.values.copy()
        v[self.free] = x
        return ParameterVector(self.names, v, self.free)


def surface_from(params: dict) -> SurfaceModel:
    return SurfaceModel(
        TrendSurface(params["eta_b0"], params["eta_b1"], params["eta_b2"]),
        TrendSurface(params["tau_b0"], params["tau_b1"], params["tau_b2"]),
        TrendSurface(params["xi_b0"], params["xi_b1"], params["xi_b2"]),
    )


# --- pair sets -----------------------------------------------------------------------


@dataclass
class PairSet:
    """Site-index pairs ``j < k`` with their lag vectors and distances."""

    idx: np.ndarray
    lags: np.ndarray
    distances: np.ndarray
    cutoff: float | None = None

    @classmethod
    def build(cls, coords, cutoff: float | None = None) -> "PairSet":
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        j, k = np.triu_indices(len(coords), 1)
        lags = coords[k] - coords[j]
        d = np.hypot(lags[:, 0], lags[:, 1])
        keep = np.ones(len(d), dtype=bool) if cutoff is None else d <= cutoff
        return cls(np.column_stack([j[keep], k[keep]]), lags[keep], d[keep], cutoff)

    def __len__(self):
        return len(self.idx)


# --- objectives -----------------------------------------------------------------------

_RETREAT = (NonPositiveScaleError, InvalidParameterError, NotPositiveDefiniteError,
            FloatingPointError, np.linalg.LinAlgError)


def _margins(panel: MaximaPanel, params: dict, xi_barrier: bool):
    eta, tau, xi = surface_from(params).arrays(panel.sites.coords)
    if xi_barrier and np.any(np.abs(xi) >= 0.5):
        return None
    y = panel.values
    lz = log_frechet_arrays(y, eta[:, None], tau[:, None], xi[:, None])
    observed = ~np.isnan(y)
    if np.any(np.isnan(lz) & observed):
        return None
    jac = (1 - xi[:, None]) * lz - np.log(tau)[:, None]
    return lz, jac, observed


def pairwise_loglik_by_year(params: dict, panel: MaximaPanel, template: ModelTemplate,
                            pairs: PairSet, xi_barrier: bool = False) -> np.ndarray | None:
    """Per-year pairwise log-likelihood contributions, or ``None`` where the model breaks down."""
    try:
        spec = template.build_spec({n: params[n] for n in template.dep_names})
        m = _margins(panel, params, xi_barrier)
        if m is None:
            return None
        lz, jac, observed = m
        j, k = pairs.idx[:, 0], pairs.idx[:, 1]
        p = {key: (np.asarray(v)[:, None] if np.ndim(v) else v)
             for key, v in pair_params(spec, pairs.lags).items()}
        both = observed[j] & observed[k]
        zj = np.exp(np.where(both, lz[j], 0.0))
        zk = np.exp(np.where(both, lz[k], 0.0))
        with np.errstate(all="ignore"):
            ld = logdensity_from_params(_kind(spec), zj, zk, p)
        ll = ld + jac[j] + jac[k]
        ll = np.where(both, ll, 0.0)
        if not np.all(np.isfinite(ll)):
            return None
        return ll.sum(axis=0)
    except _RETREAT:
        return None


def pairwise_nll(theta: ParameterVector | dict, panel: MaximaPanel, template: ModelTemplate,
                 pairs: PairSet | None = None, xi_barrier: bool = False) -> float:
    """Negative pairwise log-likelihood; ``+inf`` on support or density breakdown."""
    params = theta.as_dict() if isinstance(theta, ParameterVector) else dict(theta)
    pairs = pairs if pairs is not None else PairSet.build(panel.sites.coords)
    if len(pairs) == 0:
        raise InvalidParameterError("pair set is empty")
    by_year = pairwise_loglik_by_year(params, panel, template, pairs, xi_barrier)
    return math.inf if by_year is None else -float(by_year.sum())


def marginal_loglik_by_year(params: dict, panel: MaximaPanel, xi_barrier: bool = False):
    """Per-year log-likelihood under independence across sites (full likelihood)."""
    try:
        eta, tau, xi = surface_from(params).arrays(panel.sites.coords)
    except _RETREAT:
        return None
    if xi_barrier and np.any(np.abs(xi) >= 0.5):
        return None
    y = panel.values
    obs = ~np.isnan(y)
    lp = gev_logpdf_arrays(np.where(obs, y, eta[:, None]), eta[:, None], tau[:, None], xi[:, None])
    lp = np.where(obs, lp, 0.0)
    if not np.all(np.isfinite(lp)):
        return None
    return lp.sum(axis=0)


def elliptical_loglik_by_year(params: dict, panel: MaximaPanel, template: ModelTemplate,
                              xi_barrier: bool = False):
    """Per-year full log-likelihood of a Gaussian or Student-t copula with GEV margins."""
    if template.family not in ("gaussian", "student"):
        raise UnsupportedSpecError("full likelihood is available for Gaussian/Student copulas only")
    try:
        spec = template.build_spec({n: params[n] for n in template.dep_names})
        m = _margins(panel, params, xi_barrier)
        if m is None:
            return None
        lz, jac, observed = m
        from .spatial import corr_matrix
        R = corr_matrix(panel.sites, spec.corr)
        z = np.exp(np.where(observed, lz, 0.0))
        marg = np.where(observed, jac - 2 * lz - 1.0 / z, 0.0)
        student = isinstance(spec, StudentTCopula)
        x = _student_scores(z, spec.nu) if student else _normal_scores(z)
        out = marg.sum(axis=0)
        patterns: dict = {}
        for i in range(panel.n_years):
            patterns.setdefault(observed[:, i].tobytes(), []).append(i)
        for key, cols in patterns.items():
            mask = np.frombuffer(key, dtype=bool)
            if not mask.any():
                continue
            L = cholesky(R[np.ix_(mask, mask)])
            xs = x[np.ix_(mask, cols)]
            w = np.linalg.solve(L, xs)
            quad = np.sum(w * w, axis=0)
            logdet = 2 * np.sum(np.log(np.diag(L)))
            d = int(mask.sum())
            if student:
                nu = spec.nu
                lc = (special.gammaln((nu + d) / 2) - special.gammaln(nu / 2)
                      - 0.5 * d * math.log(nu * math.pi) - 0.5 * logdet
                      - (nu + d) / 2 * np.log1p(quad / nu)
                      - student_t_logpdf(xs, nu).sum(axis=0))
            else:
                lc = -0.5 * logdet - 0.5 * (quad - np.sum(xs * xs, axis=0))
            out[cols] += lc
        return out if np.all(np.isfinite(out)) else None
    except _RETREAT:
        return None


def full_nll_elliptical(theta, panel: MaximaPanel, template: ModelTemplate,
                        xi_barrier: bool = False) -> float:
    params = theta.as_dict() if isinstance(theta, ParameterVector) else dict(theta)
    by_year = elliptical_loglik_by_year(params, panel, template, xi_barrier)
    return math.inf if by_year is None else -float(by_year.sum())


# --- optimizer -------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimConfig:
    starts: int = 3
    max_evals: int = 4000
    ftol: float = 1e-8
    xtol: float = 1e-6
    jitter: float = 0.1
    restarts: int = 2

    def __post_init__(self):
        if self.starts < 1 or self.max_evals < 1:
            raise InvalidParameterError("starts and max_evals must be positive")


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    trace: list
    n_evals: int
    converged: bool


def _simplex(x0: np.ndarray, scale) -> np.ndarray:
    scale = np.broadcast_to(np.asarray(scale, dtype=float), x0.shape)
    return np.vstack([x0] + [x0 + np.eye(len(x0))[i] * scale[i] for i in range(len(x0))])


def optimize_multistart(objective: Callable[[np.ndarray], float], starts, cfg: OptimConfig | None = None,
                        seed=None, simplex_scale=0.1) -> OptimResult:
    """Nelder-Mead from several starts; returns the best terminal point.

    ``starts`` is either an array of starting points or a callable
    ``starts(rng, i)`` returning the ``i``-th start.
    """
    cfg = cfg or OptimConfig()
    rng = np.random.default_rng(seed)
    if callable(starts):
        points = [np.asarray(starts(rng, i), dtype=float) for i in range(cfg.starts)]
    else:
        points = [np.asarray(s, dtype=float) for s in np.atleast_2d(starts)]
    trace, best, n_evals = [], None, 0

    def f(x):
        v = objective(x)
        return v if np.isfinite(v) else math.inf

    for x0 in points:
        v0 = f(x0)
        n_evals += 1
        if not np.isfinite(v0):
            trace.append({"start": x0.tolist(), "value": math.inf, "converged": False})
            continue
        if x0.size == 0:
            res_x, res_v, conv = x0, v0, True
        else:
            res_x, res_v, conv = x0, v0, False
            for _ in range(cfg.restarts + 1):
                res = optimize.minimize(
                    f, res_x, method="Nelder-Mead",
                    options=dict(initial_simplex=_simplex(res_x, simplex_scale), xatol=cfg.xtol,
                                 fatol=cfg.ftol, maxfev=cfg.max_evals, adaptive=len(x0) > 4))
                n_evals += res.nfev
                improved = res_v - res.fun
                res_x, res_v, conv = res.x, float(res.fun), bool(res.success)
                if improved <= max(cfg.ftol, 1e-10 * abs(res_v)):
                    break
                simplex_scale = np.maximum(np.abs(np.asarray(simplex_scale) * 0.1), 1e-4)
        trace.append({"start": x0.tolist(), "value": res_v, "converged": conv})
        if best is None or res_v < best[1]:
            best = (np.asarray(res_x, dtype=float), res_v, conv)
    if best is None:
        raise AllStartsFailedError(f"objective infinite at all {len(points)} start(s)")
    return OptimResult(best[0], best[1], trace, n_evals, best[2])


# --- sandwich information ---------------------------------------------------------------


def _step(x):
    return np.maximum(1e-4 * np.abs(x), 1e-6)


def score_and_hessian(per_year: Callable[[np.ndarray], np.ndarray], x: np.ndarray):
    """Observed information ``J`` of the summed negative objective and score variability ``K``.

    ``per_year(x)`` returns the (n,) per-year negative objective contributions.
    Central differences use relative step 1e-4 with absolute floor 1e-6.
    """
    x = np.asarray(x, dtype=float)
    p = len(x)
    h = _step(x)
    f0 = per_year(x)
    fp, fm = [], []
    for i in range(p):
        e = np.zeros(p)
        e[i] = h[i]
        fp.append(per_year(x + e))
        fm.append(per_year(x - e))
    if any(v is None for v in fp + fm) or f0 is None:
        raise SingularHessianError("objective not finite around the optimum", condition_number=math.inf)
    S = np.array([(a - b) / (2 * hi) for a, b, hi in zip(fp, fm, h)])  # (p, n) per-year scores
    J = np.empty((p, p))
    F0 = f0.sum()
    for i in range(p):
        J[i, i] = (fp[i].sum() - 2 * F0 + fm[i].sum()) / h[i] ** 2
        for k in range(i):
            ei = np.zeros(p); ei[i] = h[i]
            ek = np.zeros(p); ek[k] = h[k]
            vals = [per_year(x + s1 * ei + s2 * ek) for s1, s2 in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
            if any(v is None for v in vals):
                raise SingularHessianError("objective not finite around the optimum",
                                           condition_number=math.inf)
            pp, pm, mp, mm = (v.sum() for v in vals)
            J[i, k] = J[k, i] = (pp - pm - mp + mm) / (4 * h[i] * h[k])
    Sc = S - S.mean(axis=1, keepdims=True)
    K = Sc @ Sc.T
    return J, K


def sandwich_and_clic(J, K, ell_p: float):
    """Godambe covariance ``J^-1 K J^-1``, ``tr(J^-1 K)`` and CLIC."""
    J = np.asarray(J, dtype=float)
    K = np.asarray(K, dtype=float)
    if J.size == 0:
        return np.zeros((0, 0)), 0.0, -2.0 * ell_p
    cond = float(np.linalg.cond(J))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularHessianError(f"Hessian is singular (condition number {cond:.3g})", condition_number=cond)
    JiK = np.linalg.solve(J, K)
    cov = np.linalg.solve(J, JiK.T).T
    cov = 0.5 * (cov + cov.T)
    tr = float(np.trace(JiK))
    return cov, tr, -2.0 * ell_p + 2.0 * tr


# --- the fitting driver -----------------------------------------------------------------


@dataclass
class FitReport:
    estimates: ParameterVector
    std_errors: np.ndarray
    ell_p: float
    clic: float
    tr_jk: float
    n_pairs: int
    converged: bool
    starts_used: int
    seed: int | None
    excluded_cells: int
    family: str = ""
    likelihood: str = "pairwise"
    covariance: np.ndarray | None = None
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "likelihood": self.likelihood,
            "names": list(self.estimates.names),
            "estimates": self.estimates.values.tolist(),
            "free": self.estimates.free.tolist(),
            "std_errors": np.asarray(self.std_errors).tolist(),
            "ell_p": self.ell_p,
            "clic": self.clic,
            "tr_jk": self.tr_jk,
            "n_pairs": self.n_pairs,
            "converged": self.converged,
            "starts_used": self.starts_used,
            "seed": self.seed,
            "excluded_cells": self.excluded_cells,
        }


@dataclass(frozen=True)
class FitConfig:
    likelihood: str = "pairwise"  # or "full"
    pair_cutoff: float | None = None
    xi_barrier: bool = False
    optim: OptimConfig = OptimConfig()


class _Transform:
    """Internal coordinates: centred and scaled trend slopes, log for positive parameters."""

    def __init__(self, names: Sequence[str], coords: np.ndarray):
        self.names = list(names)
        c = np.atleast_2d(coords)
        self.center = c.mean(axis=0)
        self.scale = np.where(c.std(axis=0) > 0, c.std(axis=0), 1.0)
        self.log = np.array([n in POSITIVE for n in self.names])

    def to_internal(self, nat: dict) -> dict:
        u = dict(nat)
        for blk in ("eta", "tau", "xi"):
            b0, b1, b2 = (nat[f"{blk}_b{i}"] for i in range(3))
            u[f"{blk}_b0"] = b0 + b1 * self.center[0] + b2 * self.center[1]
            u[f"{blk}_b1"] = b1 * self.scale[0]
            u[f"{blk}_b2"] = b2 * self.scale[1]
        for n, lg in zip(self.names, self.log):
            if lg:
                u[n] = math.log(nat[n]) if nat[n] > 0 else math.nan
        return u

    def to_natural(self, u: dict) -> dict:
        nat = dict(u)
        for blk in ("eta", "tau", "xi"):
            c0, s1, s2 = (u[f"{blk}_b{i}"] for i in range(3))
            b1, b2 = s1 / self.scale[0], s2 / self.scale[1]
            nat[f"{blk}_b1"], nat[f"{blk}_b2"] = b1, b2
            nat[f"{blk}_b0"] = c0 - b1 * self.center[0] - b2 * self.center[1]
        for n, lg in zip(self.names, self.log):
            if lg:
                nat[n] = math.exp(min(u[n], 700.0))
        return nat


def moment_margins(panel: MaximaPanel, idx=None) -> dict:
    """Method-of-moments Gumbel fit per site, pooled into trend surfaces by least squares."""
    idx = range(panel.n_sites) if idx is None else idx
    rows, eta, tau = [], [], []
    for d in idx:
        v = panel.values[d][~np.isnan(panel.values[d])]
        if v.size < 2:
            continue
        t = math.sqrt(6) * v.std(ddof=1) / math.pi
        rows.append([1.0, *panel.sites.coords[d]])
        tau.append(t)
        eta.append(v.mean() - np.euler_gamma * t)
    X = np.array(rows)
    rank_ok = len(rows) >= 3 and np.linalg.matrix_rank(X) == 3
    be = np.linalg.lstsq(X, eta, rcond=None)[0] if rank_ok else [np.mean(eta), 0, 0]
    bt = np.linalg.lstsq(X, tau, rcond=None)[0] if rank_ok else [np.mean(tau), 0, 0]
    out = {f"eta_b{i}": float(b) for i, b in enumerate(be)}
    out.update({f"tau_b{i}": float(b) for i, b in enumerate(bt)})
    out.update({"xi_b0": 0.05, "xi_b1": 0.0, "xi_b2": 0.0})
    # keep the scale positive over the sites
    tau_x = surface_from(out).tau(panel.sites.coords)
    if np.any(tau_x <= 0):
        out.update({"tau_b0": float(np.mean(tau)), "tau_b1": 0.0, "tau_b2": 0.0})
    return out


DEFAULT_DEP_START = {"sigma11": 100.0, "sigma12": 0.0, "sigma22": 100.0, "lam": 30.0, "kappa": 1.0,
                     "nu": 3.0, "sigma2": 2.0, "radius": 50.0, "alpha": 1.0}


def madogram_start(panel: MaximaPanel, template: ModelTemplate, fixed: dict | None = None) -> dict:
    """Dependence start from least-squares matching of the F-madogram theta curve."""
    names = [n for n in template.dep_names if n not in (fixed or {})]
    dep0 = {n: DEFAULT_DEP_START[n] for n in template.dep_names}
    dep0.update(fixed or {})
    if not names or panel.n_sites < 2:
        return dep0
    try:
        est = fmadogram(panel, "empirical")
    except Exception:  # noqa: BLE001 - start heuristics never fail the fit
        return dep0
    lags = panel.sites.coords[est.pairs[:, 1]] - panel.sites.coords[est.pairs[:, 0]]
    if template.family == "smith" and not template.anisotropic:
        # scale the default to the sites' spacing
        dep0["sigma11"] = float(np.median(est.distance)) ** 2 / 4
    if "lam" in names:
        dep0["lam"] = float(np.median(est.distance))

    def loss(v):
        dep = dict(dep0)
        for n, x in zip(names, v):
            dep[n] = math.exp(x) if n in POSITIVE else x
        try:
            th = extremal_coefficient(lags, template.build_spec(dep))
        except Exception:  # noqa: BLE001
            return math.inf
        return float(np.sum((np.asarray(th) - est.theta) ** 2))

    x0 = [math.log(dep0[n]) if n in POSITIVE else dep0[n] for n in names]
    res = optimize.minimize(loss, x0, method="Nelder-Mead", options=dict(maxfev=400 * len(names)))
    if np.isfinite(res.fun):
        for n, x in zip(names, res.x):
            dep0[n] = math.exp(x) if n in POSITIVE else float(x)
        for n in names:
            dep0[n] = min(dep0[n], 0.999 * template.upper(n))
    return dep0


def fit_model(panel: MaximaPanel, template: ModelTemplate, initial: dict | None = None,
              fixed: Sequence[str] = (), cfg: FitConfig | None = None, seed=None) -> FitReport:
    """Maximum composite (or full) likelihood fit with sandwich standard errors.

    Parameters
    ----------
    panel : MaximaPanel
        Observed maxima (fitting sites only are used when roles are set).
    template : ModelTemplate
    initial : dict, optional
        Starting or fixed values by parameter name; missing values are filled
        from moment and madogram heuristics.
    fixed : names held at their ``initial`` value.
    """
    cfg = cfg or FitConfig()
    if panel.roles is not None:
        panel = panel.subset_sites(panel.role_indices("fit"))
    initial = dict(initial or {})
    missing_fixed = [n for n in fixed if n not in initial]
    if missing_fixed:
        raise InvalidParameterError(f"fixed parameter(s) need values: {missing_fixed}")
    start = moment_margins(panel)
    start.update({k: v for k, v in initial.items() if k in MARGIN_NAMES})
    start.update(madogram_start(panel, template, {k: v for k, v in initial.items()
                                                  if k in template.dep_names}))
    theta0 = ParameterVector.for_template(template, start, fixed=fixed)
    # the moment start fills every slot, so the default mask follows the caller's values only
    for n in MARGIN_FIXED_BY_DEFAULT:
        theta0.free[theta0.names.index(n)] = n in initial and n not in fixed
    free_idx = np.flatnonzero(theta0.free)
    tr = _Transform(theta0.names, panel.sites.coords)

    if cfg.likelihood == "full":
        if template.family in ("gaussian", "student"):
            def by_year(params):
                return elliptical_loglik_by_year(params, panel, template, cfg.xi_barrier)
        elif template.family == "independence":
            def by_year(params):
                return marginal_loglik_by_year(params, panel, cfg.xi_barrier)
        else:
            raise UnsupportedSpecError(f"no full likelihood for {template.family}")
        n_pairs = 0
    else:
        pairs = PairSet.build(panel.sites.coords, cfg.pair_cutoff)
        if len(pairs) == 0:
            raise InvalidParameterError("pair set is empty")
        n_pairs = len(pairs)

        def by_year(params):
            return pairwise_loglik_by_year(params, panel, template, pairs, cfg.xi_barrier)

    u0 = tr.to_internal(theta0.as_dict())
    base_u = np.array([u0[n] for n in theta0.names])

    def unpack(x):
        u = base_u.copy()
        u[free_idx] = x
        return tr.to_natural(dict(zip(theta0.names, u)))

    def in_bounds(nat):
        return all(nat[n] <= template.upper(n) for n in template.dep_names)

    def neg_by_year(x):
        nat = unpack(x)
        if not in_bounds(nat):
            return None
        v = by_year(nat)
        return None if v is None else -v

    def objective(x):
        v = neg_by_year(x)
        return math.inf if v is None else float(v.sum())

    x0 = base_u[free_idx]
    if np.any(~np.isfinite(x0)):
        raise InvalidParameterError("non-finite starting value for a free parameter")
    scale = np.maximum(0.1 * np.abs(x0), 0.05)

    def starts(rng, i):
        return x0 if i == 0 else x0 + cfg.optim.jitter * scale * rng.standard_normal(len(x0)) * 3

    if len(free_idx) == 0:
        val = objective(x0)
        if not np.isfinite(val):
            raise AllStartsFailedError("objective infinite at the supplied parameters")
        est = theta0.with_free(x0)
        excluded = len(panel_to_frechet(panel, surface_from(est.as_dict()), strict=False).excluded_cells)
        return FitReport(est, np.zeros(len(est.names)), -val, 2 * val, 0.0, n_pairs, True, 0, seed,
                         excluded, template.family, cfg.likelihood, np.zeros((0, 0)), [])
    res = optimize_multistart(objective, starts, cfg.optim, seed=seed, simplex_scale=scale)
    nat = unpack(res.x)
    est = ParameterVector(theta0.names, [nat[n] for n in theta0.names], theta0.free)
    ell = -res.value
    J, K = score_and_hessian(neg_by_year, res.x)
    cov_u, tr_jk, clic = sandwich_and_clic(J, K, ell)
    # delta method to the natural scale
    G = np.empty((len(free_idx), len(free_idx)))
    for i in range(len(free_idx)):
        e = np.zeros(len(free_idx))
        e[i] = 1e-6 * max(1.0, abs(res.x[i]))
        up, dn = unpack(res.x + e), unpack(res.x - e)
        G[:, i] = [(up[n] - dn[n]) / (2 * e[i]) for n in np.array(theta0.names)[free_idx]]
    cov = G @ cov_u @ G.T
    se = np.zeros(len(theta0.names))
    se[free_idx] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    excluded = len(panel_to_frechet(panel, surface_from(nat), strict=False).excluded_cells)
    return FitReport(est, se, ell, clic, tr_jk, n_pairs, res.converged, len(res.trace), seed, excluded,
                     template.family, cfg.likelihood, cov, res.trace)
