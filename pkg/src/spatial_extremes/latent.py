"""Metropolis-within-Gibbs sampler for the latent Gaussian GEV model.

Each GEV parameter ``b`` in (eta, tau, xi) is a latent field at the sites,
``f_b ~ N(X_b beta_b, alpha_b R(lambda_b))``, and maxima are independent GEV
given the fields. A sweep runs, in order: site-wise random-walk updates of
the three fields, conjugate normal draws of ``beta``, inverse-gamma draws of
the sills and uniform random-walk updates of the ranges.

The sweep is compiled with numba; all random numbers are drawn beforehand
from a numpy Generator, so chains are reproducible from their seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numba as nb
import numpy as np

from .errors import InvalidParameterError, InsufficientDataError, UnsupportedSpecError
from .margins import MaximaPanel
from .spatial import SiteSet

BLOCKS = ("eta", "tau", "xi")
CORR_CODES = {"exponential": 0, "stable": 1, "cauchy": 2}


# --- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class BlockPrior:
    """Priors for one latent block: ``beta ~ N(mu, Sigma)``, sill ~ IG, range ~ Gamma."""

    beta_mean: tuple
    beta_cov: tuple  # row-major square matrix
    sill_shape: float
    sill_scale: float
    range_shape: float = 5.0
    range_scale: float = 3.0

    def __post_init__(self):
        p = len(self.beta_mean)
        S = np.asarray(self.beta_cov, dtype=float)
        if S.shape != (p, p):
            raise InvalidParameterError("beta_cov must be p x p with p = len(beta_mean)")
        if not np.allclose(S, S.T) or np.any(np.linalg.eigvalsh(S) <= 0):
            raise InvalidParameterError("beta_cov must be symmetric positive definite")
        if min(self.sill_shape, self.sill_scale, self.range_shape, self.range_scale) <= 0:
            raise InvalidParameterError("prior shapes and scales must be positive")

    @property
    def p(self) -> int:
        return len(self.beta_mean)


def vague_block(p: int, sill_shape: float, sill_scale: float, beta_sd: float = 100.0,
                range_shape: float = 5.0, range_scale: float = 3.0) -> BlockPrior:
    return BlockPrior(tuple([0.0] * p), tuple(map(tuple, np.eye(p) * beta_sd**2)),
                      sill_shape, sill_scale, range_shape, range_scale)


@dataclass(frozen=True)
class PriorConfig:
    eta: BlockPrior
    tau: BlockPrior
    xi: BlockPrior

    @classmethod
    def default(cls, trend: tuple = (True, True, False)) -> "PriorConfig":
        """Default hyperparameters: sills IG(1, 12), IG(1, 1), IG(1, 0.04); ranges Gamma(5, 3)."""
        sills = ((1.0, 12.0), (1.0, 1.0), (1.0, 0.04))
        return cls(*(vague_block(3 if t else 1, a, b) for t, (a, b) in zip(trend, sills)))

    def block(self, b: str) -> BlockPrior:
        return getattr(self, b)


@dataclass(frozen=True)
class McmcConfig:
    """Sweep counts and random-walk scales.

    ``iterations`` counts all sweeps including the ``burn_in``; states at
    sweeps ``burn_in, burn_in + thin, ...`` are kept. ``rw_sites`` holds the
    per-block site-level step sizes (None means data-driven defaults) and
    ``rw_range`` the half-width of the uniform range proposal in km.
    """

    iterations: int = 20_000
    burn_in: int = 5_000
    thin: int = 10
    rw_sites: tuple | None = None
    rw_range: float = 2.0
    adapt: bool = True
    corr_family: str = "exponential"
    corr_kappa: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not (self.iterations >= self.burn_in >= 0) or self.thin < 1:
            raise InvalidParameterError("need iterations >= burn_in >= 0 and thin >= 1")
        if self.rw_range <= 0 or (self.rw_sites is not None and min(self.rw_sites) <= 0):
            raise InvalidParameterError("random-walk steps must be positive")
        if self.corr_family not in CORR_CODES:
            raise UnsupportedSpecError(f"latent fields support {sorted(CORR_CODES)}; got {self.corr_family!r}")


@dataclass
class ChainState:
    """Current values: ``fields`` (3, D), ``betas`` per block, ``sills`` (3,), ``ranges`` (3,)."""

    fields: np.ndarray
    betas: list
    sills: np.ndarray
    ranges: np.ndarray

    def copy(self) -> "ChainState":
        return ChainState(self.fields.copy(), [b.copy() for b in self.betas],
                          self.sills.copy(), self.ranges.copy())

    @property
    def eta_field(self):
        return self.fields[0]

    @property
    def tau_field(self):
        return self.fields[1]

    @property
    def xi_field(self):
        return self.fields[2]


def design_matrix(coords, p: int) -> np.ndarray:
    coords = np.atleast_2d(coords)
    one = np.ones((len(coords), 1))
    return one if p == 1 else np.hstack([one, coords])


# --- numba kernels ------------------------------------------------------------------


@nb.njit(cache=True)
def _gev_site_ll(y, eta, tau, xi):
    if tau <= 0.0:
        return -np.inf
    out = 0.0
    ltau = math.log(tau)
    for i in range(y.shape[0]):
        v = y[i]
        if v != v:
            continue
        s = (v - eta) / tau
        if abs(xi) < 1e-8:
            out += -ltau - s - math.exp(-s)
        else:
            t = 1.0 + xi * s
            if t <= 0.0:
                return -np.inf
            lt = math.log(t)
            out += -ltau - (1.0 + 1.0 / xi) * lt - math.exp(-lt / xi)
    return out


@nb.njit(cache=True)
def _corr(dist, lam, code, kappa):
    D = dist.shape[0]
    R = np.empty((D, D))
    for i in range(D):
        for j in range(D):
            s = dist[i, j] / lam
            if code == 0:
                R[i, j] = math.exp(-s)
            elif code == 1:
                R[i, j] = math.exp(-s**kappa)
            else:
                R[i, j] = (1.0 + s * s) ** (-kappa)
    return R


@nb.njit(cache=True)
def _chol_stats(R, r):
    """Cholesky log-determinant of R and quadratic form r' R^-1 r; (nan, nan) if not PD."""
    D = R.shape[0]
    L = np.zeros((D, D))
    for j in range(D):
        s = R[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return np.nan, np.nan
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, D):
            t = R[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    w = np.empty(D)
    for i in range(D):
        t = r[i]
        for k in range(i):
            t -= L[i, k] * w[k]
        w[i] = t / L[i, i]
    logdet = 0.0
    for i in range(D):
        logdet += 2.0 * math.log(L[i, i])
    return logdet, np.dot(w, w)


@nb.njit(cache=True)
def site_log_ratio(y, fields, b, d, prop, Qr, Qdd, use_lik):
    """Log acceptance ratio for moving ``fields[b, d]`` to ``prop``.

    ``Qr`` is ``Sigma^-1 (f_b - X beta)`` and ``Qdd`` the diagonal entry of ``Sigma^-1``.
    """
    cur = fields[b, d]
    delta = prop - cur
    lr = -(delta * Qr[d] + 0.5 * delta * delta * Qdd)
    if use_lik:
        e, t, x = fields[0, d], fields[1, d], fields[2, d]
        l0 = _gev_site_ll(y[d], e, t, x)
        if b == 0:
            e = prop
        elif b == 1:
            t = prop
        else:
            x = prop
        l1 = _gev_site_ll(y[d], e, t, x)
        if l1 == -np.inf:
            return -np.inf
        lr += l1 - l0
    return lr


@nb.njit(cache=True)
def range_log_ratio(r, dist, sill, lam_t, lam_p, shape, scale, code, kappa, use_mvn):
    """Log acceptance ratio for a range move ``lam_t -> lam_p`` (uniform proposal)."""
    if lam_p <= 0.0:
        return -np.inf
    lr = (shape - 1.0) * math.log(lam_p / lam_t) - (lam_p - lam_t) / scale
    if use_mvn:
        ld_p, q_p = _chol_stats(_corr(dist, lam_p, code, kappa), r)
        if ld_p != ld_p:
            return -np.inf
        ld_t, q_t = _chol_stats(_corr(dist, lam_t, code, kappa), r)
        lr += -0.5 * (ld_p - ld_t) - 0.5 * (q_p - q_t) / sill
    return lr


@nb.njit(cache=True)
def _precision(dist, sill, lam, code, kappa):
    R = _corr(dist, lam, code, kappa)
    return np.linalg.inv(R) / sill


@nb.njit(cache=True)
def _sweep(y, dist, X, pidx, fields, betas, sills, ranges,
           mu, Sinv, ig_a, ig_b, g_shape, g_scale, rw, rw_lam, code, kappa,
           z_site, u_site, z_beta, g_sill, u_lam, u_lam_acc,
           use_lik, use_mvn_range, steps, acc_site, acc_lam):
    """One sweep in place. ``steps`` is a 4-flag mask for Steps 1-4."""
    D = fields.shape[1]
    nb_ = 3
    resid = np.empty((nb_, D))
    if steps[0]:
        Q = np.empty((nb_, D, D))
        Qr = np.empty((nb_, D))
        for b in range(nb_):
            Q[b] = _precision(dist, sills[b], ranges[b], code, kappa)
            p0, p1 = pidx[b], pidx[b + 1]
            r = fields[b] - np.ascontiguousarray(X[b][:, : p1 - p0]) @ betas[p0:p1]
            Qr[b] = Q[b] @ r
        for d in range(D):
            for b in range(nb_):
                prop = fields[b, d] + rw[b, d] * z_site[d, b]
                if b == 1 and prop <= 0.0:
                    continue
                lr = site_log_ratio(y, fields, b, d, prop, Qr[b], Q[b, d, d], use_lik)
                if math.log(u_site[d, b]) < lr:
                    delta = prop - fields[b, d]
                    fields[b, d] = prop
                    for k in range(D):
                        Qr[b, k] += delta * Q[b, k, d]
                    acc_site[b, d] += 1
    for b in range(nb_):
        p0, p1 = pidx[b], pidx[b + 1]
        p = p1 - p0
        Xb = np.ascontiguousarray(X[b][:, :p])
        if steps[1]:
            Ri = np.linalg.inv(_corr(dist, ranges[b], code, kappa)) / sills[b]
            Sb = np.ascontiguousarray(Sinv[b][:p, :p])
            XtRi = np.ascontiguousarray(Xb.T) @ Ri
            P = Sb + XtRi @ Xb
            rhs = Sb @ np.ascontiguousarray(mu[b][:p]) + XtRi @ fields[b]
            P = 0.5 * (P + P.T)
            L = np.linalg.cholesky(P)
            mean = np.linalg.solve(P, rhs)
            # beta = mean + L^-T z has covariance P^-1
            betas[p0:p1] = mean + np.linalg.solve(np.ascontiguousarray(L.T), np.ascontiguousarray(z_beta[b, :p]))
        r = fields[b] - Xb @ betas[p0:p1]
        resid[b] = r
        if steps[2]:
            ld, q = _chol_stats(_corr(dist, ranges[b], code, kappa), r)
            sills[b] = (ig_b[b] + 0.5 * q) / g_sill[b]
        if steps[3]:
            lam_p = ranges[b] + rw_lam[b] * (2.0 * u_lam[b] - 1.0)
            lr = range_log_ratio(r, dist, sills[b], ranges[b], lam_p, g_shape[b], g_scale[b],
                                 code, kappa, use_mvn_range)
            if math.log(u_lam_acc[b]) < lr:
                ranges[b] = lam_p
                acc_lam[b] += 1


@nb.njit(cache=True)
def _run(y, dist, X, pidx, fields, betas, sills, ranges, mu, Sinv, ig_a, ig_b, g_shape, g_scale,
         rw, rw_lam, code, kappa, Z_site, U_site, Z_beta, G_sill, U_lam, U_lam_acc,
         use_lik, use_mvn_range, steps, start, burn_in, thin, adapt,
         out_fields, out_betas, out_sills, out_ranges, n_out, acc_site, acc_lam,
         win_site, win_lam):
    for t in range(Z_site.shape[0]):
        it = start + t
        if it == burn_in:
            win_site[:] = 0.0
            win_lam[:] = 0.0
        _sweep(y, dist, X, pidx, fields, betas, sills, ranges, mu, Sinv, ig_a, ig_b, g_shape,
               g_scale, rw, rw_lam, code, kappa, Z_site[t], U_site[t], Z_beta[t], G_sill[t],
               U_lam[t], U_lam_acc[t], use_lik, use_mvn_range, steps, win_site, win_lam)
        if it < burn_in:
            if adapt and (it + 1) % 50 == 0:
                # target 20-40% acceptance during burn-in only
                for b in range(3):
                    for d in range(fields.shape[1]):
                        rate = win_site[b, d] / 50.0
                        if rate < 0.2:
                            rw[b, d] *= 0.8
                        elif rate > 0.4:
                            rw[b, d] *= 1.25
                        win_site[b, d] = 0.0
                    rate = win_lam[b] / 50.0
                    if rate < 0.2:
                        rw_lam[b] *= 0.8
                    elif rate > 0.4:
                        rw_lam[b] *= 1.25
                    win_lam[b] = 0.0
            elif not adapt and (it + 1) % 50 == 0:
                win_site[:] = 0.0
                win_lam[:] = 0.0
        elif (it - burn_in) % thin == 0:
            k = n_out[0]
            out_fields[k] = fields
            out_betas[k] = betas
            out_sills[k] = sills
            out_ranges[k] = ranges
            n_out[0] = k + 1
    if start + Z_site.shape[0] > burn_in:
        acc_site += win_site
        acc_lam += win_lam


# --- model wrapper -----------------------------------------------------------------


class LatentModel:
    """Data, design and priors bundled for the numba kernels."""

    def __init__(self, panel: MaximaPanel, priors: PriorConfig | None = None,
                 corr_family: str = "exponential", corr_kappa: float = 1.0):
        self.panel = panel
        self.priors = priors or PriorConfig.default()
        self.y = np.ascontiguousarray(panel.values, dtype=float)
        self.D = panel.n_sites
        self.dist = panel.sites.distances()
        self.code = CORR_CODES[corr_family]
        self.kappa = float(corr_kappa)
        self.corr_family = corr_family
        if corr_family != "exponential":
            warnings.warn("non-exponential latent correlation is experimental", stacklevel=2)
        ps = [self.priors.block(b).p for b in BLOCKS]
        self.pidx = np.concatenate([[0], np.cumsum(ps)]).astype(np.int64)
        pmax = max(ps)
        self.X = np.zeros((3, self.D, pmax))
        self.mu = np.zeros((3, pmax))
        self.Sinv = np.zeros((3, pmax, pmax))
        for i, b in enumerate(BLOCKS):
            pr = self.priors.block(b)
            self.X[i, :, : pr.p] = design_matrix(panel.sites.coords, pr.p)
            self.mu[i, : pr.p] = pr.beta_mean
            self.Sinv[i, : pr.p, : pr.p] = np.linalg.inv(np.asarray(pr.beta_cov, dtype=float))
        self.ig_a = np.array([self.D / 2 + self.priors.block(b).sill_shape for b in BLOCKS])
        self.ig_b = np.array([self.priors.block(b).sill_scale for b in BLOCKS])
        self.g_shape = np.array([self.priors.block(b).range_shape for b in BLOCKS])
        self.g_scale = np.array([self.priors.block(b).range_scale for b in BLOCKS])

    def unpack_betas(self, flat) -> list:
        return [np.asarray(flat[self.pidx[i]:self.pidx[i + 1]], dtype=float) for i in range(3)]

    def pack(self, state: ChainState):
        return (np.ascontiguousarray(state.fields, dtype=float), np.concatenate(state.betas).astype(float),
                np.asarray(state.sills, dtype=float).copy(), np.asarray(state.ranges, dtype=float).copy())

    def initial_state(self) -> ChainState:
        """Moment-based site values, least-squares betas, prior-mean ranges."""
        fields = np.zeros((3, self.D))
        for d in range(self.D):
            v = self.y[d][~np.isnan(self.y[d])]
            if v.size < 2:
                raise InsufficientDataError(f"site {self.panel.sites.ids[d]} has fewer than 2 maxima")
            t = math.sqrt(6) * v.std(ddof=1) / math.pi
            fields[:, d] = (v.mean() - np.euler_gamma * t, max(t, 1e-3), 0.0)
        betas = []
        for i, b in enumerate(BLOCKS):
            p = self.priors.block(b).p
            X = self.X[i, :, :p]
            betas.append(np.linalg.lstsq(X, fields[i], rcond=None)[0])
        sills = np.array([max(np.var(fields[i] - self.X[i, :, : len(betas[i])] @ betas[i]), 1e-4)
                          for i in range(3)])
        sills[2] = self.priors.xi.sill_scale
        ranges = self.g_shape * self.g_scale
        return ChainState(fields, betas, sills, ranges)

    def default_rw(self) -> np.ndarray:
        rw = np.empty((3, self.D))
        for d in range(self.D):
            v = self.y[d][~np.isnan(self.y[d])]
            span = (v.max() - v.min()) if v.size else 1.0
            rw[0, d] = rw[1, d] = 0.5 * span / 10
        rw[2] = 0.05
        return rw

    def draws(self, rng: np.random.Generator, n: int):
        pmax = self.X.shape[2]
        return dict(
            Z_site=rng.standard_normal((n, self.D, 3)),
            U_site=1.0 - rng.random((n, self.D, 3)),
            Z_beta=rng.standard_normal((n, 3, pmax)),
            G_sill=np.column_stack([rng.standard_gamma(a, n) for a in self.ig_a]),
            U_lam=rng.random((n, 3)),
            U_lam_acc=1.0 - rng.random((n, 3)),
        )


# --- single-step wrappers (used by tests and for custom samplers) ---------------------


def _one_sweep(model: LatentModel, state: ChainState, rng, steps, rw=None, rw_lam=2.0,
               use_lik=True, use_mvn_range=True) -> ChainState:
    f, b, s, r = model.pack(state)
    dr = model.draws(rng, 1)
    rw = model.default_rw() if rw is None else np.broadcast_to(np.asarray(rw, dtype=float), (3, model.D)).copy()
    rw_lam = np.broadcast_to(np.asarray(rw_lam, dtype=float), (3,)).copy()
    _sweep(model.y, model.dist, model.X, model.pidx, f, b, s, r, model.mu, model.Sinv, model.ig_a,
           model.ig_b, model.g_shape, model.g_scale, rw, rw_lam, model.code, model.kappa,
           dr["Z_site"][0], dr["U_site"][0], dr["Z_beta"][0], dr["G_sill"][0], dr["U_lam"][0],
           dr["U_lam_acc"][0], use_lik, use_mvn_range, np.array(steps, dtype=np.bool_),
           np.zeros((3, model.D)), np.zeros(3))
    return ChainState(f, model.unpack_betas(b), s, r)


def step_gev_sites(state, model: LatentModel, rng, rw=None, use_lik: bool = True) -> ChainState:
    """Step 1: site-wise random-walk updates of the three latent fields."""
    return _one_sweep(model, state, rng, (True, False, False, False), rw=rw, use_lik=use_lik)


def step_regression(state, model: LatentModel, rng) -> ChainState:
    """Step 2: conjugate multivariate normal draw of each block's betas."""
    return _one_sweep(model, state, rng, (False, True, False, False))


def step_sill(state, model: LatentModel, rng) -> ChainState:
    """Step 3: inverse-gamma draw of each block's sill."""
    return _one_sweep(model, state, rng, (False, False, True, False))


def step_range(state, model: LatentModel, rng, rw_lam=2.0, use_mvn: bool = True) -> ChainState:
    """Step 4: uniform random-walk Metropolis update of each block's range."""
    return _one_sweep(model, state, rng, (False, False, False, True), rw_lam=rw_lam,
                      use_mvn_range=use_mvn)


def regression_posterior(state, model: LatentModel, block: int):
    """Mean and covariance of the Step 2 conditional for one block."""
    p = model.pidx[block + 1] - model.pidx[block]
    X = model.X[block, :, :p]
    R = np.exp(-model.dist / state.ranges[block]) if model.code == 0 else _corr(
        model.dist, state.ranges[block], model.code, model.kappa)
    Ri = np.linalg.inv(R) / state.sills[block]
    Sinv = model.Sinv[block, :p, :p]
    cov = np.linalg.inv(Sinv + X.T @ Ri @ X)
    mean = cov @ (Sinv @ model.mu[block, :p] + X.T @ Ri @ state.fields[block])
    return mean, cov


# --- chains -----------------------------------------------------------------------------


@dataclass
class ChainResult:
    fields: np.ndarray  # (S, 3, D)
    betas: np.ndarray  # (S, P)
    sills: np.ndarray  # (S, 3)
    ranges: np.ndarray  # (S, 3)
    beta_names: list
    acceptance: dict
    rw_final: dict
    sites: SiteSet
    config: McmcConfig
    corr_family: str = "exponential"
    corr_kappa: float = 1.0
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sills)

    def column_table(self):
        """(names, matrix) with one row per retained state."""
        D = self.fields.shape[2]
        names = ([f"{b}_{i}" for b in BLOCKS for i in range(D)] + self.beta_names
                 + [f"sill_{b}" for b in BLOCKS] + [f"range_{b}" for b in BLOCKS])
        mat = np.hstack([self.fields.reshape(len(self), 3 * D), self.betas, self.sills, self.ranges])
        return names, mat


def beta_names(priors: PriorConfig) -> list:
    out = []
    for b in BLOCKS:
        p = priors.block(b).p
        out += [f"beta_{b}_{i}" for i in range(p)]
    return out


def _summaries(names, mat):
    out = {}
    for n, col in zip(names, mat.T):
        if col.size == 0:
            continue
        q = np.quantile(col, [0.025, 0.5, 0.975])
        out[n] = {"mean": float(col.mean()), "sd": float(col.std()), "q025": float(q[0]),
                  "median": float(q[1]), "q975": float(q[2])}
    return out


def run_chain(panel: MaximaPanel, priors: PriorConfig | None = None, cfg: McmcConfig | None = None,
              init: ChainState | None = None, use_lik: bool = True, chunk: int = 2000,
              steps=(True, True, True, True), use_mvn_range: bool = True) -> ChainResult:
    """Run one chain; burn-in discarded, thinning applied.

    ``steps`` switches Steps 1-4 on or off and ``use_lik`` / ``use_mvn_range``
    drop the GEV likelihood and the latent density from the Step 1 and Step 4
    ratios; the defaults give the full sampler, the others serve prior-recovery checks.
    """
    cfg = cfg or McmcConfig()
    model = LatentModel(panel, priors, cfg.corr_family, cfg.corr_kappa)
    state = init.copy() if init is not None else model.initial_state()
    rng = np.random.default_rng(cfg.seed)
    f, b, s, r = model.pack(state)
    rw = (model.default_rw() if cfg.rw_sites is None
          else np.repeat(np.asarray(cfg.rw_sites, dtype=float)[:, None], model.D, axis=1))
    rw_lam = np.full(3, cfg.rw_range)
    n_keep = 0 if cfg.iterations <= cfg.burn_in else (cfg.iterations - cfg.burn_in - 1) // cfg.thin + 1
    P = int(model.pidx[-1])
    out_f = np.empty((n_keep, 3, model.D))
    out_b = np.empty((n_keep, P))
    out_s = np.empty((n_keep, 3))
    out_r = np.empty((n_keep, 3))
    n_out = np.zeros(1, dtype=np.int64)
    acc_site = np.zeros((3, model.D))
    acc_lam = np.zeros(3)
    win_site = np.zeros((3, model.D))
    win_lam = np.zeros(3)
    steps = np.asarray(steps, dtype=np.bool_)
    start = 0
    while start < cfg.iterations:
        n = min(chunk, cfg.iterations - start)
        dr = model.draws(rng, n)
        _run(model.y, model.dist, model.X, model.pidx, f, b, s, r, model.mu, model.Sinv, model.ig_a,
             model.ig_b, model.g_shape, model.g_scale, rw, rw_lam, model.code, model.kappa,
             dr["Z_site"], dr["U_site"], dr["Z_beta"], dr["G_sill"], dr["U_lam"], dr["U_lam_acc"],
             use_lik, use_mvn_range, steps, start, cfg.burn_in, cfg.thin, cfg.adapt,
             out_f, out_b, out_s, out_r, n_out, acc_site, acc_lam, win_site, win_lam)
        win_site[:] = 0.0
        win_lam[:] = 0.0
        start += n
    kept = max(cfg.iterations - cfg.burn_in, 0)
    acc = {"site": {bk: float(acc_site[i].mean() / kept) if kept else math.nan
                    for i, bk in enumerate(BLOCKS)},
           "range": {bk: float(acc_lam[i] / kept) if kept else math.nan for i, bk in enumerate(BLOCKS)}}
    res = ChainResult(out_f, out_b, out_s, out_r, beta_names(model.priors), acc,
                      {"site": rw.tolist(), "range": rw_lam.tolist()}, panel.sites, cfg,
                      cfg.corr_family, cfg.corr_kappa)
    names, mat = res.column_table()
    res.summary = _summaries(names, mat)
    for i, bk in enumerate(BLOCKS):
        if len(res):
            # practical range of the exponential correlation: -lambda log 0.05
            res.summary[f"h_plus_{bk}"] = _summaries(["x"], (-np.log(0.05) * out_r[:, i])[:, None])["x"]
    return res


# --- posterior predictive return-level maps -------------------------------------------


@dataclass
class ReturnMap:
    grid: np.ndarray
    mean: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    n_missing: int


def _return_level_arrays(T, eta, tau, xi):
    y = -math.log1p(-1.0 / T)
    gum = np.abs(xi) < 1e-8
    xs = np.where(gum, 1.0, xi)
    rl = np.where(gum, eta - tau * math.log(y), eta + tau / xs * np.expm1(-xs * math.log(y)))
    return np.where(tau > 0, rl, np.nan)


def posterior_return_map(samples: ChainResult, grid, T: float, seed=None,
                         max_states: int | None = None) -> ReturnMap:
    """Pointwise predictive T-year return levels on ``grid``.

    For each retained state the three fields are drawn on the grid from their
    conditional Gaussian law given the state's site values (pointwise marginal
    draws, which give the same per-cell law as joint field draws).
    """
    if len(samples) == 0:
        raise InsufficientDataError("no retained MCMC states")
    if not T > 1:
        raise InvalidParameterError("return period must exceed 1")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    rng = np.random.default_rng(seed)
    sites = samples.sites.coords
    S = len(samples)
    idx = np.arange(S) if max_states is None or max_states >= S else np.linspace(0, S - 1, max_states).astype(int)
    d_oo = samples.sites.distances()
    d_go = np.hypot(*(grid[:, None, :] - sites[None, :, :]).transpose(2, 0, 1))
    code = CORR_CODES[samples.corr_family]
    kappa = samples.corr_kappa
    pidx = np.concatenate([[0], np.cumsum([len([n for n in samples.beta_names if n.startswith(f"beta_{b}_")])
                                           for b in BLOCKS])])
    draws = np.empty((len(idx), len(grid)))
    for k, s in enumerate(idx):
        vals = []
        for i in range(3):
            beta = samples.betas[s, pidx[i]:pidx[i + 1]]
            lam = samples.ranges[s, i]
            R = _corr(d_oo, lam, code, kappa)
            Rgo = _corr_cross(d_go, lam, code, kappa)
            resid = samples.fields[s, i] - design_matrix(sites, len(beta)) @ beta
            W = np.linalg.solve(R, Rgo.T)
            mean = design_matrix(grid, len(beta)) @ beta + W.T @ resid
            var = samples.sills[s, i] * np.clip(1.0 - np.sum(Rgo * W.T, axis=1), 0.0, None)
            vals.append(mean + np.sqrt(var) * rng.standard_normal(len(grid)))
        draws[k] = _return_level_arrays(T, *vals)
    n_missing = int(np.isnan(draws).sum())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(draws, axis=0)
        q = np.nanquantile(draws, [0.025, 0.975], axis=0)
    return ReturnMap(grid, mean, q[0], q[1], n_missing)


def _corr_cross(d, lam, code, kappa):
    s = d / lam
    if code == 0:
        return np.exp(-s)
    if code == 1:
        return np.exp(-(s**kappa))
    return (1 + s * s) ** (-kappa)
