"""Simulation of max-stable processes and copula-limit panels at finite site sets.

Max-stable fields are drawn exactly with the normalized spectral
representation: each Poisson point picks a reference site ``T`` uniformly,
draws the profile under the law tilted by its value at ``T``, and rescales it
so the profile sums to ``D`` over the sites. Profiles are then bounded by
``D``, which gives an exact stopping rule once ``D * zeta`` falls below the
smallest running maximum.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import math
import warnings

import numpy as np
from scipy import special

from .dependence import (
    BrownResnick, ExtremalT, GaussianCopula, GeometricGaussian, HuslerReiss, Independence,
    RandomSetSchlather, Schlather, Smith, StudentTCopula, hr_a,
)
from .errors import InvalidParameterError, UnsupportedSpecError
from .margins import MaximaPanel, SurfaceModel, panel_from_frechet
from .spatial import SiteSet, corr_matrix

SIMULABLE = (Smith, Schlather, RandomSetSchlather, GeometricGaussian, BrownResnick, Independence)
COPULA_LIMIT = (HuslerReiss, ExtremalT, GaussianCopula, StudentTCopula)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``max_points`` caps the Poisson points per year; hitting it emits a
    warning since the remaining points could still raise the maxima.
    """

    copula_m: int = 1000
    mc_replicates: int = 100
    max_points: int = 100_000
    seed: int | None = None

    def __post_init__(self):
        if self.copula_m < 1 or self.mc_replicates < 1 or self.max_points < 1:
            raise InvalidParameterError("simulation counts must be positive")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _sqrt_psd(C: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (C + C.T))
    return U * np.sqrt(np.clip(w, 0.0, None))


def _unique_sites(coords: np.ndarray):
    """Unique coordinates and the map back; coincident sites share one draw."""
    uniq, inv = np.unique(np.round(coords, 12), axis=0, return_inverse=True)
    return uniq, inv.ravel()


class _ProfileSampler:
    """Draws log tilted profiles ``log Y^(T)`` for a batch of reference sites ``T``."""

    def __init__(self, spec, coords: np.ndarray):
        self.spec = spec
        self.coords = coords
        D = len(coords)
        sites = SiteSet.from_coords(coords)
        if isinstance(spec, (Schlather, RandomSetSchlather, GeometricGaussian)):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self.R = corr_matrix(sites, spec.corr)
            self.L = _sqrt_psd(self.R)
        elif isinstance(spec, BrownResnick):
            dist = sites.distances()
            g = spec.vario.gamma(dist)
            g0 = g[0]
            # W(x) - W(x_0) has covariance g(x) + g(y) - g(x - y) (semivariogram units, times 2 / 2)
            self.G = g
            self.L = _sqrt_psd(g0[:, None] + g0[None, :] - g)
        elif isinstance(spec, Smith):
            self.Lom = np.linalg.cholesky(spec.omega)
            self.omega_inv = np.linalg.inv(spec.omega)
        self.D = D

    def __call__(self, T: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        spec, A, D = self.spec, len(T), self.D
        if isinstance(spec, Smith):
            X = self.coords[T] + rng.standard_normal((A, 2)) @ self.Lom.T
            diff = self.coords[None, :, :] - X[:, None, :]
            return -0.5 * np.einsum("adi,ij,adj->ad", diff, self.omega_inv, diff)
        if isinstance(spec, GeometricGaussian):
            s2 = spec.sigma2
            e = rng.standard_normal((A, D)) @ self.L.T
            return math.sqrt(s2) * e + s2 * self.R[T]
        if isinstance(spec, BrownResnick):
            W = rng.standard_normal((A, D)) @ self.L.T
            WT = W[np.arange(A), T]
            return W - WT[:, None] - self.G[T]
        # Schlather and random-set Schlather: Rayleigh value at T, Gaussian conditional elsewhere
        e = rng.standard_normal((A, D)) @ self.L.T
        u = np.sqrt(-2.0 * np.log1p(-rng.random(A)))
        eps = e + self.R[T] * (u - e[np.arange(A), T])[:, None]
        eps[np.arange(A), T] = u
        with np.errstate(divide="ignore"):
            logy = np.log(np.maximum(eps, 0.0))
        if isinstance(spec, RandomSetSchlather):
            r = spec.disk_radius
            ang = rng.random(A) * 2 * math.pi
            rad = r * np.sqrt(rng.random(A))
            X = self.coords[T] + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
            d2 = np.sum((self.coords[None, :, :] - X[:, None, :]) ** 2, axis=2)
            logy = np.where(d2 < r * r, logy, -np.inf)
        return logy


def simulate_maxstable(spec, sites: SiteSet, n: int, cfg: SimConfig | None = None,
                       seed=None) -> MaximaPanel:
    """``n`` independent years of a max-stable field at ``sites`` on the unit Frechet scale."""
    if not isinstance(spec, SIMULABLE):
        raise UnsupportedSpecError(f"cannot simulate {type(spec).__name__} as a max-stable field")
    cfg = cfg or SimConfig()
    rng = _rng(cfg.seed if seed is None else seed)
    years = list(range(1, n + 1))
    if isinstance(spec, Independence):
        return MaximaPanel(sites, years, 1.0 / rng.standard_exponential((len(sites), n)))
    coords, inv = _unique_sites(sites.coords)
    D = len(coords)
    sampler = _ProfileSampler(spec, coords)
    Z = np.zeros((n, D))
    gamma = np.zeros(n)
    active = np.arange(n)
    logD = math.log(D)
    for _ in range(cfg.max_points):
        if active.size == 0:
            break
        gamma[active] += rng.standard_exponential(active.size)
        T = rng.integers(0, D, active.size)
        logy = sampler(T, rng)
        logy = logy - special.logsumexp(logy, axis=1, keepdims=True) + logD
        Z[active] = np.maximum(Z[active], np.exp(logy) / gamma[active, None])
        # later points contribute at most D / Gamma, and Gamma only grows
        done = D / gamma[active] <= Z[active].min(axis=1)
        active = active[~done]
    else:
        if active.size:
            warnings.warn(f"{active.size} year(s) hit the {cfg.max_points}-point budget; "
                          "maxima may be biased low", RuntimeWarning, stacklevel=2)
    return MaximaPanel(sites, years, Z[:, inv].T)


def _base_params(spec, sites: SiteSet, m: int):
    """Base correlation matrix and degrees of freedom (None for Gaussian)."""
    if isinstance(spec, HuslerReiss):
        if m < 2:
            raise InvalidParameterError("the Husler-Reiss limit needs m >= 2")
        a = hr_a(sites.lags(), spec)
        return 1.0 - a * a / (4.0 * math.log(m)), None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        R = corr_matrix(sites, spec.corr)
    return R, (spec.nu if isinstance(spec, (ExtremalT, StudentTCopula)) else None)


def simulate_copula_limit(spec, sites: SiteSet, n: int, m: int, seed=None,
                          chunk: int = 2_000_000) -> MaximaPanel:
    """Componentwise maxima of ``m`` base-copula draws, on unit Frechet margins.

    The base is Gaussian for Husler-Reiss and Gaussian copulas (for HR the
    correlation is ``1 - a(h)^2 / (4 log m)``) and Student-t for extremal-t
    and Student copulas. The margin transform uses ``U* = max(U)^m``.
    """
    if not isinstance(spec, COPULA_LIMIT):
        raise UnsupportedSpecError(f"no copula-limit sampler for {type(spec).__name__}")
    if m < 1:
        raise InvalidParameterError("m must be >= 1")
    rng = _rng(seed)
    R, nu = _base_params(spec, sites, m)
    coords, inv = _unique_sites(sites.coords)
    # rows of R for the unique sites (coincident sites are identical in R)
    first = np.array([np.flatnonzero(inv == k)[0] for k in range(len(coords))])
    L = _sqrt_psd(R[np.ix_(first, first)])
    D = len(coords)
    xmax = np.full((n, D), -np.inf)
    per = max(1, chunk // max(1, n * D))
    left = m
    while left > 0:
        k = min(per, left)
        x = rng.standard_normal((k, n, D)) @ L.T
        if nu is not None:
            x = x / np.sqrt(rng.chisquare(nu, (k, n, 1)) / nu)
        np.maximum(xmax, x.max(axis=0), out=xmax)
        left -= k
    if nu is None:
        logF = special.log_ndtr(xmax)
    else:
        logF = np.log1p(-special.stdtr(nu, -xmax))
    z = -1.0 / (m * logF)
    return MaximaPanel(sites, list(range(1, n + 1)), z[:, inv].T)


def simulate_frechet(spec, sites: SiteSet, n: int, cfg: SimConfig | None = None, seed=None):
    """Dispatch to the max-stable or copula-limit sampler."""
    cfg = cfg or SimConfig()
    if isinstance(spec, COPULA_LIMIT):
        m = 1 if isinstance(spec, (GaussianCopula, StudentTCopula)) else cfg.copula_m
        return simulate_copula_limit(spec, sites, n, m, seed=cfg.seed if seed is None else seed)
    return simulate_maxstable(spec, sites, n, cfg, seed=seed)


def spec_record(spec) -> dict:
    """Plain-data description of a dependence spec (for truth records and reports)."""
    out = {"family": type(spec).__name__}
    for k, v in vars(spec).items():
        if hasattr(v, "__dataclass_fields__"):
            d = {kk: vv for kk, vv in vars(v).items()}
            out[k] = {kk: (np.asarray(vv).tolist() if isinstance(vv, np.ndarray) else vv)
                      for kk, vv in d.items()}
        else:
            out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
    return out


def synth_dataset(spec, surface: SurfaceModel, sites: SiteSet, years, seed=None,
                  cfg: SimConfig | None = None):
    """Synthetic maxima with dependence ``spec`` and GEV margins from ``surface``.

    Returns ``(panel, truth)`` where ``truth`` records every generating parameter.
    """
    years = list(years)
    fr = simulate_frechet(spec, sites, len(years), cfg, seed=seed)
    fr = MaximaPanel(sites, years, fr.values)
    panel = panel_from_frechet(fr, surface)
    truth = {
        "spec": spec_record(spec),
        "surface": {k: list(getattr(surface, k).coefs) for k in ("eta", "tau", "xi")},
        "sites": {"ids": list(sites.ids), "coords": sites.coords.tolist()},
        "years": years,
        "seed": seed,
        "sim_config": asdict(cfg or SimConfig()),
    }
    return panel, truth
