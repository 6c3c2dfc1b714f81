"""Correlation functions, variograms and Gaussian random field simulation.

Coordinates are planar kilometres. Lags are 2-vectors; a scalar lag ``h`` is
read as the vector ``(h, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings
from typing import Sequence

import numpy as np
from scipy import special

from .errors import InvalidParameterError, NotPositiveDefiniteError

FAMILIES = ("whittle_matern", "cauchy", "stable", "exponential")

JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def as_lag(h) -> np.ndarray:
    """Coerce ``h`` to an array of lag vectors with trailing dimension 2."""
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        return np.array([float(h), 0.0])
    if h.shape[-1] != 2:
        raise InvalidParameterError(f"lag vectors need a trailing dimension of 2, got {h.shape}")
    return h


def lags_from_distances(d, direction=(1.0, 0.0)) -> np.ndarray:
    """Lag vectors of lengths ``d`` along a unit ``direction``."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return np.asarray(d, dtype=float)[..., None] * u


def anisotropy_matrix(a11: float, a12: float) -> np.ndarray:
    """Unit-determinant anisotropy matrix from its two free entries."""
    if a11 <= 0:
        raise InvalidParameterError("a11 must be positive")
    return np.array([[a11, a12], [a12, (1.0 + a12 * a12) / a11]])


@dataclass(frozen=True)
class CorrelationSpec:
    """An isotropic correlation family, optionally with geometric anisotropy and nugget.

    ``kappa`` is ignored for the exponential family. ``anisotropy`` is a
    symmetric positive definite 2x2 matrix of unit determinant; ``None``
    means the identity.
    """

    family: str
    lam: float
    kappa: float | None = None
    anisotropy: np.ndarray | None = field(default=None, compare=False)
    nugget: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown correlation family {self.family!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidParameterError(f"range must be positive, got {self.lam}")
        if self.family != "exponential":
            if self.kappa is None or not (self.kappa > 0 and math.isfinite(self.kappa)):
                raise InvalidParameterError(f"{self.family} needs a positive kappa")
            if self.family == "stable" and self.kappa > 2:
                raise InvalidParameterError("stable family needs 0 < kappa <= 2")
        if not 0 <= self.nugget < 1:
            raise InvalidParameterError("nugget must lie in [0, 1)")
        if self.anisotropy is not None:
            A = np.asarray(self.anisotropy, dtype=float)
            if A.shape != (2, 2) or not np.allclose(A, A.T, atol=1e-12):
                raise InvalidParameterError("anisotropy must be a symmetric 2x2 matrix")
            if abs(np.linalg.det(A) - 1.0) > 1e-10 or A[0, 0] <= 0:
                raise InvalidParameterError("anisotropy must be positive definite with unit determinant")
            object.__setattr__(self, "anisotropy", A)

    def norm(self, h) -> np.ndarray:
        """Anisotropic length ``(h' A h)^{1/2}`` of lag vectors."""
        h = as_lag(h)
        if self.anisotropy is None:
            return np.hypot(h[..., 0], h[..., 1])
        q = np.einsum("...i,ij,...j->...", h, self.anisotropy, h)
        return np.sqrt(np.maximum(q, 0.0))

    def rho(self, d) -> np.ndarray:
        """Correlation as a function of (anisotropic) distance, nugget included."""
        d = np.asarray(d, dtype=float)
        return np.where(d == 0, 1.0, (1.0 - self.nugget) * self._base(d))

    def _base(self, d):
        s = d / self.lam
        if self.family == "exponential":
            return np.exp(-s)
        if self.family == "stable":
            return np.exp(-(s**self.kappa))
        if self.family == "cauchy":
            return (1.0 + s * s) ** (-self.kappa)
        k = self.kappa
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            val = s**k * special.kv(k, s) / (2 ** (k - 1) * special.gamma(k))
        return np.where(s < 1e-12, 1.0, np.nan_to_num(val, nan=0.0))

    def replace(self, **kw) -> "CorrelationSpec":
        args = dict(family=self.family, lam=self.lam, kappa=self.kappa,
                    anisotropy=self.anisotropy, nugget=self.nugget)
        args.update(kw)
        return CorrelationSpec(**args)


@dataclass(frozen=True)
class VariogramSpec:
    """Fractional (power) semivariogram ``(|h|/lam)^alpha``."""

    lam: float
    alpha: float

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidParameterError("variogram range must be positive")
        if not 0 < self.alpha <= 2:
            raise InvalidParameterError("variogram exponent must lie in (0, 2]")

    def gamma(self, d) -> np.ndarray:
        return (np.asarray(d, dtype=float) / self.lam) ** self.alpha


@dataclass
class SiteSet:
    ids: list
    coords: np.ndarray

    def __post_init__(self):
        self.ids = list(self.ids)
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if self.coords.shape != (len(self.ids), 2):
            raise InvalidParameterError("coords must be a (D, 2) array matching ids")
        if len(set(self.ids)) != len(self.ids):
            raise InvalidParameterError("site ids must be unique")
        if not np.all(np.isfinite(self.coords)):
            raise InvalidParameterError("site coordinates must be finite")

    @classmethod
    def from_coords(cls, coords) -> "SiteSet":
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        return cls([f"s{i:03d}" for i in range(len(coords))], coords)

    def __len__(self):
        return len(self.ids)

    def lags(self) -> np.ndarray:
        """(D, D, 2) array of lag vectors x_k - x_j."""
        return self.coords[None, :, :] - self.coords[:, None, :]

    def distances(self) -> np.ndarray:
        lag = self.lags()
        return np.hypot(lag[..., 0], lag[..., 1])

    def subset(self, idx) -> "SiteSet":
        idx = list(idx)
        return SiteSet([self.ids[i] for i in idx], self.coords[idx])


def correlation(h, spec: CorrelationSpec):
    out = spec.rho(spec.norm(h))
    return float(out) if np.ndim(out) == 0 else out


def semivariogram(h, spec: VariogramSpec):
    out = spec.gamma(np.hypot(*np.moveaxis(as_lag(h), -1, 0)))
    return float(out) if np.ndim(out) == 0 else out


def cross_corr(a: np.ndarray, b: np.ndarray, spec: CorrelationSpec) -> np.ndarray:
    """Correlation between every point of ``a`` (n, 2) and ``b`` (m, 2)."""
    lag = np.asarray(b, dtype=float)[None, :, :] - np.asarray(a, dtype=float)[:, None, :]
    return spec.rho(spec.norm(lag))


def corr_matrix(sites: SiteSet, spec: CorrelationSpec) -> np.ndarray:
    R = spec.rho(spec.norm(sites.lags()))
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    d = sites.distances()
    iu = np.triu_indices(len(sites), 1)
    if np.any(d[iu] == 0):
        warnings.warn("coincident sites: correlation matrix is singular", stacklevel=2)
    return R


def cholesky(M, return_jitter: bool = False):
    """Lower Cholesky factor, adding diagonal jitter on failure.

    The jitter ladder runs 1e-10 .. 1e-6, scaled by the mean diagonal.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidParameterError("cholesky needs a square matrix")
    scale = float(np.mean(np.diag(M))) if M.size else 1.0
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            L = np.linalg.cholesky(M + jitter * scale * np.eye(len(M)) if jitter else M)
        except np.linalg.LinAlgError:
            continue
        return (L, jitter) if return_jitter else L
    raise NotPositiveDefiniteError("matrix not positive definite after jitter ladder")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gp_sample(sites: SiteSet, spec: CorrelationSpec, sill: float, seed=None, size: int | None = None):
    """Draw(s) from N(0, sill * R) at the sites.

    Returns a (D,) vector, or (size, D) when ``size`` is given.
    """
    if not sill > 0:
        raise InvalidParameterError("sill must be positive")
    rng = _rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = cholesky(corr_matrix(sites, spec))
    n = 1 if size is None else size
    x = math.sqrt(sill) * rng.standard_normal((n, len(sites))) @ L.T
    return x[0] if size is None else x


def _psd_sqrt(C: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (C + C.T))
    return U * np.sqrt(np.clip(w, 0.0, None))


def kriging(obs_coords, obs_values, new_coords, spec: CorrelationSpec, sill: float):
    """Simple-kriging mean and covariance at ``new_coords`` (zero prior mean)."""
    obs_coords = np.atleast_2d(obs_coords)
    new_coords = np.atleast_2d(new_coords)
    C_oo = cross_corr(obs_coords, obs_coords, spec)
    np.fill_diagonal(C_oo, 1.0)
    C_no = cross_corr(new_coords, obs_coords, spec)
    C_nn = cross_corr(new_coords, new_coords, spec)
    np.fill_diagonal(C_nn, 1.0)
    L = cholesky(C_oo)
    W = np.linalg.solve(L, C_no.T)  # L^{-1} C_on
    mean = W.T @ np.linalg.solve(L, np.asarray(obs_values, dtype=float).T)
    cov = sill * (C_nn - W.T @ W)
    return mean, cov


def gp_conditional_sample(obs_sites: SiteSet, obs_values, new_sites: SiteSet,
                          spec: CorrelationSpec, sill: float, seed=None):
    """One draw from the Gaussian field at ``new_sites`` given values at ``obs_sites``."""
    rng = _rng(seed)
    mean, cov = kriging(obs_sites.coords, obs_values, new_sites.coords, spec, sill)
    return mean + _psd_sqrt(cov) @ rng.standard_normal(len(new_sites))


def gp_conditional_sampler(obs_coords, new_coords, spec: CorrelationSpec):
    """Precompute kriging weights and a unit-sill residual factor.

    Returns ``(W, F)`` such that ``W @ obs + sqrt(sill) * F @ e`` with
    ``e ~ N(0, I)`` is a conditional draw; convenient inside MCMC loops.
    """
    obs_coords = np.atleast_2d(obs_coords)
    new_coords = np.atleast_2d(new_coords)
    mean_w, cov = kriging(obs_coords, np.eye(len(obs_coords)), new_coords, spec, 1.0)
    return mean_w, _psd_sqrt(cov)
