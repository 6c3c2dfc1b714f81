"""Univariate extreme-value distributions and the special-function kernels.

All functions broadcast over array arguments. Scalars in give floats out.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import DomainError, InvalidParameterError, OutOfSupportError

#: |xi| below this uses the Gumbel branch.
XI_GUMBEL_TOL = 1e-8


@dataclass(frozen=True)
class GevParams:
    """Location ``eta``, scale ``tau`` (> 0) and shape ``xi`` of a GEV law."""

    eta: float
    tau: float
    xi: float

    def __post_init__(self):
        vals = (self.eta, self.tau, self.xi)
        if not all(math.isfinite(float(v)) for v in vals):
            raise InvalidParameterError(f"non-finite GEV parameter in {vals}")
        if self.tau <= 0:
            raise InvalidParameterError(f"GEV scale must be positive, got {self.tau}")

    @property
    def lower_endpoint(self) -> float:
        return self.eta - self.tau / self.xi if self.xi > XI_GUMBEL_TOL else -math.inf

    @property
    def upper_endpoint(self) -> float:
        return self.eta - self.tau / self.xi if self.xi < -XI_GUMBEL_TOL else math.inf


@dataclass(frozen=True)
class GpdParams:
    sigma_u: float
    xi: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma_u) and math.isfinite(self.xi)):
            raise InvalidParameterError("non-finite GPD parameter")
        if self.sigma_u <= 0:
            raise InvalidParameterError(f"GPD scale must be positive, got {self.sigma_u}")


@dataclass(frozen=True)
class KernelAccuracy:
    """Absolute error budget the numeric kernels are tested against."""

    normal: float = 1e-12
    student_t: float = 1e-10
    bessel: float = 1e-10

    def __post_init__(self):
        for v in (self.normal, self.student_t, self.bessel):
            if not 0 < v <= 1e-6:
                raise InvalidParameterError("kernel tolerances must lie in (0, 1e-6]")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _is_gumbel(xi) -> bool:
    return abs(xi) < XI_GUMBEL_TOL


def _log_frechet(y, p: GevParams):
    """log z for the unit-Frechet transform; NaN outside the support."""
    y = np.asarray(y, dtype=float)
    s = (y - p.eta) / p.tau
    if _is_gumbel(p.xi):
        return s
    t = 1.0 + p.xi * s
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, np.log1p(p.xi * s) / p.xi, np.nan)


def gev_cdf(y, p: GevParams):
    """GEV distribution function, with the ``{.}_+`` truncation."""
    y = np.asarray(y, dtype=float)
    s = (y - p.eta) / p.tau
    if _is_gumbel(p.xi):
        out = np.exp(-np.exp(-s))
    else:
        t = 1.0 + p.xi * s
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            inside = np.exp(-np.exp(-np.log1p(np.where(t > 0, p.xi * s, 0.0)) / p.xi))
        below = 0.0 if p.xi > 0 else 1.0
        out = np.where(t > 0, inside, below)
    return _out(out)


def gev_logpdf(y, p: GevParams):
    """GEV log-density; ``-inf`` outside the support."""
    y = np.asarray(y, dtype=float)
    s = (y - p.eta) / p.tau
    if _is_gumbel(p.xi):
        out = -math.log(p.tau) - s - np.exp(-s)
    else:
        t = 1.0 + p.xi * s
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            lt = np.log1p(np.where(t > 0, p.xi * s, 0.0))
            val = -math.log(p.tau) - (1.0 + 1.0 / p.xi) * lt - np.exp(-lt / p.xi)
        out = np.where(t > 0, val, -np.inf)
    return _out(out)


def gev_ppf(q, p: GevParams):
    """GEV quantile function."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise DomainError("quantile probabilities must lie in (0, 1)")
    mlq = -np.log(q)
    if _is_gumbel(p.xi):
        out = p.eta - p.tau * np.log(mlq)
    else:
        out = p.eta + p.tau / p.xi * np.expm1(-p.xi * np.log(mlq))
    return _out(out)


def return_level(T, p: GevParams):
    """The T-year return level, i.e. the ``1 - 1/T`` quantile."""
    T = np.asarray(T, dtype=float)
    if np.any(~(T > 1)):
        raise DomainError(f"return period must exceed 1, got {T}")
    # -log(1 - 1/T) computed without cancellation for large T
    mlq = -np.log1p(-1.0 / T)
    if _is_gumbel(p.xi):
        out = p.eta - p.tau * np.log(mlq)
    else:
        out = p.eta + p.tau / p.xi * np.expm1(-p.xi * np.log(mlq))
    return _out(out)


def gpd_survivor(x, p: GpdParams):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("GPD survivor defined for x >= 0")
    if _is_gumbel(p.xi):
        out = np.exp(-x / p.sigma_u)
    else:
        t = 1.0 + p.xi * x / p.sigma_u
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, np.exp(-np.log1p(np.where(t > 0, p.xi * x / p.sigma_u, 0.0)) / p.xi), 0.0)
    return _out(out)


def to_unit_frechet(y, p: GevParams):
    """Map GEV-distributed ``y`` to the unit Frechet scale."""
    lz = _log_frechet(y, p)
    if np.any(np.isnan(lz)):
        raise OutOfSupportError("observation outside the GEV support")
    return _out(np.exp(lz))


def from_unit_frechet(z, p: GevParams):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise OutOfSupportError("unit Frechet values must be positive")
    lz = np.log(z)
    if _is_gumbel(p.xi):
        out = p.eta + p.tau * lz
    else:
        out = p.eta + p.tau * np.expm1(p.xi * lz) / p.xi
    return _out(out)


def frechet_to_gumbel(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("unit Frechet values must be positive")
    return _out(np.log(z))


# --- special-function kernels -------------------------------------------------


def kernel_normal(x):
    """Standard normal distribution function."""
    return _out(special.ndtr(np.asarray(x, dtype=float)))


def kernel_normal_inv(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("normal quantile needs p in (0, 1)")
    return _out(special.ndtri(p))


def kernel_student_t(x, nu):
    """Student-t distribution function; ``nu`` may be non-integer.

    Evaluated through the regularized incomplete beta function.
    """
    nu_a = np.asarray(nu, dtype=float)
    if np.any(~(nu_a > 0)):
        raise DomainError("degrees of freedom must be positive")
    return _out(special.stdtr(nu_a, np.asarray(x, dtype=float)))


def kernel_student_t_inv(p, nu):
    p = np.asarray(p, dtype=float)
    nu_a = np.asarray(nu, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("Student-t quantile needs p in (0, 1)")
    if np.any(~(nu_a > 0)):
        raise DomainError("degrees of freedom must be positive")
    x = special.stdtrit(nu_a, p)
    # one Newton polish on the forward map
    dens = np.exp(student_t_logpdf(x, nu_a))
    with np.errstate(invalid="ignore", divide="ignore"):
        step = (special.stdtr(nu_a, x) - p) / dens
    x = np.where(np.isfinite(step), x - step, x)
    return _out(x)


def student_t_logpdf(x, nu):
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return (
        special.gammaln((nu + 1) / 2)
        - special.gammaln(nu / 2)
        - 0.5 * np.log(nu * np.pi)
        - (nu + 1) / 2 * np.log1p(x * x / nu)
    )


def kernel_bessel_k(kappa, x):
    """Modified Bessel function of the second kind, K_kappa(x)."""
    kappa = np.asarray(kappa, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("Bessel K needs x > 0")
    out = special.kv(kappa, x)
    if np.any(np.isinf(out)):
        raise OverflowError(f"K_{kappa} overflows at x={x}")
    return _out(out)
