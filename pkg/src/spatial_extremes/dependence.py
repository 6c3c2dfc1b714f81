"""Bivariate dependence models for spatial extremes.

Each model is a small frozen dataclass. The module-level functions dispatch
on the model type and broadcast over ``z1``, ``z2`` and lag vectors ``h``
(trailing dimension 2; a scalar ``h`` is the lag ``(h, 0)``).

The Pickands convention is ``V(z1, z2) = (1/z1 + 1/z2) A(w)`` with
``w = z2 / (z1 + z2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Union

import numpy as np
from scipy import optimize, special

from .errors import (
    DomainError,
    InvalidParameterError,
    NoRootError,
    NonFiniteDensityError,
    UnsupportedSpecError,
)
from .evd import student_t_logpdf
from .spatial import CorrelationSpec, VariogramSpec, as_lag

LOG_2PI = math.log(2 * math.pi)


# --- model types ----------------------------------------------------------------


@dataclass(frozen=True)
class Smith:
    """Gaussian storm profiles with covariance ``omega`` (km^2)."""

    omega: np.ndarray = field(compare=False)

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.ndim == 0:
            om = float(om) * np.eye(2)
        if om.shape != (2, 2) or not np.allclose(om, om.T):
            raise InvalidParameterError("Smith omega must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(om) <= 0):
            raise InvalidParameterError("Smith omega must be positive definite")
        object.__setattr__(self, "omega", om)

    @classmethod
    def isotropic(cls, sigma11: float) -> "Smith":
        return cls(sigma11 * np.eye(2))


@dataclass(frozen=True)
class Schlather:
    corr: CorrelationSpec


@dataclass(frozen=True)
class RandomSetSchlather:
    """Schlather model with Gaussian profiles restricted to a disk of radius ``disk_radius``."""

    corr: CorrelationSpec
    disk_radius: float

    def __post_init__(self):
        if not self.disk_radius > 0:
            raise InvalidParameterError("disk radius must be positive")


@dataclass(frozen=True)
class GeometricGaussian:
    sigma2: float
    corr: CorrelationSpec

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InvalidParameterError("sigma2 must be positive")


@dataclass(frozen=True)
class BrownResnick:
    vario: VariogramSpec


@dataclass(frozen=True)
class HuslerReiss:
    """Husler-Reiss model with ``a(h)^2 = (|h| / lam)^kappa``."""

    lam: float
    kappa: float

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidParameterError("HR range must be positive")
        if not 0 < self.kappa <= 2:
            raise InvalidParameterError("HR kappa must lie in (0, 2]")


@dataclass(frozen=True)
class ExtremalT:
    nu: float
    corr: CorrelationSpec

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidParameterError("degrees of freedom must be positive")


@dataclass(frozen=True)
class GaussianCopula:
    corr: CorrelationSpec


@dataclass(frozen=True)
class StudentTCopula:
    nu: float
    corr: CorrelationSpec

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidParameterError("degrees of freedom must be positive")


@dataclass(frozen=True)
class Independence:
    pass


@dataclass(frozen=True)
class MarshallOlkin:
    """Bivariate Marshall-Olkin extremal copula; only used through ``pickands_A``."""

    alpha: float

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise InvalidParameterError("Marshall-Olkin alpha must lie in [0, 1]")


DependenceSpec = Union[
    Smith, Schlather, RandomSetSchlather, GeometricGaussian, BrownResnick,
    HuslerReiss, ExtremalT, GaussianCopula, StudentTCopula, Independence,
]

MAX_STABLE = (Smith, Schlather, RandomSetSchlather, GeometricGaussian, BrownResnick)
EXTREMAL = MAX_STABLE + (HuslerReiss, ExtremalT, Independence)
HR_TYPE = (Smith, GeometricGaussian, BrownResnick, HuslerReiss)
COPULAS = (GaussianCopula, StudentTCopula)


def is_extremal(spec) -> bool:
    return isinstance(spec, EXTREMAL)


# --- per-pair parameters --------------------------------------------------------


def _norm(h):
    h = as_lag(h)
    return np.hypot(h[..., 0], h[..., 1])


def disk_overlap_alpha(h, radius: float):
    """Overlap fraction of two disks of radius ``radius`` whose centres are ``h`` apart."""
    h = np.abs(np.asarray(h, dtype=float))
    r = float(radius)
    x = np.clip(h / (2 * r), 0.0, 1.0)
    lens = 2 * r * r * np.arccos(x) - 0.5 * h * np.sqrt(np.clip(4 * r * r - h * h, 0.0, None))
    out = np.where(h < 2 * r, lens / (math.pi * r * r), 0.0)
    return float(out) if out.ndim == 0 else out


def hr_a(h, spec):
    """The Husler-Reiss type dependence parameter ``a(h)`` for Smith/GG/BR/HR."""
    if isinstance(spec, Smith):
        h = as_lag(h)
        a2 = np.einsum("...i,ij,...j->...", h, np.linalg.inv(spec.omega), h)
    elif isinstance(spec, GeometricGaussian):
        a2 = 2 * spec.sigma2 * (1 - spec.corr.rho(spec.corr.norm(h)))
    elif isinstance(spec, BrownResnick):
        a2 = 2 * spec.vario.gamma(_norm(h))
    elif isinstance(spec, HuslerReiss):
        a2 = (_norm(h) / spec.lam) ** spec.kappa
    else:
        raise UnsupportedSpecError(f"{type(spec).__name__} has no a(h)")
    return np.sqrt(np.maximum(a2, 0.0))


def pair_params(spec, h) -> dict:
    """Arrays of dependence parameters at lags ``h``, keyed by kernel argument."""
    if isinstance(spec, HR_TYPE):
        return {"a": hr_a(h, spec)}
    if isinstance(spec, Schlather):
        return {"rho": spec.corr.rho(spec.corr.norm(h))}
    if isinstance(spec, RandomSetSchlather):
        return {"rho": spec.corr.rho(spec.corr.norm(h)),
                "alpha": disk_overlap_alpha(_norm(h), spec.disk_radius)}
    if isinstance(spec, (ExtremalT, StudentTCopula)):
        return {"rho": spec.corr.rho(spec.corr.norm(h)), "nu": spec.nu}
    if isinstance(spec, GaussianCopula):
        return {"rho": spec.corr.rho(spec.corr.norm(h))}
    if isinstance(spec, Independence):
        return {}
    raise UnsupportedSpecError(f"unsupported dependence spec {type(spec).__name__}")


def _kind(spec) -> str:
    if isinstance(spec, HR_TYPE):
        return "hr"
    return {
        Schlather: "schlather", RandomSetSchlather: "randomset", ExtremalT: "extremal_t",
        Independence: "independence", GaussianCopula: "gaussian", StudentTCopula: "student",
    }[type(spec)]


# --- exponent measures and partial derivatives -----------------------------------


def _hr_V(z1, z2, a):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(z2 / z1)
        q1 = a / 2 + lr / a
        q2 = a / 2 - lr / a
        V = special.ndtr(q1) / z1 + special.ndtr(q2) / z2
    return np.where(a > 0, V, np.maximum(1 / z1, 1 / z2))


def _hr_partials(z1, z2, a):
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.log(z2 / z1)
        q1 = a / 2 + lr / a
        q2 = a / 2 - lr / a
        P1, P2 = special.ndtr(q1), special.ndtr(q2)
        V = P1 / z1 + P2 / z2
        V1 = -P1 / (z1 * z1)
        V2 = -P2 / (z2 * z2)
        # the phi terms cancel in V1, V2 since phi(q1)/z1 = phi(q2)/z2
        V12 = -np.exp(-0.5 * q1 * q1 - 0.5 * LOG_2PI) / (a * z1 * z1 * z2)
    return V, V1, V2, V12


def _schlather_parts(z1, z2, rho):
    Q = np.sqrt(np.maximum(z1 * z1 + z2 * z2 - 2 * rho * z1 * z2, 0.0))
    V = (z1 + z2 + Q) / (2 * z1 * z2)
    with np.errstate(divide="ignore", invalid="ignore"):
        V1 = (rho * z1 - z2 - Q) / (2 * z1 * z1 * Q)
        V2 = (rho * z2 - z1 - Q) / (2 * z2 * z2 * Q)
        V12 = (rho * rho - 1) / (2 * Q**3)
    return V, V1, V2, V12


def _extremal_t_parts(z1, z2, rho, nu):
    rho = np.asarray(rho, dtype=float)
    c = np.sqrt((1 - rho) * (1 + rho) / (nu + 1))
    lr = np.log(z2 / z1)
    one_m_rho = 1 - rho
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        b1 = (np.expm1(lr / nu) + one_m_rho) / c
        b2 = (np.expm1(-lr / nu) + one_m_rho) / c
        T1 = special.stdtr(nu + 1, b1)
        T2 = special.stdtr(nu + 1, b2)
        V = T1 / z1 + T2 / z2
        V1 = -T1 / (z1 * z1)
        V2 = -T2 / (z2 * z2)
        db1 = np.exp(lr / nu) / (nu * z2 * c)
        V12 = -np.exp(student_t_logpdf(b1, nu + 1)) * db1 / (z1 * z1)
    return V, V1, V2, V12


def _parts(kind, z1, z2, p):
    if kind == "hr":
        return _hr_partials(z1, z2, p["a"])
    if kind == "schlather":
        return _schlather_parts(z1, z2, p["rho"])
    if kind == "randomset":
        al = p["alpha"]
        V, V1, V2, V12 = _schlather_parts(z1, z2, p["rho"])
        Vi = 1 / z1 + 1 / z2
        return ((1 - al) * Vi + al * V, -(1 - al) / (z1 * z1) + al * V1,
                -(1 - al) / (z2 * z2) + al * V2, al * V12)
    if kind == "extremal_t":
        return _extremal_t_parts(z1, z2, p["rho"], p["nu"])
    if kind == "independence":
        zero = np.zeros(np.broadcast(z1, z2).shape)
        return 1 / z1 + 1 / z2, -1 / (z1 * z1) + zero, -1 / (z2 * z2) + zero, zero
    raise UnsupportedSpecError(f"no exponent measure for {kind}")


def _check_extremal(spec):
    if not is_extremal(spec):
        raise UnsupportedSpecError(f"{type(spec).__name__} is not an extremal model")


def _check_z(z1, z2):
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(~(z1 > 0)) or np.any(~(z2 > 0)):
        raise DomainError("z1, z2 must be positive")
    return z1, z2


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def exponent_V(z1, z2, h, spec):
    """Bivariate exponent measure ``V(z1, z2)`` at lag ``h``."""
    _check_extremal(spec)
    z1, z2 = _check_z(z1, z2)
    kind = _kind(spec)
    p = pair_params(spec, h)
    if kind == "hr":
        V = _hr_V(z1, z2, p["a"])
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            V = _parts(kind, z1, z2, p)[0]
    return _scalar(V)


def V_partials(z1, z2, h, spec, method: str = "analytic"):
    """First and mixed partial derivatives ``(V1, V2, V12)`` of the exponent measure.

    ``method="numeric"`` uses Richardson-extrapolated central differences of
    :func:`exponent_V` (relative steps 5e-3 and 1e-2).
    """
    _check_extremal(spec)
    z1, z2 = _check_z(z1, z2)
    if method == "numeric":
        return _numeric_partials(z1, z2, h, spec)
    _, V1, V2, V12 = _parts(_kind(spec), z1, z2, pair_params(spec, h))
    return _scalar(V1), _scalar(V2), _scalar(V12)


def _numeric_partials(z1, z2, h, spec, rel=5e-3):
    if np.any(z1 <= 1e-8) or np.any(z2 <= 1e-8):
        raise DomainError("finite-difference step underflows for z <= 1e-8")

    def V(a, b):
        return np.asarray(exponent_V(a, b, h, spec))

    def d1(step):
        e1, e2 = step * z1, step * z2
        v1 = (V(z1 + e1, z2) - V(z1 - e1, z2)) / (2 * e1)
        v2 = (V(z1, z2 + e2) - V(z1, z2 - e2)) / (2 * e2)
        v12 = (V(z1 + e1, z2 + e2) - V(z1 + e1, z2 - e2)
               - V(z1 - e1, z2 + e2) + V(z1 - e1, z2 - e2)) / (4 * e1 * e2)
        return v1, v2, v12

    big, small = d1(2 * rel), d1(rel)
    # second-order central differences: Richardson with ratio 2
    out = [(4 * s - b) / 3 for s, b in zip(small, big)]
    return tuple(_scalar(o) for o in out)


# --- densities --------------------------------------------------------------------


def _frechet_logpdf(z):
    return -1.0 / z - 2.0 * np.log(z)


def _normal_scores(z):
    # Phi^{-1}(exp(-1/z)) via the upper tail to keep precision for large z
    return -special.ndtri(-np.expm1(-1.0 / z))


def _student_scores(z, nu):
    return -special.stdtrit(nu, -np.expm1(-1.0 / z))


def logdensity_from_params(kind: str, z1, z2, p: dict):
    """Bivariate log-density with unit Frechet margins.

    ``-inf`` where ``V1 V2 - V12`` underflows to zero, NaN where it is negative.
    """
    if kind in ("gaussian", "student"):
        rho = np.asarray(p["rho"], dtype=float)
        one_m_r2 = (1 - rho) * (1 + rho)
        if kind == "gaussian":
            x1, x2 = _normal_scores(z1), _normal_scores(z2)
            lc = (-0.5 * np.log(one_m_r2)
                  - (rho * rho * (x1 * x1 + x2 * x2) - 2 * rho * x1 * x2) / (2 * one_m_r2))
        else:
            nu = p["nu"]
            x1, x2 = _student_scores(z1, nu), _student_scores(z2, nu)
            quad = (x1 * x1 + x2 * x2 - 2 * rho * x1 * x2) / one_m_r2
            l2 = (special.gammaln((nu + 2) / 2) - special.gammaln(nu / 2) - math.log(nu * math.pi)
                  - 0.5 * np.log(one_m_r2) - (nu + 2) / 2 * np.log1p(quad / nu))
            lc = l2 - student_t_logpdf(x1, nu) - student_t_logpdf(x2, nu)
        return lc + _frechet_logpdf(z1) + _frechet_logpdf(z2)
    if kind == "independence":
        return _frechet_logpdf(z1) + _frechet_logpdf(z2)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        V, V1, V2, V12 = _parts(kind, z1, z2, p)
        inner = V1 * V2 - V12
        out = np.where(inner > 0, -V + np.log(np.where(inner > 0, inner, 1.0)), np.nan)
        return np.where(inner == 0, -np.inf, out)


def bivariate_logdensity(z1, z2, h, spec, strict: bool = True):
    """Log joint density of ``(Z(o), Z(h))`` on the unit Frechet scale.

    Far in the joint tails the density underflows and the result is ``-inf``.
    Raises :class:`NonFiniteDensityError` when ``V1 V2 - V12 < 0`` unless
    ``strict`` is false, in which case NaN marks those entries.
    """
    z1, z2 = _check_z(z1, z2)
    kind = _kind(spec)
    out = logdensity_from_params(kind, z1, z2, pair_params(spec, h))
    if strict and np.any(np.isnan(out)):
        raise NonFiniteDensityError("bivariate density breaks down (V1*V2 - V12 <= 0)")
    return _scalar(out)


# --- Pickands dependence function and extremal coefficient -------------------------


def pickands_A(w, h, spec):
    """Pickands dependence function at ``w`` in [0, 1]."""
    w = np.asarray(w, dtype=float)
    if np.any((w < 0) | (w > 1)):
        raise DomainError("w must lie in [0, 1]")
    inner = (w > 0) & (w < 1)
    ws = np.where(inner, w, 0.5)
    if isinstance(spec, MarshallOlkin):
        A = 1 - (1 - spec.alpha) * np.minimum(ws, 1 - ws)
    elif isinstance(spec, HuslerReiss):
        a = hr_a(h, spec)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(ws / (1 - ws))
            A = ((1 - ws) * special.ndtr(a / 2 - lr / a) + ws * special.ndtr(a / 2 + lr / a))
        A = np.where(a > 0, A, np.maximum(ws, 1 - ws))
    elif isinstance(spec, ExtremalT):
        rho = spec.corr.rho(spec.corr.norm(h))
        nu = spec.nu
        c = np.sqrt((1 - rho) * (1 + rho) / (nu + 1))
        lr = np.log(ws / (1 - ws))
        with np.errstate(divide="ignore", invalid="ignore"):
            A = (ws * special.stdtr(nu + 1, (np.expm1(lr / nu) + (1 - rho)) / c)
                 + (1 - ws) * special.stdtr(nu + 1, (np.expm1(-lr / nu) + (1 - rho)) / c))
    else:
        _check_extremal(spec)
        A = np.asarray(exponent_V(1 / ws, 1 / (1 - ws), h, spec))
    return _scalar(np.where(inner, A, 1.0))


def extremal_coefficient(h, spec):
    """Pairwise extremal coefficient theta(h) in [1, 2]."""
    if isinstance(spec, HR_TYPE):
        th = 2 * special.ndtr(hr_a(h, spec) / 2)
    elif isinstance(spec, Schlather):
        rho = spec.corr.rho(spec.corr.norm(h))
        th = 1 + np.sqrt((1 - rho) / 2)
    elif isinstance(spec, RandomSetSchlather):
        rho = spec.corr.rho(spec.corr.norm(h))
        al = disk_overlap_alpha(_norm(h), spec.disk_radius)
        th = 2 - al * (1 - np.sqrt((1 - rho) / 2))
    elif isinstance(spec, (ExtremalT, StudentTCopula)):
        rho = spec.corr.rho(spec.corr.norm(h))
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.sqrt((spec.nu + 1) * (1 - rho) / (1 + rho))
        th = 2 * special.stdtr(spec.nu + 1, b)
    elif isinstance(spec, (GaussianCopula, Independence)):
        th = 2.0 + 0 * _norm(h)
    elif isinstance(spec, MarshallOlkin):
        th = 2 * pickands_A(0.5, h, spec)
    else:
        raise UnsupportedSpecError(f"unsupported spec {type(spec).__name__}")
    return _scalar(np.clip(th, 1.0, 2.0))


def tail_dependence(spec, h):
    """Upper and lower tail dependence ``(chi_up, chi_low)``.

    ``chi_low`` is ``None`` for extremal families other than Husler-Reiss,
    where it is not defined by the model.
    """
    if isinstance(spec, GaussianCopula):
        z = 0.0 * _norm(h)
        return _scalar(z), _scalar(z)
    if isinstance(spec, StudentTCopula):
        rho = spec.corr.rho(spec.corr.norm(h))
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.sqrt((spec.nu + 1) * (1 - rho) / (1 + rho))
        chi = _scalar(2 * special.stdtr(spec.nu + 1, -b))
        return chi, chi
    if isinstance(spec, HuslerReiss):
        chi = 2 - 2 * special.ndtr(hr_a(h, spec) / 2)
        return _scalar(chi), _scalar(0.0 * chi)
    _check_extremal(spec)
    return _scalar(2 - np.asarray(extremal_coefficient(h, spec))), None


def br_hr_convert(lambda_br: float, alpha: float) -> tuple[float, float]:
    """Husler-Reiss ``(lam, kappa)`` with the same theta curve as BR ``(lambda_br, alpha)``."""
    if not lambda_br > 0 or not 0 < alpha <= 2:
        raise InvalidParameterError("invalid Brown-Resnick parameters")
    return 2.0 ** (-1.0 / alpha) * lambda_br, alpha


def smith_as_brown_resnick(sigma11: float) -> BrownResnick:
    """Brown-Resnick model (alpha=2) with the same theta curve as isotropic Smith."""
    # gamma(h) = h' Omega^{-1} h / 2  <=>  lam = sqrt(2 sigma11)
    return BrownResnick(VariogramSpec(math.sqrt(2 * sigma11), 2.0))


# --- theta curves and practical ranges ---------------------------------------------


@dataclass
class ThetaCurve:
    distances: np.ndarray
    theta: np.ndarray
    h_minus: float
    h_plus: float


def _principal_axes(spec) -> list[np.ndarray] | None:
    if isinstance(spec, Smith):
        M = spec.omega
    else:
        corr = getattr(spec, "corr", None)
        M = None if corr is None else corr.anisotropy
    if M is None or np.allclose(M, M[0, 0] * np.eye(2)):
        return None
    _, U = np.linalg.eigh(M)
    return [U[:, 0], U[:, 1]]


def _theta_along(spec, direction):
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return lambda d: float(extremal_coefficient(d * u, spec))


def _solve_level(f, level, hmax=1e7):
    lo, hi = 0.0, 1e-3
    sup = f(hi)
    while f(hi) < level:
        lo, hi = hi, hi * 2
        sup = max(sup, f(hi))
        if hi > hmax:
            raise NoRootError(f"theta never reaches {level}", supremum=sup)
    if f(lo) >= level:
        return lo
    return optimize.brentq(lambda d: f(d) - level, lo, hi, xtol=1e-9, rtol=1e-14)


def practical_range(spec, direction=None, levels=(1.3, 1.7)):
    """Distances ``(h_minus, h_plus)`` where theta reaches 1.3 and 1.7.

    ``h_plus`` is ``inf`` when theta stays below 1.7. For anisotropic models
    without a ``direction`` each entry is a ``(min, max)`` pair over the two
    principal axes.
    """
    axes = _principal_axes(spec) if direction is None else None
    if axes is not None:
        per_axis = [practical_range(spec, direction=u, levels=levels) for u in axes]
        return tuple((min(v), max(v)) for v in zip(*per_axis))
    f = _theta_along(spec, (1.0, 0.0) if direction is None else direction)
    h_minus = _solve_level(f, levels[0])
    try:
        h_plus = _solve_level(f, levels[1])
    except NoRootError:
        h_plus = math.inf
    return h_minus, h_plus


def theta_curve(spec, distances, direction=(1.0, 0.0)) -> ThetaCurve:
    d = np.asarray(distances, dtype=float)
    f = _theta_along(spec, direction)
    theta = np.array([f(x) for x in d])
    try:
        hm, hp = practical_range(spec, direction=direction)
    except NoRootError:
        hm, hp = math.inf, math.inf
    return ThetaCurve(d, theta, hm, hp)


def marshall_olkin_from_rho(rho: float) -> MarshallOlkin:
    """Limit of the extremal-t copula as nu -> 0."""
    return MarshallOlkin(float(special.stdtr(1, -rho / math.sqrt(1 - rho * rho))))


__all__ = [
    "Smith", "Schlather", "RandomSetSchlather", "GeometricGaussian", "BrownResnick",
    "HuslerReiss", "ExtremalT", "GaussianCopula", "StudentTCopula", "Independence",
    "MarshallOlkin", "DependenceSpec", "ThetaCurve", "exponent_V", "V_partials",
    "bivariate_logdensity", "pickands_A", "extremal_coefficient", "tail_dependence",
    "practical_range", "theta_curve", "br_hr_convert", "disk_overlap_alpha",
    "smith_as_brown_resnick", "marshall_olkin_from_rho",
]
