"""Marginal GEV trend surfaces and transforms of panels of block maxima."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, InvalidParameterError, NonPositiveScaleError, OutOfSupportError
from .evd import XI_GUMBEL_TOL, GevParams
from .spatial import SiteSet


@dataclass(frozen=True)
class TrendSurface:
    """Affine surface ``beta0 + beta1 * lon + beta2 * lat`` (coordinates in km)."""

    beta0: float
    beta1: float = 0.0
    beta2: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(float(b)) for b in self.coefs):
            raise InvalidParameterError("trend coefficients must be finite")

    @property
    def coefs(self) -> tuple[float, float, float]:
        return (self.beta0, self.beta1, self.beta2)

    def __call__(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=float)
        return self.beta0 + self.beta1 * c[..., 0] + self.beta2 * c[..., 1]


@dataclass(frozen=True)
class SurfaceModel:
    eta: TrendSurface
    tau: TrendSurface
    xi: TrendSurface = TrendSurface(0.0)

    def arrays(self, coords, check: bool = True):
        """Site-wise ``(eta, tau, xi)`` arrays; raises if any scale is non-positive."""
        coords = np.atleast_2d(coords)
        eta, tau, xi = self.eta(coords), self.tau(coords), self.xi(coords)
        if check and np.any(tau <= 0):
            bad = int(np.flatnonzero(tau <= 0)[0])
            raise NonPositiveScaleError(f"GEV scale {tau[bad]:.4g} <= 0 at site index {bad}", site=bad)
        return eta, tau, xi


def gev_at_site(x, m: SurfaceModel) -> GevParams:
    x = np.asarray(x, dtype=float)
    eta, tau, xi = float(m.eta(x)), float(m.tau(x)), float(m.xi(x))
    if tau <= 0:
        raise NonPositiveScaleError(f"GEV scale {tau:.4g} <= 0 at {tuple(x)}", site=tuple(x))
    return GevParams(eta, tau, xi)


@dataclass
class MaximaPanel:
    """Sites x years block maxima; NaN marks a missing value.

    ``roles`` optionally tags each site as ``"fit"`` or ``"validate"``.
    """

    sites: SiteSet
    years: list
    values: np.ndarray
    roles: list | None = None
    excluded_cells: list = field(default_factory=list)

    def __post_init__(self):
        self.years = [int(y) for y in self.years]
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.sites), len(self.years)):
            raise InvalidParameterError(
                f"values shape {self.values.shape} != ({len(self.sites)}, {len(self.years)})")
        if self.roles is not None:
            self.roles = list(self.roles)
            if len(self.roles) != len(self.sites) or set(self.roles) - {"fit", "validate"}:
                raise InvalidParameterError("roles must be 'fit' or 'validate', one per site")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_years(self) -> int:
        return len(self.years)

    def with_values(self, values) -> "MaximaPanel":
        return MaximaPanel(self.sites, self.years, values, self.roles)

    def subset_sites(self, idx) -> "MaximaPanel":
        idx = list(idx)
        roles = None if self.roles is None else [self.roles[i] for i in idx]
        return MaximaPanel(self.sites.subset(idx), self.years, self.values[idx], roles)

    def role_indices(self, role: str) -> list[int]:
        if self.roles is None:
            return list(range(self.n_sites)) if role == "fit" else []
        return [i for i, r in enumerate(self.roles) if r == role]


# --- array kernels shared with the likelihood code ------------------------------------


def log_frechet_arrays(y, eta, tau, xi):
    """``log z`` of the unit-Frechet transform, elementwise; NaN outside the support.

    ``eta``, ``tau``, ``xi`` broadcast against ``y`` (typically shape (D, 1)).
    """
    s = (y - eta) / tau
    gum = np.abs(xi) < XI_GUMBEL_TOL
    xs = np.where(gum, 1.0, xi)
    t = xs * s
    with np.errstate(divide="ignore", invalid="ignore"):
        lz = np.where(gum, s, np.log1p(t) / xs)
    return np.where(gum | (t > -1), lz, np.nan)


def gev_logpdf_arrays(y, eta, tau, xi):
    """Elementwise GEV log-density with broadcast parameters; -inf outside the support."""
    lz = log_frechet_arrays(y, eta, tau, xi)
    out = -np.log(tau) + (1 - xi) * lz - 2 * lz - np.exp(-lz)
    # log h(y) = log(dz/dy) + log f_F(z); dz/dy = z^{1-xi} / tau
    return np.where(np.isnan(lz), -np.inf, out)


def panel_to_frechet(panel: MaximaPanel, m: SurfaceModel, strict: bool = True) -> MaximaPanel:
    """Transform a panel to unit Frechet margins with site-specific GEV parameters.

    Out-of-support cells raise :class:`OutOfSupportError` listing them; with
    ``strict=False`` they are set missing and recorded in ``excluded_cells``.
    """
    eta, tau, xi = m.arrays(panel.sites.coords)
    lz = log_frechet_arrays(panel.values, eta[:, None], tau[:, None], xi[:, None])
    bad = np.isnan(lz) & ~np.isnan(panel.values)
    cells = [(int(i), panel.years[j]) for i, j in zip(*np.nonzero(bad))]
    if cells and strict:
        raise OutOfSupportError(f"{len(cells)} observation(s) outside the GEV support", cells=cells)
    out = MaximaPanel(panel.sites, panel.years, np.exp(lz), panel.roles)
    out.excluded_cells = cells
    return out


def panel_from_frechet(panel: MaximaPanel, m: SurfaceModel) -> MaximaPanel:
    eta, tau, xi = (a[:, None] for a in m.arrays(panel.sites.coords))
    lz = np.log(panel.values)
    gum = np.abs(xi) < XI_GUMBEL_TOL
    xs = np.where(gum, 1.0, xi)
    y = np.where(gum, eta + tau * lz, eta + tau * np.expm1(xs * lz) / xs)
    return MaximaPanel(panel.sites, panel.years, y, panel.roles)


def empirical_uniform(panel: MaximaPanel) -> MaximaPanel:
    """Per-site ranks / (n + 1), ties sharing their average rank; missing kept."""
    vals = panel.values
    out = np.full_like(vals, np.nan)
    for d in range(panel.n_sites):
        ok = ~np.isnan(vals[d])
        n = int(ok.sum())
        if n < 2:
            raise InsufficientDataError(f"site {panel.sites.ids[d]} has {n} non-missing values")
        out[d, ok] = stats.rankdata(vals[d, ok]) / (n + 1)
    return MaximaPanel(panel.sites, panel.years, out, panel.roles)
