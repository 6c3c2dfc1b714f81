"""High-precision exponent measures for finite-difference density checks.

Each V is written in its textbook form (not the package's algebra) and
evaluated with mpmath, so the mixed difference of exp(-V) keeps full
relative accuracy even where the density is tiny.
"""
import mpmath as mp

from spatial_extremes.dependence import _kind, pair_params

DPS = 120


def _student_cdf(x, k):
    # T_k(x) = 1 - I_{k / (k + x^2)}(k/2, 1/2) / 2 for x >= 0
    tail = mp.betainc(k / 2, mp.mpf(1) / 2, 0, k / (k + x * x), regularized=True) / 2
    return 1 - tail if x >= 0 else tail


def exponent_V_mp(z1, z2, kind, p):
    z1, z2 = mp.mpf(z1), mp.mpf(z2)
    if kind == "independence":
        return 1 / z1 + 1 / z2
    if kind == "hr":
        a = mp.mpf(p["a"])
        lr = mp.log(z2 / z1)
        return mp.ncdf(a / 2 + lr / a) / z1 + mp.ncdf(a / 2 - lr / a) / z2
    if kind in ("schlather", "randomset"):
        rho = mp.mpf(p["rho"])
        root = mp.sqrt(1 - 2 * (rho + 1) * z1 * z2 / (z1 + z2) ** 2)
        if kind == "schlather":
            return (1 / z1 + 1 / z2) * (1 + root) / 2
        al = mp.mpf(p["alpha"])
        return (1 / z1 + 1 / z2) * (1 - al / 2 * (1 - root))
    if kind == "extremal_t":
        rho, nu = mp.mpf(p["rho"]), mp.mpf(p["nu"])
        b = mp.sqrt((nu + 1) / (1 - rho * rho))
        return (_student_cdf(b * ((z2 / z1) ** (1 / nu) - rho), nu + 1) / z1
                + _student_cdf(b * ((z1 / z2) ** (1 / nu) - rho), nu + 1) / z2)
    raise ValueError(kind)


def _scalar_params(spec, h):
    return {k: float(v) for k, v in pair_params(spec, h).items()}


def exponent_V_hp(z1, z2, h, spec):
    """``V(z1, z2)`` at lag ``h`` as a 120-digit mpmath number."""
    with mp.workdps(DPS):
        return exponent_V_mp(z1, z2, _kind(spec), _scalar_params(spec, h))


def density_fd_hp(z1, z2, h, spec, rel_step=1e-15):
    """Central mixed difference of ``exp(-V)`` at 120 digits, returned as a float."""
    kind, p = _kind(spec), _scalar_params(spec, h)
    with mp.workdps(DPS):
        z1, z2 = mp.mpf(z1), mp.mpf(z2)
        e1, e2 = z1 * rel_step, z2 * rel_step

        def F(a, b):
            return mp.exp(-exponent_V_mp(a, b, kind, p))

        d = F(z1 + e1, z2 + e2) - F(z1 + e1, z2 - e2) - F(z1 - e1, z2 + e2) + F(z1 - e1, z2 - e2)
        return float(d / (4 * e1 * e2))
