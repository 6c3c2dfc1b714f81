"""Command-line entry points: fit, mcmc, simulate, madogram, check, returnmap.

Exit codes: 0 success, 1 user error, 2 numerical failure. Errors are also
reported as a one-line JSON document on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import os
from pathlib import Path
import sys
import time

import numpy as np

from . import __version__
from .dependence import practical_range, theta_curve
from .diagnostics import STATS, area_statistic_T, fmadogram, groupwise_check, regular_grid
from .errors import (
    AllStartsFailedError, ConfigError, InsufficientDataError, InvalidParameterError,
    NonFiniteDensityError, NoRootError, NotPositiveDefiniteError, SingularHessianError,
    SpatialExtremesError, UnsupportedSpecError, DomainError, EmptyBallError,
)
from .fitting import (
    FitConfig, MARGIN_NAMES, ModelTemplate, OptimConfig, fit_model, surface_from,
)
from .io import (
    csv_text, derive_seed, dumps, file_sha256, fmt, load_config, load_panel, load_stations,
    panel_csv, resolve, run_header, stations_csv, atomic_write,
)
from .latent import (
    BLOCKS, BlockPrior, ChainResult, McmcConfig, PriorConfig, posterior_return_map, run_chain,
    vague_block,
)
from .margins import MaximaPanel, SurfaceModel, TrendSurface, panel_from_frechet, panel_to_frechet
from .simulation import SimConfig, simulate_frechet, spec_record
from .spatial import SiteSet

THREADS_ENV = "SPATIAL_EXTREMES_THREADS"

USER_ERRORS = (ConfigError, InvalidParameterError, InsufficientDataError, UnsupportedSpecError,
               DomainError, EmptyBallError, FileNotFoundError, NoRootError)
NUMERIC_ERRORS = (AllStartsFailedError, SingularHessianError, NotPositiveDefiniteError,
                  NonFiniteDensityError, FloatingPointError, np.linalg.LinAlgError)


# --- helpers ----------------------------------------------------------------------------


def _template(model: dict) -> ModelTemplate:
    return ModelTemplate(model["family"], model.get("corr_family", "exponential"),
                         model.get("anisotropic", False))


def _model_parts(model: dict):
    """Dependence spec and (optional) margin surface from a model block with ``params``."""
    tpl = _template(model)
    params = dict(model.get("params", {}))
    unknown = set(params) - set(tpl.names)
    if unknown:
        raise ConfigError(f"unknown model parameter(s) {sorted(unknown)}")
    missing = [n for n in tpl.dep_names if n not in params]
    if missing:
        raise ConfigError(f"model parameter(s) missing: {missing}")
    spec = tpl.build_spec({n: params[n] for n in tpl.dep_names})
    surface = None
    if any(n in params for n in MARGIN_NAMES):
        full = {n: params.get(n, 0.0) for n in MARGIN_NAMES}
        surface = surface_from(full)
    return tpl, spec, surface


def _surface_from_lists(m: dict) -> SurfaceModel:
    def ts(v):
        v = list(v) + [0.0] * (3 - len(v))
        return TrendSurface(*v)
    return SurfaceModel(ts(m["eta"]), ts(m["tau"]), ts(m.get("xi", [0.0])))


def _finish(out: Path, files: dict, t0: float, threads: int) -> None:
    for name, text in files.items():
        atomic_write(out / name, text)
    manifest = {
        "artifact_version": __version__,
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
        "threads": threads,
        "outputs": {n: file_sha256(out / n) for n in sorted(files)},
    }
    atomic_write(out / "manifest.json", dumps(manifest))


# --- commands ---------------------------------------------------------------------------


def cmd_fit(cfg: dict) -> dict:
    panel = load_panel(resolve(cfg, "stations"), resolve(cfg, "maxima"))
    tpl = _template(cfg["model"])
    opt = OptimConfig(**cfg.get("optimizer", {}))
    fc = FitConfig(cfg.get("likelihood", "pairwise"), cfg.get("pair_cutoff_km"),
                   cfg.get("xi_barrier", False), opt)
    seed = cfg["seed"]
    rep = fit_model(panel, tpl, initial=cfg["model"].get("params"), fixed=cfg.get("fixed", ()),
                    cfg=fc, seed=derive_seed(seed, "fit"))
    doc = run_header(cfg, {"stations": resolve(cfg, "stations"), "maxima": resolve(cfg, "maxima")})
    doc["fit_report"] = rep.to_dict()
    est = rep.estimates.as_dict()
    doc["covariance"] = None if rep.covariance is None else rep.covariance.tolist()
    doc["optimizer_trace"] = rep.trace
    spec = tpl.build_spec({n: est[n] for n in tpl.dep_names})
    if tpl.family in ("independence", "gaussian"):
        doc["practical_range"] = None
        doc["theta_curve"] = None
    else:
        dist = cfg.get("theta_distances_km", [float(d) for d in range(0, 201, 5)])
        curve = theta_curve(spec, dist)
        try:
            pr = practical_range(spec)
        except NoRootError:
            pr = (math.inf, math.inf)
        doc["practical_range"] = {"h_minus": pr[0], "h_plus": pr[1]}
        doc["theta_curve"] = {"distance_km": curve.distances.tolist(), "theta": curve.theta.tolist()}
    return {"fit_report.json": dumps(doc)}


def _priors(cfg: dict) -> PriorConfig:
    trend = tuple(cfg.get("trend", (True, True, False)))
    base = PriorConfig.default(trend)
    blocks = []
    for b in BLOCKS:
        d = cfg.get("priors", {}).get(b)
        cur = base.block(b)
        if d is None:
            blocks.append(cur)
            continue
        mean = tuple(d.get("beta_mean", cur.beta_mean))
        cov = tuple(map(tuple, d.get("beta_cov", cur.beta_cov)))
        blocks.append(BlockPrior(mean, cov, d.get("sill_shape", cur.sill_shape),
                                 d.get("sill_scale", cur.sill_scale), d.get("range_shape", cur.range_shape),
                                 d.get("range_scale", cur.range_scale)))
    return PriorConfig(*blocks)


def cmd_mcmc(cfg: dict) -> dict:
    panel = load_panel(resolve(cfg, "stations"), resolve(cfg, "maxima"))
    if panel.roles:
        panel = panel.subset_sites(panel.role_indices("fit"))
    priors = _priors(cfg)
    m = dict(cfg.get("mcmc", {}))
    if "rw_sites" in m:
        m["rw_sites"] = tuple(m["rw_sites"])
    mc = McmcConfig(**m, seed=derive_seed(cfg["seed"], "mcmc"))
    res = run_chain(panel, priors, mc)
    names, mat = res.column_table()
    samples = csv_text(["state"] + names, [[i] + [fmt(v) for v in row] for i, row in enumerate(mat)])
    doc = run_header(cfg, {"stations": resolve(cfg, "stations"), "maxima": resolve(cfg, "maxima")})
    doc["mcmc"] = {
        "n_retained": len(res), "acceptance": res.acceptance, "rw_final": res.rw_final,
        "summary": res.summary, "beta_names": res.beta_names,
        "sites": {"ids": list(panel.sites.ids), "coords_km": panel.sites.coords.tolist()},
        "corr_family": res.corr_family, "corr_kappa": res.corr_kappa,
    }
    return {"samples.csv": samples, "mcmc_report.json": dumps(doc)}


def _sites_from(cfg: dict):
    if "stations" in cfg:
        ids, coords, roles = load_stations(resolve(cfg, "stations"))
        return SiteSet(ids, coords), roles
    if "coords_km" in cfg:
        return SiteSet.from_coords(cfg["coords_km"]), None
    raise ConfigError("simulate needs 'stations' or 'coords_km'")


def cmd_simulate(cfg: dict) -> dict:
    sites, roles = _sites_from(cfg)
    tpl, spec, surface = _model_parts(cfg["model"])
    if "margins" in cfg:
        surface = _surface_from_lists(cfg["margins"])
    n = cfg["n_years"]
    first = cfg.get("first_year", 1)
    sim = SimConfig(copula_m=cfg.get("copula_m", 1000))
    fr = simulate_frechet(spec, sites, n, sim, seed=derive_seed(cfg["seed"], "simulate"))
    panel = MaximaPanel(sites, range(first, first + n), fr.values, roles)
    if surface is not None:
        panel = panel_from_frechet(panel, surface)
    inputs = {"stations": resolve(cfg, "stations")} if "stations" in cfg else {}
    doc = run_header(cfg, inputs)
    doc["truth"] = {"spec": spec_record(spec), "scale": "gev" if surface is not None else "unit_frechet",
                    "surface": None if surface is None else
                    {k: list(getattr(surface, k).coefs) for k in ("eta", "tau", "xi")}}
    return {"maxima.csv": panel_csv(panel), "stations.csv": stations_csv(panel),
            "simulate_report.json": dumps(doc)}


def cmd_madogram(cfg: dict) -> dict:
    panel = load_panel(resolve(cfg, "stations"), resolve(cfg, "maxima"))
    est = fmadogram(panel, cfg.get("margins", "empirical"), n_bins=cfg.get("n_bins", 10))
    ids = panel.sites.ids
    pairs = csv_text(["site_j", "site_k", "distance_km", "n_common", "nu_f", "theta", "se"],
                     [[ids[j], ids[k], fmt(d), n, fmt(nu), fmt(t), fmt(s)] for (j, k), d, n, nu, t, s in
                      zip(est.pairs, est.distance, est.n_common, est.nu, est.theta, est.se)])
    bins = csv_text(["bin_lo_km", "bin_hi_km", "theta_mean"],
                    [[fmt(lo), fmt(hi), fmt(t)] for lo, hi, t in
                     zip(est.bin_edges[:-1], est.bin_edges[1:], est.bin_theta)])
    doc = run_header(cfg, {"stations": resolve(cfg, "stations"), "maxima": resolve(cfg, "maxima")})
    doc["madogram"] = {"n_pairs": len(est.pairs), "n_clamped": est.n_clamped,
                       "margins": cfg.get("margins", "empirical")}
    return {"madogram_pairs.csv": pairs, "madogram_bins.csv": bins, "madogram_report.json": dumps(doc)}


def cmd_check(cfg: dict) -> dict:
    panel = load_panel(resolve(cfg, "stations"), resolve(cfg, "maxima"))
    tpl, spec, surface = _model_parts(cfg["model"])
    if surface is None:
        raise ConfigError("check needs fitted margin parameters in model.params")
    ids = list(panel.sites.ids)
    if "groups" in cfg:
        unknown = {g for grp in cfg["groups"] for g in grp} - set(ids)
        if unknown:
            raise ConfigError(f"unknown station id(s) in groups: {sorted(unknown)}")
        groups = [[ids.index(g) for g in grp] for grp in cfg["groups"]]
    else:
        val = panel.role_indices("validate")
        if not val:
            raise ConfigError("no groups given and no validation stations")
        groups = [val]
    used = sorted({i for g in groups for i in g})
    sub = panel.subset_sites(used)
    remap = {i: k for k, i in enumerate(used)}
    groups_sub = [[remap[i] for i in g] for g in groups]
    fr = panel_to_frechet(sub, surface, strict=False)
    obs = np.log(fr.values)
    sim = SimConfig(copula_m=cfg.get("copula_m", 1000))

    def sampler(rng):
        z = simulate_frechet(spec, sub.sites, sub.n_years, sim, seed=rng).values
        return np.log(z)

    res = groupwise_check(obs, sampler, groups_sub, n_sim=cfg.get("n_sim", 99),
                          seed=derive_seed(cfg["seed"], "check"))
    rows = []
    for t in res.tables:
        for r, (o, m, lo, hi) in enumerate(zip(t.observed, t.median, t.lower, t.upper), start=1):
            rows.append([t.group, t.stat, r, fmt(o), fmt(m), fmt(lo), fmt(hi)])
    files = {"check_qq.csv": csv_text(["group", "statistic", "rank", "observed", "sim_median",
                                       "env_lower", "env_upper"], rows)}
    doc = run_header(cfg, {"stations": resolve(cfg, "stations"), "maxima": resolve(cfg, "maxima")})
    doc["check"] = {
        "groups": [[ids[i] for i in g] for g in groups],
        "p_value_joint": res.p_value, "inside_joint": res.inside,
        "p_value_by_statistic": res.per_stat_p,
        "inside_by_group": [{"group": t.group, "statistic": t.stat, "inside": t.inside} for t in res.tables],
        "excluded_cells": len(fr.excluded_cells),
    }
    if "area" in cfg:
        a = cfg["area"]
        center = np.asarray(a.get("center_km", panel.sites.coords.mean(axis=0)), dtype=float)
        radius = a.get("radius_km", 10.0)
        step = a.get("grid_step_km", 2.0)
        grid = regular_grid((center[0] - radius, center[0] + radius),
                            (center[1] - radius, center[1] + radius), step)
        grid = grid[np.hypot(*(grid - center).T) <= radius]
        if len(grid) == 0:
            raise EmptyBallError("area grid has no cells inside the ball")
        gs = SiteSet.from_coords(grid)
        nreal = a.get("n_realizations", 1000)
        fz = simulate_frechet(spec, gs, nreal, sim, seed=derive_seed(cfg["seed"], "area"))
        y = panel_from_frechet(fz, surface).values
        T = [area_statistic_T(grid, y[:, i], center, radius) for i in range(nreal)]
        files["area_T.csv"] = csv_text(["realization", "T"], [[i + 1, fmt(t)] for i, t in enumerate(T)])
        doc["check"]["area"] = {"center_km": center.tolist(), "radius_km": radius,
                                "grid_step_km": step, "n_cells": len(grid), "n_realizations": nreal}
    files["check_report.json"] = dumps(doc)
    return files


def _load_chain(mcmc_dir: Path) -> ChainResult:
    rep_path, samp_path = mcmc_dir / "mcmc_report.json", mcmc_dir / "samples.csv"
    if not rep_path.exists() or not samp_path.exists():
        raise ConfigError(f"{mcmc_dir} lacks mcmc_report.json or samples.csv")
    rep = json.loads(rep_path.read_text())["mcmc"]
    lines = samp_path.read_text().splitlines()
    if len(lines) < 2:
        raise InsufficientDataError("MCMC sample file has no retained states")
    mat = np.array([[float(c) for c in ln.split(",")[1:]] for ln in lines[1:]])
    ids = rep["sites"]["ids"]
    D, P = len(ids), len(rep["beta_names"])
    S = len(mat)
    fields = mat[:, : 3 * D].reshape(S, 3, D)
    betas = mat[:, 3 * D: 3 * D + P]
    sills = mat[:, 3 * D + P: 3 * D + P + 3]
    ranges = mat[:, 3 * D + P + 3: 3 * D + P + 6]
    sites = SiteSet(ids, rep["sites"]["coords_km"])
    return ChainResult(fields, betas, sills, ranges, rep["beta_names"], rep["acceptance"], rep["rw_final"],
                       sites, McmcConfig(iterations=0, burn_in=0), rep["corr_family"], rep["corr_kappa"])


def cmd_returnmap(cfg: dict) -> dict:
    mdir = Path(resolve(cfg, "mcmc_dir"))
    chain = _load_chain(mdir)
    g = cfg.get("grid")
    if g is None:
        c = chain.sites.coords
        g = {"xlim": [float(c[:, 0].min()), float(c[:, 0].max())],
             "ylim": [float(c[:, 1].min()), float(c[:, 1].max())]}
    grid = regular_grid(g["xlim"], g["ylim"], g.get("step_km", 2.0))
    rmap = posterior_return_map(chain, grid, cfg["return_period"], seed=derive_seed(cfg["seed"], "returnmap"),
                                max_states=cfg.get("max_states"))
    rows = [[fmt(x), fmt(y), fmt(m), fmt(lo), fmt(hi)]
            for (x, y), m, lo, hi in zip(rmap.grid, rmap.mean, rmap.q025, rmap.q975)]
    doc = run_header(cfg, {"samples": str(mdir / "samples.csv"), "mcmc_report": str(mdir / "mcmc_report.json")})
    doc["returnmap"] = {"n_cells": len(grid), "missing_draws": rmap.n_missing,
                        "grid_step_km": g.get("step_km", 2.0)}
    return {"returnmap.csv": csv_text(["lon_km", "lat_km", "mean", "q025", "q975"], rows),
            "returnmap_report.json": dumps(doc)}


COMMANDS = {"fit": cmd_fit, "mcmc": cmd_mcmc, "simulate": cmd_simulate, "madogram": cmd_madogram,
            "check": cmd_check, "returnmap": cmd_returnmap}


# --- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spatial-extremes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=int, help="global seed (overrides the config)")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--threads", type=int, help=f"thread count (env {THREADS_ENV})")
    return p


def _error(exc: BaseException, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    threads = args.threads or int(os.environ.get(THREADS_ENV, "1") or 1)
    try:
        if threads > 1:
            # kernels are sequential; this only bounds numba's pool
            import warnings
            import numba
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg["seed"] = args.seed
        cfg.setdefault("seed", 0)
        files = COMMANDS[args.command](cfg)
        _finish(Path(args.out), files, t0, threads)
    except USER_ERRORS as exc:
        return _error(exc, 1)
    except NUMERIC_ERRORS as exc:
        return _error(exc, 2)
    except SpatialExtremesError as exc:
        return _error(exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
