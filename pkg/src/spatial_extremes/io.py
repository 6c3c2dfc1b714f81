"""File formats, deterministic serialization, seeding and run configuration schemas."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
from pathlib import Path
import tempfile
import zlib

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError
from .margins import MaximaPanel
from .spatial import SiteSet

# --- numbers and documents --------------------------------------------------------


def fmt(x) -> str:
    """17 significant digits (round-trip safe); empty string for missing."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def _to_plain(obj):
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        # JSON has no inf/nan; they become null
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(k) + ": " + _encode(obj[k], indent, level + 1) for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits, non-finite as null."""
    return _encode(_to_plain(obj), indent, 0) + "\n"


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, dumps(obj))


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# --- seeds --------------------------------------------------------------------------


def derive_seed(seed: int, name: str) -> int:
    """Subsystem seed: the first 64-bit word of ``SeedSequence(seed, spawn_key=(crc32(name),))``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --- panels -------------------------------------------------------------------------


def _num(cell: str, where: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ConfigError(f"{where}: non-numeric value {cell!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{where}: non-finite value {cell!r}")
    return v


def load_stations(path):
    """Stations CSV with header ``id,lon_km,lat_km,role``; returns (ids, coords, roles) sorted by id."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"stations file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["id", "lon_km", "lat_km", "role"]:
        raise ConfigError(f"{path}:1: header must be id,lon_km,lat_km,role")
    recs = {}
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise ConfigError(f"{path}:{ln}: expected 4 fields, got {len(row)}")
        sid, lon, lat, role = (c.strip() for c in row)
        if sid in recs:
            raise ConfigError(f"{path}:{ln}: duplicate station id {sid!r}")
        if role not in ("fit", "validate"):
            raise ConfigError(f"{path}:{ln}: role must be 'fit' or 'validate', got {role!r}")
        recs[sid] = (_num(lon, f"{path}:{ln}"), _num(lat, f"{path}:{ln}"), role)
    ids = sorted(recs)
    coords = np.array([recs[i][:2] for i in ids], dtype=float).reshape(-1, 2)
    return ids, coords, [recs[i][2] for i in ids]


def load_panel(stations_path, maxima_path) -> MaximaPanel:
    """Read stations and maxima CSVs into a panel; sites ordered by id, empty cells missing."""
    ids, coords, roles = load_stations(stations_path)
    maxima_path = Path(maxima_path)
    if not maxima_path.exists():
        raise ConfigError(f"maxima file not found: {maxima_path}")
    with open(maxima_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0].strip() != "year":
        raise ConfigError(f"{maxima_path}:1: header must start with 'year'")
    cols = [c.strip() for c in rows[0][1:]]
    if len(set(cols)) != len(cols):
        raise ConfigError(f"{maxima_path}:1: duplicate station column")
    unknown = set(cols) - set(ids)
    if unknown:
        raise ConfigError(f"{maxima_path}:1: unknown station id(s) {sorted(unknown)}")
    absent = set(ids) - set(cols)
    if absent:
        raise ConfigError(f"{maxima_path}:1: no column for station(s) {sorted(absent)}")
    pos = {c: i for i, c in enumerate(cols)}
    years, data = [], []
    for ln, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(cols) + 1:
            raise ConfigError(f"{maxima_path}:{ln}: expected {len(cols) + 1} fields, got {len(row)}")
        try:
            year = int(row[0])
        except ValueError:
            raise ConfigError(f"{maxima_path}:{ln}: bad year {row[0]!r}") from None
        if year in years:
            raise ConfigError(f"{maxima_path}:{ln}: duplicate year {year}")
        vals = [math.nan if not c.strip() else _num(c, f"{maxima_path}:{ln}") for c in row[1:]]
        years.append(year)
        data.append([vals[pos[i]] for i in ids])
    values = np.array(data, dtype=float).T.reshape(len(ids), len(years))
    return MaximaPanel(SiteSet(ids, coords), years, values, roles)


def panel_csv(panel: MaximaPanel) -> str:
    rows = [[y] + [fmt(v) for v in panel.values[:, i]] for i, y in enumerate(panel.years)]
    return csv_text(["year"] + list(panel.sites.ids), rows)


def stations_csv(panel: MaximaPanel) -> str:
    roles = panel.roles or ["fit"] * panel.n_sites
    rows = [[i, fmt(x), fmt(y), r] for i, (x, y), r in zip(panel.sites.ids, panel.sites.coords, roles)]
    return csv_text(["id", "lon_km", "lat_km", "role"], rows)


# --- configuration schemas ----------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {"enum": ["smith", "schlather", "randomset", "geometric_gaussian", "brown_resnick",
                            "husler_reiss", "extremal_t", "gaussian", "student", "independence"]},
        "corr_family": {"enum": ["whittle_matern", "cauchy", "stable", "exponential"]},
        "anisotropic": {"type": "boolean"},
        "params": {"type": "object", "additionalProperties": _NUM},
    },
}

_COMMON = {"seed": {"type": "integer", "minimum": 0}, "command": {"type": "string"}}

SCHEMAS = {
    "fit": {
        "type": "object", "additionalProperties": False,
        "required": ["stations", "maxima", "model"],
        "properties": {
            **_COMMON,
            "stations": {"type": "string"}, "maxima": {"type": "string"},
            "model": MODEL_SCHEMA,
            "fixed": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
            "likelihood": {"enum": ["pairwise", "full"]},
            "pair_cutoff_km": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "xi_barrier": {"type": "boolean"},
            "optimizer": {
                "type": "object", "additionalProperties": False,
                "properties": {"starts": _INT1, "max_evals": _INT1, "ftol": _POS, "xtol": _POS,
                               "jitter": _POS, "restarts": {"type": "integer", "minimum": 0}},
            },
            "theta_distances_km": {"type": "array", "items": {"type": "number", "minimum": 0}},
        },
    },
    "mcmc": {
        "type": "object", "additionalProperties": False,
        "required": ["stations", "maxima"],
        "properties": {
            **_COMMON,
            "stations": {"type": "string"}, "maxima": {"type": "string"},
            "trend": {"type": "array", "items": {"type": "boolean"}, "minItems": 3, "maxItems": 3},
            "priors": {
                "type": "object", "additionalProperties": False,
                "patternProperties": {"^(eta|tau|xi)$": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"beta_mean": {"type": "array", "items": _NUM},
                                   "beta_cov": {"type": "array", "items": {"type": "array", "items": _NUM}},
                                   "sill_shape": _POS, "sill_scale": _POS,
                                   "range_shape": _POS, "range_scale": _POS}}},
            },
            "mcmc": {
                "type": "object", "additionalProperties": False,
                "properties": {"iterations": {"type": "integer", "minimum": 0},
                               "burn_in": {"type": "integer", "minimum": 0}, "thin": _INT1,
                               "rw_sites": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
                               "rw_range": _POS, "adapt": {"type": "boolean"},
                               "corr_family": {"enum": ["exponential", "stable", "cauchy"]},
                               "corr_kappa": _POS},
            },
        },
    },
    "simulate": {
        "type": "object", "additionalProperties": False,
        "required": ["model", "n_years"],
        "properties": {
            **_COMMON,
            "stations": {"type": "string"},
            "coords_km": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                       "minItems": 2, "maxItems": 2}},
            "model": MODEL_SCHEMA,
            "margins": {"type": "object", "additionalProperties": False,
                        "properties": {k: {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 3}
                                       for k in ("eta", "tau", "xi")}},
            "n_years": _INT1, "first_year": {"type": "integer"},
            "copula_m": _INT1,
        },
    },
    "madogram": {
        "type": "object", "additionalProperties": False,
        "required": ["stations", "maxima"],
        "properties": {**_COMMON, "stations": {"type": "string"}, "maxima": {"type": "string"},
                       "margins": {"enum": ["empirical", "frechet"]}, "n_bins": _INT1},
    },
    "check": {
        "type": "object", "additionalProperties": False,
        "required": ["stations", "maxima", "model"],
        "properties": {
            **_COMMON,
            "stations": {"type": "string"}, "maxima": {"type": "string"},
            "model": MODEL_SCHEMA,
            "groups": {"type": "array", "items": {"type": "array", "items": {"type": "string"}, "minItems": 1}},
            "n_sim": _INT1, "copula_m": _INT1,
            "area": {"type": "object", "additionalProperties": False,
                     "properties": {"center_km": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                                    "radius_km": _POS, "grid_step_km": _POS, "n_realizations": _INT1}},
        },
    },
    "returnmap": {
        "type": "object", "additionalProperties": False,
        "required": ["mcmc_dir", "return_period"],
        "properties": {
            **_COMMON,
            "mcmc_dir": {"type": "string"},
            "return_period": {"type": "number", "exclusiveMinimum": 1},
            "grid": {"type": "object", "additionalProperties": False, "required": ["xlim", "ylim"],
                     "properties": {"xlim": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                                    "ylim": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                                    "step_km": _POS}},
            "max_states": _INT1,
        },
    },
}

PATH_KEYS = ("stations", "maxima", "mcmc_dir")


def load_config(path, command: str) -> dict:
    """Read and validate a JSON run configuration; relative paths resolve against its directory."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return validate_config(cfg, command, base=path.parent)


def validate_config(cfg: dict, command: str, base=".") -> dict:
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for command {cfg['command']!r}, not {command!r}")
    out = dict(cfg)
    out["command"] = command
    # paths stay as written in the echo; _base anchors them
    out["_base"] = str(Path(base).resolve())
    return out


def resolve(cfg: dict, key: str) -> str:
    """Absolute path of a config path entry, relative to the config's directory."""
    return str((Path(cfg.get("_base", ".")) / cfg[key]).resolve())


def config_echo(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def run_header(cfg: dict, inputs: dict) -> dict:
    """Provenance block embedded in every output document."""
    return {
        "artifact_version": __version__,
        "config": config_echo(cfg),
        "seed": cfg.get("seed"),
        "input_sha256": {k: file_sha256(p) for k, p in sorted(inputs.items())},
    }
