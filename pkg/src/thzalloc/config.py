"""Run configuration (INI text) and long-format result tables (CSV / JSON)."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError, ParseError, RangeError
from .spectrum import GHZ, TW_REGISTRY, TwFit

OUT_DIR_ENV = "THZALLOC_OUT_DIR"
METHODS = ("fp", "admm", "eq-power", "random-uasa", "single-conn")


def _sec(name, **kw):
    return field(metadata={"section": name}, **kw)


@dataclass(frozen=True)
class RunConfig:
    # [scenario]
    n_bs: int = _sec("scenario", default=6)
    n_users: int = _sec("scenario", default=12)
    radius: float = _sec("scenario", default=30.0)
    p_max: float = _sec("scenario", default=1.0)
    q_align: float = _sec("scenario", default=0.2)
    antenna_gain_db: float = _sec("scenario", default=25.0)
    nakagami_m: float = _sec("scenario", default=20.0)
    blockage_density: float = _sec("scenario", default=0.005)
    n0_dbm_hz: float = _sec("scenario", default=-174.0)
    gamma_floor: int = _sec("scenario", default=1)
    hi_kt: float = _sec("scenario", default=0.0)
    hi_kr: float = _sec("scenario", default=0.0)
    csi_zeta: float = _sec("scenario", default=1.0)
    # [spectrum]
    window: str = _sec("spectrum", default="TW3")
    fit_t1: Optional[float] = _sec("spectrum", default=None)
    fit_t2: Optional[float] = _sec("spectrum", default=None)
    fit_t3: Optional[float] = _sec("spectrum", default=None)
    fit_t4: Optional[float] = _sec("spectrum", default=None)
    fit_f_lo: Optional[float] = _sec("spectrum", default=None)
    fit_f_hi: Optional[float] = _sec("spectrum", default=None)
    epsilon: float = _sec("spectrum", default=0.05)
    w_guard: float = _sec("spectrum", default=0.5 * GHZ)
    b_th: float = _sec("spectrum", default=0.01)
    w_lead: Optional[float] = _sec("spectrum", default=None)
    w_trail: Optional[float] = _sec("spectrum", default=None)
    k_scale: float = _sec("spectrum", default=1.0)
    # [solver]
    method: str = _sec("solver", default="fp")
    eps1: float = _sec("solver", default=1e-3)
    eps_a: float = _sec("solver", default=1e-3)
    eps3: float = _sec("solver", default=1e-3)
    eps_b: float = _sec("solver", default=1e-8)
    rho: float = _sec("solver", default=2.2)
    l_max: int = _sec("solver", default=200)
    l_max_admm: int = _sec("solver", default=50)
    outer_max: int = _sec("solver", default=30)
    init_scale: float = _sec("solver", default=0.5)
    # [sweep]
    param: Optional[str] = _sec("sweep", default=None)
    values: tuple = _sec("sweep", default=())
    drops: int = _sec("sweep", default=20)
    methods: tuple = _sec("sweep", default=("fp",))
    # [run]
    seed: int = _sec("run", default=1)
    out_dir: str = _sec("run", default="results")
    formats: tuple = _sec("run", default=("csv",))
    n_jobs: int = _sec("run", default=1)

    def __post_init__(self):
        validate(self)

    def replace(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    @property
    def fit(self) -> TwFit:
        if self.window.lower() == "custom":
            return TwFit(self.fit_t1, self.fit_t2, self.fit_t3, self.fit_t4, self.fit_f_lo, self.fit_f_hi)
        return TW_REGISTRY[self.window.upper()]

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUT_DIR_ENV) or self.out_dir)


FIELDS = {f.name: f for f in fields(RunConfig)}
SECTIONS = ("scenario", "spectrum", "solver", "sweep", "run")

# field -> (lower, upper, lower inclusive, upper inclusive)
_RANGES = {
    "n_bs": (1, None, True, None), "n_users": (1, None, True, None),
    "radius": (0, None, False, None), "p_max": (0, None, False, None),
    "q_align": (0, 1, True, True), "nakagami_m": (0.5, None, True, None),
    "blockage_density": (0, None, True, None), "gamma_floor": (0, None, True, None),
    "hi_kt": (0, 1, True, True), "hi_kr": (0, 1, True, True), "csi_zeta": (0, 1, True, True),
    "epsilon": (0, None, False, None), "w_guard": (0, None, True, None), "b_th": (0, None, False, None),
    "w_lead": (0, None, True, None), "w_trail": (0, None, True, None), "k_scale": (0, None, True, None),
    "eps1": (0, None, False, None), "eps_a": (0, None, False, None), "eps3": (0, None, False, None),
    "eps_b": (0, None, False, None), "rho": (0, None, False, None), "l_max": (1, None, True, None),
    "l_max_admm": (1, None, True, None), "outer_max": (1, None, True, None),
    "init_scale": (0, 1, False, True), "drops": (1, None, True, None), "n_jobs": (1, None, True, None),
}

SWEEPABLE = ("q_align", "k_scale", "hi_level", "hi_kt", "hi_kr", "csi_zeta", "blockage_density",
             "n_bs", "n_users", "radius", "p_max", "nakagami_m", "gamma_floor", "epsilon", "w_guard",
             "b_th", "rho")


def _check_range(name, v):
    lo, hi, lo_inc, hi_inc = _RANGES[name]
    bad = (lo is not None and (v < lo if lo_inc else v <= lo)) or (hi is not None and (v > hi if hi_inc else v >= hi))
    if bad or (isinstance(v, float) and math.isnan(v)):
        lb = "-inf" if lo is None else ("[" if lo_inc else "(") + str(lo)
        ub = "inf" if hi is None else str(hi) + ("]" if hi_inc else ")")
        raise RangeError(f"{name} = {v!r} outside {lb}, {ub}")


def validate(cfg: RunConfig) -> None:
    for name in _RANGES:
        v = getattr(cfg, name)
        if v is not None:
            _check_range(name, v)
    if cfg.window.lower() == "custom":
        missing = [n for n in ("fit_t1", "fit_t2", "fit_t3", "fit_t4", "fit_f_lo", "fit_f_hi") if getattr(cfg, n) is None]
        if missing:
            raise RangeError(f"window = custom requires {', '.join(missing)}")
        try:
            cfg.fit
        except ValueError as e:
            raise RangeError(f"custom fit: {e}") from None
    elif cfg.window.upper() not in TW_REGISTRY:
        raise RangeError(f"window = {cfg.window!r} not one of {sorted(TW_REGISTRY)} or custom")
    if (cfg.w_lead is None) != (cfg.w_trail is None):
        raise RangeError("w_lead and w_trail must be given together")
    if cfg.method not in METHODS:
        raise RangeError(f"method = {cfg.method!r} not one of {METHODS}")
    for m in cfg.methods:
        if m not in METHODS:
            raise RangeError(f"methods: {m!r} not one of {METHODS}")
    for f in cfg.formats:
        if f not in ("csv", "json"):
            raise RangeError(f"formats: {f!r} not csv or json")
    if cfg.param is not None and cfg.param not in SWEEPABLE:
        raise RangeError(f"param = {cfg.param!r} is not sweepable; choose from {SWEEPABLE}")
    if cfg.param is not None and not cfg.values:
        raise RangeError("values: sweep grid is empty")
    if cfg.n_users < cfg.n_bs:
        raise RangeError(f"n_users = {cfg.n_users} must be >= n_bs = {cfg.n_bs}")


# ----------------------------------------------------------------- text I/O

def _tuple_type(name):
    return str if name in ("methods", "formats") else float


def _parse_value(name, raw: str):
    f = FIELDS[name]
    raw = raw.strip()
    if f.default is None and raw.lower() in ("", "none"):
        return None
    try:
        if isinstance(f.default, tuple):
            conv = _tuple_type(name)
            return tuple(conv(x.strip()) for x in raw.replace(",", " ").split() if x.strip())
        if isinstance(f.default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(f.default, int):
            return int(raw)
        if isinstance(f.default, float) or (f.default is None and name not in ("param",)):
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"{name}: cannot parse {raw!r}") from None


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ParseError(str(e).replace("\n", " ")) from None
    kw = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ParseError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in FIELDS:
                raise ParseError(f"[{sec}] unknown key {key!r}")
            if FIELDS[key].metadata["section"] != sec:
                raise ParseError(f"key {key!r} belongs in [{FIELDS[key].metadata['section']}], not [{sec}]")
            kw[key] = _parse_value(key, raw)
    try:
        return RunConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ParseError(str(e)) from None


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from None
    return parse_config(text, source=str(p))


def dump_config(cfg: RunConfig) -> str:
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        for f in fields(cfg):
            if f.metadata["section"] == sec:
                out.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
        out.append("")
    return "\n".join(out)


def save_config(cfg: RunConfig, path) -> Path:
    p = Path(path)
    p.write_text(dump_config(cfg))
    return p


# ------------------------------------------------------------- result table

SCHEMA_VERSION = 1
COLUMNS = ("schema_version", "method", "param", "value", "drop", "seed", "sum_rate", "aom",
           "iterations", "runtime", "status")
_INT_COLS = ("schema_version", "drop", "seed", "iterations")
_FLOAT_COLS = ("value", "sum_rate", "aom", "runtime")


def _num(x) -> str:
    return f"{x:.12g}"


def _round12(x):
    return None if x is None else float(_num(float(x)))


@dataclass
class ResultTable:
    """Long format: one row per (method, grid value, drop)."""

    rows: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def add(self, method, param, value, drop, seed, sum_rate, aom, iterations, runtime=0.0, status="ok"):
        self.rows.append({
            "schema_version": self.schema_version, "method": method, "param": param or "",
            "value": _round12(value), "drop": int(drop), "seed": int(seed),
            "sum_rate": _round12(sum_rate), "aom": _round12(aom), "iterations": int(iterations),
            "runtime": _round12(runtime), "status": status,
        })

    def sorted(self) -> "ResultTable":
        key = lambda r: (r["method"], r["param"], -math.inf if r["value"] is None else r["value"], r["drop"])
        return ResultTable(sorted(self.rows, key=key), self.schema_version)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, ResultTable) and self.schema_version == other.schema_version \
            and _canon(self.rows) == _canon(other.rows)


def _canon(rows):
    return [{k: ("nan" if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return _num(v)
    return str(v)


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in table.rows:
        w.writerow([_cell(r[c]) for c in COLUMNS])
    return buf.getvalue()


def from_csv(text: str) -> ResultTable:
    rd = csv.DictReader(io.StringIO(text))
    if tuple(rd.fieldnames or ()) != COLUMNS:
        raise ParseError(f"CSV header {rd.fieldnames} does not match schema {COLUMNS}")
    rows = []
    for r in rd:
        row = {}
        for c in COLUMNS:
            v = r[c]
            if c in _INT_COLS:
                row[c] = int(v)
            elif c in _FLOAT_COLS:
                row[c] = None if v == "" else float(v)
            else:
                row[c] = v
        rows.append(row)
    ver = rows[0]["schema_version"] if rows else SCHEMA_VERSION
    return ResultTable(rows, ver)


def to_json(table: ResultTable) -> str:
    def enc(v):
        if isinstance(v, float):
            return None if math.isnan(v) else float(_num(v))
        return v
    return json.dumps([{c: enc(r[c]) for c in COLUMNS} for r in table.rows], indent=1) + "\n"


def export_results(table: ResultTable, out_dir, formats=("csv",), stem: str = "results") -> list[Path]:
    if not len(table):
        raise ValueError("empty result table")
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        p = d / f"{stem}.{fmt}"
        p.write_text(to_csv(table) if fmt == "csv" else to_json(table))
        paths.append(p)
    return paths


def summarize(table: ResultTable) -> list[dict]:
    """Mean and standard error of sum_rate and aom per (method, param, value), successful rows only."""
    groups: dict = {}
    for r in table.rows:
        if r["status"] != "ok":
            groups.setdefault((r["method"], r["param"], r["value"]), [])
            continue
        groups.setdefault((r["method"], r["param"], r["value"]), []).append(r)
    out = []
    for (m, p, v), rs in groups.items():
        n = len(rs)
        rec = {"method": m, "param": p, "value": v, "n": n}
        for c in ("sum_rate", "aom"):
            xs = [x[c] for x in rs]
            mean = sum(xs) / n if n else math.nan
            var = sum((x - mean) ** 2 for x in xs) / (n - 1) if n > 1 else 0.0
            rec[c + "_mean"] = mean
            rec[c + "_se"] = math.sqrt(var / n) if n else math.nan
        out.append(rec)
    return out


def summary_csv(summary: list[dict]) -> str:
    cols = ("method", "param", "value", "n", "sum_rate_mean", "sum_rate_se", "aom_mean", "aom_se")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in summary:
        w.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
