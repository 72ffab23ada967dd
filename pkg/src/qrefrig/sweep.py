"""Config files, parameter sweeps and CSV writers."""

from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import NumericalAbort
from .fitting import FitError
from .refrigerators import CONFIG_FIELDS, RefrigeratorConfig, RunResult, run_protocol

log = logging.getLogger(__name__)

ALIASES = {"lambda": "lam", "T": "temperature", "omega_d": "drive_frequency"}
SWEEPABLE = ("g3", "t_int", "drive_frequency", "dt")
TRAJECTORY_HEADER = ["t", "p_exc_q1", "qdot_1", "qdot_B", "qdot_chi", "wdot", "Q_out_cum", "W_cum"]
SUMMARY_FIELDS = [
    "Q_out", "W", "COP", "avg_heat_flow", "T_cool", "a", "reset_count", "steady_population",
    "t_total", "drive_work", "W_ini_total",
]


class ConfigError(ValueError):
    pass


def _convert(name: str, raw: str, lineno: int):
    f = CONFIG_FIELDS[name]
    kind = str(f.type)
    text = raw.strip()
    if "None" in kind and text.lower() in ("none", "auto", ""):
        return None
    try:
        if kind.startswith("bool"):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        value = float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: value {raw.strip()!r} for {name!r} is not a valid number") from None
    if not np.isfinite(value):
        raise ConfigError(f"line {lineno}: value for {name!r} must be finite")
    return value


def parse_config_text(text: str, base: RefrigeratorConfig | None = None) -> RefrigeratorConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        name = ALIASES.get(key, key)
        if name not in CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[name] = _convert(name, raw, lineno)
    return (base or RefrigeratorConfig()).with_updates(**values)


def parse_config(path: str | os.PathLike | None) -> RefrigeratorConfig:
    """Read ``key = value`` lines (``#`` starts a comment); missing keys keep their defaults."""
    if path is None:
        return RefrigeratorConfig()
    return parse_config_text(Path(path).read_text())


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple[float, ...]
    protocol: str = "II"

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.param!r}; choose one of {', '.join(SWEEPABLE)}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("sweep values must be finite")
        if self.protocol.upper() not in ("I", "II"):
            raise ValueError("protocol must be I or II")


def parse_values(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValueError(f"could not parse value list {text!r}") from None
    return vals


def result_row(res: RunResult, extra: dict | None = None) -> dict:
    row = dict(extra or {})
    s = res.summary()
    row.update({k: s[k] for k in SUMMARY_FIELDS})
    return row


def _run_point(args):
    protocol, cfg, params = args
    start = time.perf_counter()
    try:
        res = run_protocol(protocol, cfg)
        row = result_row(res, params)
        row["status"] = "ok"
    except (NumericalAbort, FitError, ValueError) as exc:
        row = dict(params)
        row.update({k: float("nan") for k in SUMMARY_FIELDS})
        row["status"] = f"{type(exc).__name__}: {exc}"
    row["wall_time"] = time.perf_counter() - start
    return row


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("QREFRIG_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def run_sweep(spec: SweepSpec, base: RefrigeratorConfig, workers: int | None = None) -> list[dict]:
    """One row per value, in sweep order; failures are recorded in the ``status`` column."""
    jobs = [(spec.protocol, base.with_updates(**{spec.param: v}), {spec.param: v}) for v in spec.values]
    n = workers or worker_count(len(jobs))
    if n == 1:
        return [_run_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_point, jobs))


# ---------------------------------------------------------------- CSV


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else "nan"
    return str(v)


def write_rows(path, rows: Sequence[dict], columns: Sequence[str], comment: str | None = None) -> None:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    Path(path).write_text(buf.getvalue())


def trajectory_rows(res: RunResult, spacing: float = 10.0) -> list[dict]:
    """Thinned trajectory table; rows at reset boundaries are kept (they appear twice)."""
    traj = res.trajectory
    series = res.ledger.flux_series
    t = traj.times
    w_cum = series["W_cum"].copy()
    w_ini = res.W_ini_total / max(res.reset_count, 1)
    if res.protocol == "I":
        # each segment starts with a fresh preparation costing W_ini (plus any measurement cost)
        per = w_ini + res.config.measurement_cost
        starts = np.concatenate([[0], np.nonzero(np.diff(t) == 0)[0] + 1])
        seg_index = np.searchsorted(starts, np.arange(len(t)), side="right")
        w_cum += per * seg_index
    else:
        w_cum += res.W_ini_total
    sample_dt = float(np.median(np.diff(t))) if len(t) > 1 else 1.0
    k = max(1, int(round(spacing / sample_dt)))
    keep = np.zeros(len(t), bool)
    keep[::k] = True
    keep[-1] = True
    dup = np.nonzero(np.diff(t) == 0)[0]
    keep[dup] = True
    keep[dup + 1] = True
    idx = np.nonzero(keep)[0]
    cols = {
        "t": t, "p_exc_q1": traj.aux["p_exc_q1"], "qdot_1": series["qdot_A"], "qdot_B": series["qdot_B"],
        "qdot_chi": series["qdot_chi"], "wdot": series["wdot"], "Q_out_cum": series["Q_out_cum"], "W_cum": w_cum,
    }
    return [{c: cols[c][i] for c in TRAJECTORY_HEADER} for i in idx]


def write_trajectory(path, res: RunResult, spacing: float = 10.0) -> None:
    write_rows(path, trajectory_rows(res, spacing), TRAJECTORY_HEADER, f"config_sha256={res.config.digest()} protocol={res.protocol}")


def write_segments(path, res: RunResult) -> None:
    t_end, p_end = res.segment_ends
    rows = [
        {"segment": k, "t_end": t_end[k + 1], "p_exc_q1_end": p_end[k + 1], "Q_out_segment": q}
        for k, q in enumerate(res.extra.get("segment_Q_out", []))
    ]
    write_rows(path, rows, ["segment", "t_end", "p_exc_q1_end", "Q_out_segment"], f"config_sha256={res.config.digest()}")
