"""Acceptance battery: thirteen numbered checks with fixed tolerances.

Expensive runs (protocol I at defaults, the six-point g3 sweep, the t_int
sweep and the halved-dt run) are computed once per ``AcceptanceContext`` and
shared between criteria.  Only summaries are kept, never full trajectories.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import (
    LindbladChannel, OpenSystemModel, TimeDependentHamiltonian, liouvillian_expm, propagate, thermal_channels,
)
from .frames import FluxQubitParams, verify_rwa
from .quantum import (
    KET1, P_EXCITED, SIGMA_MINUS, SIGMA_Z, SubsystemLayout, expectation, ket_to_dm, random_density_matrix,
    random_hermitian,
)
from .refrigerators import (
    RefrigeratorConfig, build_refrigerator_I, build_refrigerator_II, initial_state_I, initial_state_II,
    run_protocol_I, run_protocol_II, verify_w_ini, w_ini,
)
from .thermo import accumulate, energy, flux_observers

G3_SWEEP = tuple(float(x) for x in np.linspace(8e-4, 4e-3, 6))
T_INT_FACTORS = (0.5, 1.0, 1.5, 2.0)
TARGET_W_I = 29.42
TARGET_SUM_W_INI = 14.50
CROSSOVER_WINDOW = (1.1e-3, 1.8e-3)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _light(res) -> dict:
    """Summary of a run plus the per-sample conservation residuals."""
    s = res.summary()
    fs = res.ledger.flux_series
    s["conservation_max"] = float(np.max(np.abs(fs["qdot_A"] + fs["qdot_B"] + fs["qdot_chi"])))
    s["ledger_sum"] = abs(res.ledger.Q_A + res.ledger.Q_B + res.ledger.Q_chi)
    s["max_trace_drift"] = float(np.max(np.abs(res.trajectory.trace_factors - 1.0)))
    s["min_eigenvalue"] = float(np.min(res.trajectory.min_eigenvalues))
    return s


@dataclass
class AcceptanceContext:
    base: RefrigeratorConfig = field(default_factory=RefrigeratorConfig)
    log: Callable[[str], None] | None = None
    _cache: dict = field(default_factory=dict)

    def _say(self, msg):
        if self.log:
            self.log(msg)

    def protocol_I(self, dt: float | None = None) -> dict:
        key = ("I", dt)
        if key not in self._cache:
            cfg = self.base if dt is None else self.base.with_updates(dt=dt)
            self._say(f"running protocol I (dt={cfg.dt})")
            self._cache[key] = _light(run_protocol_I(cfg))
        return self._cache[key]

    def t_int_sweep(self) -> list[dict]:
        if "t_int" not in self._cache:
            rows = []
            for f in T_INT_FACTORS:
                cfg = self.base.with_updates(t_int=f / self.base.gamma2)
                self._say(f"running protocol I (t_int={cfg.interval:g})")
                rows.append(dict(_light(run_protocol_I(cfg)), t_int=cfg.interval))
            self._cache["t_int"] = rows
        return self._cache["t_int"]

    def protocol_II(self, g3: float, dt: float | None = None) -> dict:
        key = ("II", g3, dt)
        if key not in self._cache:
            cfg = self.base.with_updates(g3=g3, **({} if dt is None else {"dt": dt}))
            self._say(f"running protocol II (g3={g3:g}, dt={cfg.dt})")
            self._cache[key] = dict(_light(run_protocol_II(cfg)), g3=g3)
        return self._cache[key]

    def g3_sweep(self) -> list[dict]:
        return [self.protocol_II(g) for g in G3_SWEEP]


# ---------------------------------------------------------------- criteria


def c1_thermal_fixed_point(ctx):
    gamma = ctx.base.gamma2
    lay = SubsystemLayout(1)
    model = OpenSystemModel(lay, TimeDependentHamiltonian([0.5 * SIGMA_Z]), thermal_channels(SIGMA_MINUS, gamma, 1.0, 0.1))
    traj = propagate(model, ket_to_dm(KET1), (0.0, 10 / gamma), 0.02, 1000, state_stride=10**12)
    p = float(expectation(traj.final_state, P_EXCITED).real)
    target = 1 / (math.exp(10) + 1)
    err = abs(p - target)
    return err < 1e-7, f"p_exc={p:.6e}, target={target:.6e}, |err|={err:.2e} (tol 1e-7)"


def c2_expm_oracle(ctx):
    rng = np.random.default_rng(20240501)
    lay = SubsystemLayout(2)
    errs = []
    for _ in range(5):
        h = random_hermitian(4, rng)
        chans = [LindbladChannel(random_hermitian(4, rng) + 1j * random_hermitian(4, rng), rng.uniform(0.01, 0.1)) for _ in range(2)]
        model = OpenSystemModel(lay, TimeDependentHamiltonian([h]), chans)
        rho0 = random_density_matrix(4, rng)
        traj = propagate(model, rho0, (0.0, 50.0), 0.005, 10000, state_stride=10**12)
        errs.append(float(np.linalg.norm(traj.final_state - liouvillian_expm(model, rho0, 50.0))))
    return max(errs) < 1e-8, "Frobenius errors " + ", ".join(f"{e:.1e}" for e in errs) + " (tol 1e-8)"


def c3_first_law(ctx):
    cfg = ctx.base.with_updates(gamma2=0.0)
    model, bip = build_refrigerator_I(cfg)
    period = 2 * np.pi / cfg.omega_d
    rho0 = initial_state_I()
    traj = propagate(model, rho0, (0.0, period), 1e-4, 1, flux_observers(bip, cfg.alpha), state_stride=10**12)
    led = accumulate(traj, bip)
    du = float(energy(period, traj.final_state, bip) - energy(0.0, rho0, bip))
    gap = abs(du - led.W_total)
    return gap < 1e-8, f"dU={du:.3e}, W={led.W_total:.3e}, |dU-W|={gap:.2e} (tol 1e-8)"


def c4_alpha_independence(ctx):
    cfg = ctx.base
    model, bip = build_refrigerator_II(cfg)
    traj = propagate(model, initial_state_II(cfg), (0.0, 2000.0), cfg.dt, cfg.stride, state_stride=1)
    rng = np.random.default_rng(7)
    idx = np.sort(rng.choice(len(traj.state_times), size=100, replace=False))
    t, states = traj.state_times[idx], traj.states[idx]
    out = {}
    for a in (0.0, 0.5, 1.0):
        obs = flux_observers(bip, a)
        out[a] = {k: obs[k](t, states) for k in ("qdot_A", "qdot_B", "qdot_chi", "wdot_A", "wdot_B", "wdot")}
    heat_dev = max(float(np.max(np.abs(out[a][k] - out[0.5][k]))) for a in out for k in ("qdot_A", "qdot_B", "qdot_chi"))
    sums = {a: out[a]["wdot_A"] + out[a]["wdot_B"] for a in out}
    sum_dev = max(float(np.max(np.abs(sums[a] - sums[0.5]))) for a in out)
    split = float(np.max(np.abs(out[0.0]["wdot_A"] - out[1.0]["wdot_A"])))
    ok = heat_dev <= 1e-12 and sum_dev <= 1e-12
    return ok, f"heat-flux spread {heat_dev:.1e}, work-sum spread {sum_dev:.1e} (tol 1e-12); per-party alpha spread {split:.1e}"


def c5_conservation(ctx):
    runs = [ctx.protocol_I()] + ctx.g3_sweep()
    pointwise = max(r["conservation_max"] for r in runs)
    ratio = max(r["ledger_sum"] / r["t_total"] for r in runs)
    ok = pointwise <= 1e-10 and ratio < 1e-8
    return ok, f"max |Qa+Qb+Qchi| rate {pointwise:.1e} (tol 1e-10); max |sum Q|/horizon {ratio:.1e} (tol 1e-8)"


def c6_w_ini(ctx):
    vals = {lp: verify_w_ini(lp) for lp in (0.05, 0.1, 0.2)}
    errs = {lp: abs(v - w_ini()) for lp, v in vals.items()}
    return max(errs.values()) < 1e-6, ", ".join(f"lam'={lp}: {v:.9f}" for lp, v in vals.items()) + " (target 0.5, tol 1e-6)"


def c7_reset_accounting(ctx):
    full = ctx.protocol_I()
    quick = ctx.protocol_I(dt=4 * ctx.base.dt)
    m, mq = full["reset_count"], quick["reset_count"]
    ok = abs(m - 29) <= 1 and abs(full["W_ini_total"] - TARGET_SUM_W_INI) <= 0.5 and m == mq
    return ok, (
        f"reset_count={m} (29 +/- 1), sum W_ini={full['W_ini_total']:.2f} (14.50 +/- 0.5), "
        f"quick-mode (dt={4 * ctx.base.dt:g}) reset_count={mq}, T_cool={full['T_cool']:.5g}"
    )


def c8_total_work(ctx):
    w = ctx.protocol_I()["W"]
    rel = abs(w - TARGET_W_I) / TARGET_W_I
    return rel <= 0.15, f"W_I={w:.3f} vs 29.42 (rel. dev. {100 * rel:.2f}%, tol 15%)"


def crossover(g3s, q2, q1):
    """Linear interpolation of the first sign change of ``Q_II - Q_I``."""
    d = np.asarray(q2) - q1
    for k in range(len(d) - 1):
        if d[k] <= 0 < d[k + 1] or d[k] < 0 <= d[k + 1]:
            return g3s[k] + (g3s[k + 1] - g3s[k]) * (-d[k]) / (d[k + 1] - d[k])
    return float("nan")


def c9_crossover(ctx):
    q1 = ctx.protocol_I()["Q_out"]
    rows = ctx.g3_sweep()
    g = crossover([r["g3"] for r in rows], [r["Q_out"] for r in rows], q1)
    lo, hi = CROSSOVER_WINDOW
    ok = np.isfinite(g) and lo <= g <= hi
    table = ", ".join(f"{r['g3']:.3g}:{r['Q_out']:.5f}" for r in rows)
    return ok, f"crossover g3={g:.4g} (window [{lo:g}, {hi:g}]); Q_I={q1:.5f}; Q_II by g3 {table}"


def _monotone(x, increasing=True):
    d = np.diff(np.asarray(x, dtype=float))
    return bool(np.all(d > 0) if increasing else np.all(d < 0))


def c10_orderings(ctx):
    rows = ctx.g3_sweep()
    cop_i = ctx.protocol_I()["COP"]
    checks = {
        "Q_II increasing": _monotone([r["Q_out"] for r in rows]),
        "avg flow decreasing": _monotone([r["avg_heat_flow"] for r in rows], False),
        "steady population decreasing": _monotone([r["steady_population"] for r in rows], False),
        "T_cool increasing": _monotone([r["T_cool"] for r in rows]),
        "COP_II > COP_I everywhere": all(r["COP"] > cop_i for r in rows),
    }
    cops = ", ".join(f"{r['g3']:.3g}:{r['COP']:.3e}" for r in rows)
    detail = "; ".join(f"{k}={'yes' if v else 'NO'}" for k, v in checks.items())
    return all(checks.values()), f"{detail}; COP_I={cop_i:.3e}, COP_II by g3 {cops}"


def c11_tradeoffs(ctx):
    rows = sorted(ctx.g3_sweep(), key=lambda r: r["Q_out"])
    cop_dec = _monotone([r["COP"] for r in rows], False)
    flow_dec = _monotone([r["avg_heat_flow"] for r in rows], False)
    pts = ctx.t_int_sweep()
    emitted = len(pts) == len(T_INT_FACTORS) and all(np.isfinite([p["Q_out"], p["COP"], p["avg_heat_flow"]]).all() for p in pts)
    prot1 = ", ".join(f"t_int={p['t_int']:g}:(Q={p['Q_out']:.4f},COP={p['COP']:.3e},flow={p['avg_heat_flow']:.3e})" for p in pts)
    ok = cop_dec and flow_dec and emitted
    return ok, (
        f"COP_II decreasing in Q_II={'yes' if cop_dec else 'NO'}; flow decreasing in Q_II={'yes' if flow_dec else 'NO'}; "
        f"protocol I points: {prot1}"
    )


def c12_rwa(ctx):
    p = FluxQubitParams.from_main_text(
        omega1=ctx.base.omega1, omega2=ctx.base.omega2, omega3=ctx.base.omega3, lam=ctx.base.lam, g1=ctx.base.g1,
        g3=0.0, delta2=ctx.base.delta2,
    )
    r1 = verify_rwa(p)
    r2 = verify_rwa(p.scaled(2.0), horizon=r1.horizon)
    lin = abs(r2.swap_frequency_full / r1.swap_frequency_full - 2.0) / 2.0
    ok = r1.relative_error <= 0.05 and lin <= 0.05
    return ok, (
        f"full={r1.swap_frequency_full:.5e}, eff={r1.swap_frequency_eff:.5e} (rel. err {100 * r1.relative_error:.2f}%; "
        f"quoted-prefactor eff={r1.swap_frequency_eff_quoted:.5e}, {100 * r1.relative_error_quoted:.2f}%), "
        f"g1'x2 ratio={r2.swap_frequency_full / r1.swap_frequency_full:.4f} (linearity err {100 * lin:.2f}%), "
        f"min fidelity {r1.min_fidelity:.3f}"
    )


def c13_step_halving(ctx):
    g3 = 1.5e-3
    a = ctx.protocol_II(g3)
    b = ctx.protocol_II(g3, dt=ctx.base.dt / 2)
    rel = {k: abs(b[k] - a[k]) / abs(a[k]) for k in ("Q_out", "W", "COP")}
    ok = all(v < 0.01 for v in rel.values())
    return ok, ", ".join(f"{k}: {a[k]:.6g} -> {b[k]:.6g} ({100 * v:.3f}%)" for k, v in rel.items()) + " (tol 1%)"


CRITERIA = [
    (1, "thermal fixed point", c1_thermal_fixed_point),
    (2, "RK4 vs Liouvillian expm", c2_expm_oracle),
    (3, "first law, closed refrigerator I", c3_first_law),
    (4, "alpha independence", c4_alpha_independence),
    (5, "heat conservation", c5_conservation),
    (6, "W_ini quadrature", c6_w_ini),
    (7, "reset accounting", c7_reset_accounting),
    (8, "total work W_I", c8_total_work),
    (9, "Q_II/Q_I crossover", c9_crossover),
    (10, "g3 orderings", c10_orderings),
    (11, "trade-off shapes", c11_tradeoffs),
    (12, "RWA swap frequency", c12_rwa),
    (13, "dt halving", c13_step_halving),
]


def run_criterion(number: int, ctx: AcceptanceContext) -> CriterionResult:
    _, name, fn = next(c for c in CRITERIA if c[0] == number)
    start = time.perf_counter()
    try:
        ok, detail = fn(ctx)
    except Exception as exc:  # a crash is a failed criterion, reported with its cause
        ok, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - start)


def run_all(ctx: AcceptanceContext | None = None, only=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    ctx = ctx or AcceptanceContext()
    results = []
    for number, _, _ in CRITERIA:
        if only and number not in only:
            continue
        res = run_criterion(number, ctx)
        results.append(res)
        if echo:
            echo(res.line())
    return results
