"""Experiment drivers: exit times, parameter sweeps, degenerate runs.

Configuration is a flat JSON object mirroring :class:`ExperimentConfig`
field names.  Every output starts with a header record carrying the
generator name, the seed and the full configuration, so runs are
reproducible byte for byte within one build.  Floats are serialized with
17 significant digits.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import dynamics, greens
from .greens import Domain

GENERATOR = "numpy-pcg64"

REASONS = ("exit", "horizon", "collision-floor", "boundary", "budget")


def _f17(x):
    if math.isinf(x):
        return "Infinity"
    return format(float(x), ".17g")


def _cplx(value):
    """Accept JSON number, [re, im] pair, or python complex."""
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


@dataclass
class ExperimentConfig:
    """One exit-time experiment; JSON keys equal the field names."""

    map: str
    params: dict = field(default_factory=dict)
    a1: float = 1.0
    a2: float = 1.0
    epsilon: float = 0.02
    beta: float = 1.0
    mu: float = 3.0
    horizon: float = 1e4
    tol: float = 1e-8
    samples: int = 16
    seed: int = 0
    output: str | None = None
    inradius: float = 1.0
    eta: float = 1e-3
    max_steps: int = 400_000_000

    def __post_init__(self):
        self.params = {k: _cplx(v) for k, v in self.params.items()}
        if not 0 < self.epsilon < self.inradius / 10.0:
            raise ValueError("epsilon must lie in (0, inradius/10)")
        if not 0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.beta == 1.0 and self.mu <= 0:
            raise ValueError("mu must be positive for beta = 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not 1e-13 <= self.tol <= 1e-6:
            raise ValueError("tol must lie in [1e-13, 1e-6]")

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def to_jsonable(self):
        d = asdict(self)
        d["params"] = {
            k: [v.real, v.imag] for k, v in self.params.items()
        }
        return d

    @property
    def exit_radius(self):
        return (
            self.mu * self.epsilon
            if self.beta == 1.0
            else self.epsilon**self.beta
        )

    def build_domain(self, order=12):
        return Domain.from_expression(
            self.map, self.params, inradius=self.inradius, eta=self.eta,
            order=order,
        )


@dataclass(frozen=True)
class ExitTimeRecord:
    """One exit-time measurement; t_exit is +inf when censored."""

    index: int
    epsilon: float
    beta: float
    z1_0: complex
    z2_0: complex
    t_exit: float
    reason: str
    h_drift: float
    max_abs_z: float

    def to_json(self):
        return (
            '{"index": %d, "epsilon": %s, "beta": %s,'
            ' "z1_0": [%s, %s], "z2_0": [%s, %s],'
            ' "t_exit": %s, "reason": "%s", "h_drift": %s,'
            ' "max_abs_z": %s}'
            % (
                self.index,
                _f17(self.epsilon),
                _f17(self.beta),
                _f17(self.z1_0.real),
                _f17(self.z1_0.imag),
                _f17(self.z2_0.real),
                _f17(self.z2_0.imag),
                _f17(self.t_exit),
                self.reason,
                _f17(self.h_drift),
                _f17(self.max_abs_z),
            )
        )


def header_line(config, extra=None):
    head = {"generator": GENERATOR, "seed": config.seed,
            "config": config.to_jsonable()}
    if extra:
        head.update(extra)
    return json.dumps(head)


# -- sampling -----------------------------------------------------------------


def sample_positions(config):
    """Seeded initial pairs, uniform on the epsilon-disc.

    Radius eps*sqrt(u), angle 2*pi*v (area-uniform); pairs closer than
    1e-3 * epsilon are rejected and redrawn whole.
    """
    rng = np.random.default_rng(config.seed)
    eps = config.epsilon
    pairs = []
    while len(pairs) < config.samples:
        u1, v1, u2, v2 = rng.random(4)
        z1 = eps * math.sqrt(u1) * complex(
            math.cos(2 * math.pi * v1), math.sin(2 * math.pi * v1)
        )
        z2 = eps * math.sqrt(u2) * complex(
            math.cos(2 * math.pi * v2), math.sin(2 * math.pi * v2)
        )
        if abs(z1 - z2) < 1e-3 * eps:
            continue
        pairs.append((z1, z2))
    return pairs


# -- single-sample integration --------------------------------------------------


def _run_sample_python(domain, config, index, z1, z2):
    state0 = dynamics.VortexState(
        t=0.0, z1=z1, z2=z2, a1=config.a1, a2=config.a2
    )
    spec = dynamics.EventSpec(exit_radius=config.exit_radius)
    traj = dynamics.integrate(
        domain, state0, horizon=config.horizon, tol=config.tol,
        events=spec, max_steps=config.max_steps,
    )
    t_end, kind = traj.events[-1]
    if traj.stats.budget_exhausted:
        kind = "budget"
    return ExitTimeRecord(
        index=index,
        epsilon=config.epsilon,
        beta=config.beta,
        z1_0=z1,
        z2_0=z2,
        t_exit=math.inf if kind == "horizon" else float(t_end),
        reason=kind,
        h_drift=traj.stats.h_drift,
        max_abs_z=traj.stats.max_abs_z,
    )


def _run_sample_kernel(kernel, config, index, z1, z2):
    res = kernel.run(
        z1, z2, config.a1, config.a2, horizon=config.horizon,
        tol=config.tol, r_exit=config.exit_radius,
        max_steps=config.max_steps,
    )
    reason = res["status"]
    return ExitTimeRecord(
        index=index,
        epsilon=config.epsilon,
        beta=config.beta,
        z1_0=z1,
        z2_0=z2,
        t_exit=math.inf if reason == "horizon" else res["t"],
        reason=reason,
        h_drift=res["h_drift"],
        max_abs_z=res["max_abs_z"],
    )


_POOL_STATE = {}


def _pool_worker(args):
    index, z1, z2 = args
    config = _POOL_STATE["config"]
    kernel = _POOL_STATE["kernel"]
    domain = _POOL_STATE["domain"]
    if kernel is not None:
        return _run_sample_kernel(kernel, config, index, z1, z2)
    return _run_sample_python(domain, config, index, z1, z2)


def exit_time(config, use_fastpath=True, workers=None):
    """Run the configured exit-time experiment; records sorted by index.

    Samples run in parallel over a fork-based worker pool when more than
    one CPU is available; per-sample failures are recorded, not fatal.
    """
    domain = config.build_domain()
    try:
        greens.local_model(domain)
    except greens.NotStationaryError as exc:
        raise ValueError(f"0 is not stationary for this map: {exc}") from exc
    kernel = None
    if use_fastpath:
        try:
            from . import _fastpath

            kernel = _fastpath.get_kernel(domain)
            if kernel is not None:
                # warm compile before forking workers
                kernel.run(
                    0.3 * config.epsilon, -0.3 * config.epsilon,
                    config.a1, config.a2, horizon=1e-3, tol=config.tol,
                    r_exit=config.exit_radius, max_steps=10_000,
                )
        except Exception:
            kernel = None
    pairs = sample_positions(config)
    jobs = [(i, z1, z2) for i, (z1, z2) in enumerate(pairs)]
    if workers is None:
        workers = min(os.cpu_count() or 1, config.samples)
    _POOL_STATE.update(config=config, kernel=kernel, domain=domain)
    if workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            records = pool.map(_pool_worker, jobs)
    else:
        records = [_pool_worker(j) for j in jobs]
    records.sort(key=lambda r: r.index)
    if config.output:
        write_records(config.output, config, records)
    return records


def write_records(path, config, records, extra=None):
    with open(path, "w") as fh:
        fh.write(header_line(config, extra) + "\n")
        for r in records:
            fh.write(r.to_json() + "\n")


# -- sweeps ---------------------------------------------------------------------


@dataclass
class SweepResult:
    records: dict  # epsilon -> list[ExitTimeRecord]
    fit: dict | None  # {"slope", "intercept", "r2"} over min exit times
    censoring: dict  # epsilon -> censored fraction

    def fit_csv(self):
        lines = ["epsilon,t_min,censored_fraction"]
        for eps, recs in sorted(self.records.items()):
            finite = [r.t_exit for r in recs if math.isfinite(r.t_exit)
                      and r.reason == "exit"]
            tmin = min(finite) if finite else math.inf
            lines.append(
                f"{_f17(eps)},{_f17(tmin)},{_f17(self.censoring[eps])}"
            )
        if self.fit is not None:
            lines.append(
                "slope,intercept,r2"
            )
            lines.append(
                f"{_f17(self.fit['slope'])},{_f17(self.fit['intercept'])},"
                f"{_f17(self.fit['r2'])}"
            )
        else:
            lines.append("fit,unavailable,all-censored")
        return "\n".join(lines) + "\n"


def sweep(config, epsilons, use_fastpath=True, workers=None):
    """exit_time per epsilon plus a log-log fit of the minimal exit time.

    All-censored sweeps yield fit=None (itself evidence of confinement);
    censoring fractions are always reported.
    """
    records = {}
    censoring = {}
    for eps in epsilons:
        cfg = ExperimentConfig(**{
            **config.to_jsonable(), "epsilon": eps, "params": {
                k: [v.real, v.imag] for k, v in config.params.items()},
            "output": None,
        })
        recs = exit_time(cfg, use_fastpath=use_fastpath, workers=workers)
        records[eps] = recs
        censoring[eps] = sum(
            1 for r in recs if r.reason != "exit"
        ) / len(recs)
    xs, ys = [], []
    for eps, recs in records.items():
        finite = [r.t_exit for r in recs if r.reason == "exit"]
        if finite:
            xs.append(math.log(eps))
            ys.append(math.log(min(finite)))
    fit = None
    if len(xs) >= 2:
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = np.polyval([slope, intercept], xs)
        ss_res = float(np.sum((np.array(ys) - pred) ** 2))
        ss_tot = float(np.sum((np.array(ys) - np.mean(ys)) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        fit = {"slope": float(slope), "intercept": float(intercept),
               "r2": r2}
    return SweepResult(records=records, fit=fit, censoring=censoring)


# -- degenerate counterexample ---------------------------------------------------


@dataclass
class DegenerateResult:
    trajectory: dynamics.Trajectory
    invariant_drift: float
    conjugacy_max: float
    t_exit: float
    reason: str


def degenerate_invariant(z):
    """|1 - z^2| / ((1 - |z|^2) |z - conj(z)|) for the disc dipole."""
    den = (1.0 - abs(z) ** 2) * abs(z - z.conjugate())
    if den == 0:
        raise ValueError("invariant undefined on the real axis")
    return abs(1.0 - z * z) / den


def degenerate_run(config, z1_0=None):
    """Integrate the opposite-strength disc pair from z1(0) = conj(z2(0)).

    Verifies the conjugacy ansatz along the way and reports the drift of
    the trajectory invariant.  The map must be the identity and the
    strengths must satisfy a1 = -a2.
    """
    if config.a1 + config.a2 != 0:
        raise ValueError("degenerate run needs a1 = -a2")
    domain = config.build_domain()
    c = domain.taylor0.coeffs
    if abs(c[1] - 1.0) > 1e-12 or any(abs(x) > 1e-12 for x in c[2:]):
        raise ValueError("degenerate run is defined on the identity disc")
    if z1_0 is None:
        rng = np.random.default_rng(config.seed)
        while True:
            u, v = rng.random(2)
            z1_0 = config.epsilon * math.sqrt(u) * complex(
                math.cos(2 * math.pi * v), math.sin(2 * math.pi * v)
            )
            if abs(z1_0.imag) > 5e-4 * config.epsilon:
                break
    z1_0 = complex(z1_0)
    state0 = dynamics.VortexState(
        t=0.0, z1=z1_0, z2=z1_0.conjugate(), a1=config.a1, a2=config.a2
    )
    spec = dynamics.EventSpec(exit_radius=config.exit_radius)
    traj = dynamics.integrate(
        domain, state0, horizon=config.horizon, tol=max(config.tol, 1e-12),
        events=spec, max_steps=config.max_steps,
    )
    k0 = degenerate_invariant(z1_0)
    drift = 0.0
    conj_max = 0.0
    for state, _ in traj.samples:
        conj_max = max(conj_max, abs(state.z1 - state.z2.conjugate()))
        drift = max(
            drift, abs(degenerate_invariant(state.z1) - k0) / abs(k0)
        )
    if conj_max > 1e-8:
        raise RuntimeError(
            f"conjugacy ansatz violated: max |z1 - conj(z2)| = {conj_max:.3e}"
        )
    t_end, kind = traj.events[-1]
    return DegenerateResult(
        trajectory=traj,
        invariant_drift=drift,
        conjugacy_max=conj_max,
        t_exit=float(t_end) if kind == "exit" else math.inf,
        reason=kind,
    )
