"""Two-vortex dynamics: vector fields, reduction and adaptive integration.

The integrator is an explicit embedded Runge-Kutta pair of order 8(5,3)
(Dormand-Prince style coefficients) with

* PI step-size control (safety 0.9, step ratio clipped to [0.2, 5]),
* a 7th-order dense-output interpolant,
* event localization on the dense output to 1e-3 of the current step,
* the conserved energy recorded at every accepted step.

Gradients arrive from :mod:`vortexpair.greens` as complex encodings
``g = d1 + i d2``; the equations of motion are then literally
``dz/dt = i * (...)`` with no sign juggling.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from . import greens
from ._rk_tableau import A, B, C, D, E3, E5, N_STAGES, N_STAGES_EXTENDED

TWO_PI = 2.0 * math.pi

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# PI controller exponents for an order-8 error estimate
PI_ALPHA = 0.7 / 8.0
PI_BETA = 0.4 / 8.0

EVENT_KINDS = ("exit", "collision-floor", "boundary", "horizon")


class CollisionFloorError(ValueError):
    """Vortices closer than the collision floor."""


class DegenerateStrengthsError(ValueError):
    """a1 + a2 = 0: the center of vorticity is undefined."""


class StepSizeUnderflowError(RuntimeError):
    """Step control collapsed; carries the trajectory integrated so far."""

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class VortexState:
    """Positions and strengths of the two vortices at time t."""

    t: float
    z1: complex
    z2: complex
    a1: float
    a2: float

    def positions(self):
        return self.z1, self.z2


@dataclass(frozen=True)
class ReducedState:
    """Center of vorticity B and scaled separation xi."""

    B: complex
    xi: complex


@dataclass
class TrajectoryStats:
    max_abs_z: float = 0.0
    h_drift: float = 0.0
    steps: int = 0
    rejected: int = 0
    budget_exhausted: bool = False


@dataclass
class Trajectory:
    """Recorded samples (state, H), events and running statistics."""

    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    stats: TrajectoryStats = field(default_factory=TrajectoryStats)

    @property
    def final_state(self):
        return self.samples[-1][0]

    def to_jsonl(self):
        """JSON-lines serialization: one record per sample, then events."""
        lines = []
        for state, h in self.samples:
            lines.append(
                '{"t": %s, "z1": [%s, %s], "z2": [%s, %s], "H": %s}'
                % (
                    _f17(state.t),
                    _f17(state.z1.real),
                    _f17(state.z1.imag),
                    _f17(state.z2.real),
                    _f17(state.z2.imag),
                    _f17(h),
                )
            )
        for t, kind in self.events:
            lines.append('{"t": %s, "event": "%s"}' % (_f17(t), kind))
        return "\n".join(lines) + "\n"


def _f17(x):
    return format(float(x), ".17g")


# -- vector fields -------------------------------------------------------


def velocity(domain, state):
    """Right-hand side of the full two-vortex system."""
    z1, z2, a1, a2 = state.z1, state.z2, state.a1, state.a2
    w = z1 - z2
    d2 = abs(w) ** 2
    if abs(w) < 1e-7 * domain.inradius:
        raise CollisionFloorError(f"|z1-z2| = {abs(w):.3e} below floor")
    g1, g2, h12, h21 = greens.pair_gradients(domain, z1, z2)
    sing = w / (TWO_PI * d2)
    v1 = 1j * (0.5 * a1 * g1 + a2 * (sing + h12))
    v2 = 1j * (0.5 * a2 * g2 + a1 * (-sing + h21))
    return v1, v2


def reduce_state(state):
    """Map (z1, z2) to (B, xi); exact linear transform."""
    a1, a2 = state.a1, state.a2
    a = a1 + a2
    if a == 0:
        raise DegenerateStrengthsError("a1 + a2 = 0")
    if a1 * a2 == 0:
        raise DegenerateStrengthsError("a1 * a2 = 0: xi scaling undefined")
    root = cmath.sqrt(complex(a1 * a2))
    return ReducedState(
        B=(a1 * state.z1 + a2 * state.z2) / a,
        xi=root / a * (state.z1 - state.z2),
    )


def lift(reduced, strengths, t=0.0):
    """Inverse of :func:`reduce_state`."""
    a1, a2 = strengths
    a = a1 + a2
    if a == 0:
        raise DegenerateStrengthsError("a1 + a2 = 0")
    if a1 * a2 == 0:
        raise DegenerateStrengthsError("a1 * a2 = 0: xi scaling undefined")
    root = cmath.sqrt(complex(a1 * a2))
    return VortexState(
        t=t,
        z1=reduced.B + (a2 / root) * reduced.xi,
        z2=reduced.B - (a1 / root) * reduced.xi,
        a1=a1,
        a2=a2,
    )


def reduced_velocity(domain, reduced, strengths):
    """Right-hand side of the (B, xi) system."""
    a1, a2 = strengths
    a = a1 + a2
    state = lift(reduced, strengths)
    xi = reduced.xi
    if abs(xi) < 1e-7 * domain.inradius:
        raise CollisionFloorError(f"|xi| = {abs(xi):.3e} below floor")
    g1, g2, h12, h21 = greens.pair_gradients(domain, state.z1, state.z2)
    root = cmath.sqrt(complex(a1 * a2))
    db = 1j / a * (
        0.5 * a1 * a1 * g1 + 0.5 * a2 * a2 * g2 + a1 * a2 * (h12 + h21)
    )
    dxi = 1j * a1 * a2 / (TWO_PI * a) * xi / abs(xi) ** 2 + 1j * root / a * (
        0.5 * a1 * g1 - 0.5 * a2 * g2 + a2 * h12 - a1 * h21
    )
    return db, dxi


# -- event specification ---------------------------------------------------


@dataclass(frozen=True)
class EventSpec:
    """Terminal events watched during integration.

    exit_radius: trigger when max |z_k| reaches this radius (None: off).
    boundary: trigger when |phi(z_k)| reaches 1 - eta.
    collision_floor: trigger when the separation drops to this value;
        None selects the default 1e-7 * inradius.
    """

    exit_radius: float | None = None
    boundary: bool = True
    collision_floor: float | None = None


def _event_functions(domain, spec, strengths):
    a1, a2 = strengths
    floor = (
        spec.collision_floor
        if spec.collision_floor is not None
        else 1e-7 * domain.inradius
    )
    if a1 * a2 != 0:
        xi_scale = abs(cmath.sqrt(complex(a1 * a2))) / abs(a1 + a2) \
            if a1 + a2 != 0 else 1.0
    else:
        xi_scale = 1.0

    events = []
    if spec.exit_radius is not None:
        r = float(spec.exit_radius)

        def g_exit(t, z1, z2):
            return max(abs(z1), abs(z2)) - r

        events.append(("exit", g_exit))

    threshold = 1.0 - domain.eta

    if spec.boundary:

        def g_boundary(t, z1, z2):
            try:
                return max(abs(domain.phi(z1)), abs(domain.phi(z2))) - threshold
            except Exception:
                return 1.0

        events.append(("boundary", g_boundary))

    def g_collision(t, z1, z2):
        return floor - xi_scale * abs(z1 - z2)

    events.append(("collision-floor", g_collision))
    return events


# -- DOP853 stepper ---------------------------------------------------------


def _initial_step(f, t0, y0, f0, direction, rtol, atol, order=8):
    scale = atol + rtol * np.abs(y0)
    d0 = np.linalg.norm(y0 / scale) / math.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(y0.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = f(t0 + h0 * direction, y1)
    d2 = np.linalg.norm((f1 - f0) / scale) / math.sqrt(y0.size) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1)


class _Stepper:
    """One adaptive DOP853 step at a time, with dense output on demand."""

    def __init__(self, f, t0, y0, direction, rtol, atol):
        self.f = f
        self.t = t0
        self.y = np.asarray(y0, dtype=float)
        self.n = self.y.size
        self.direction = direction
        self.rtol = rtol
        self.atol = atol
        self.fcur = f(t0, self.y)
        self.h = _initial_step(f, t0, self.y, self.fcur, direction, rtol, atol)
        self.err_prev = None
        self.K = np.empty((N_STAGES_EXTENDED, self.n))
        self.t_old = t0
        self.y_old = self.y.copy()
        self._dense = None

    def step(self, h_max):
        """Advance one accepted step of size at most h_max; returns h used."""
        rejected_here = 0
        h = min(self.h, h_max)
        while True:
            if h < 1e-14 * max(1.0, abs(self.t)):
                raise _Underflow(rejected_here)
            t_new, y_new, f_new, err = self._attempt(h)
            if err <= 1.0:
                # PI growth factor, stabilized by the previous error
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * err ** (-PI_ALPHA)
                    if self.err_prev is not None and self.err_prev > 0:
                        factor *= self.err_prev**PI_BETA
                    factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
                self.err_prev = max(err, 1e-10)
                self.t_old, self.y_old = self.t, self.y.copy()
                self.f_old = self.fcur
                self.t, self.y, self.fcur = t_new, y_new, f_new
                self.h_used = h
                self.h = h * factor
                self._dense = None
                return h, rejected_here
            rejected_here += 1
            h *= max(MIN_FACTOR, SAFETY * err ** (-1.0 / 8.0))

    def _attempt(self, h):
        hs = h * self.direction
        K = self.K
        K[0] = self.fcur
        for s in range(1, N_STAGES):
            dy = hs * (A[s, :s] @ K[:s])
            K[s] = self.f(self.t + C[s] * hs, self.y + dy)
        y_new = self.y + hs * (B @ K[:N_STAGES])
        t_new = self.t + hs
        f_new = self.f(t_new, y_new)
        K[N_STAGES] = f_new
        scale = self.atol + self.rtol * np.maximum(
            np.abs(self.y), np.abs(y_new)
        )
        err5 = (E5 @ K[: N_STAGES + 1]) / scale
        err3 = (E3 @ K[: N_STAGES + 1]) / scale
        e5 = float(err5 @ err5)
        e3 = float(err3 @ err3)
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * self.n)
        return t_new, y_new, f_new, err

    # -- dense output ----------------------------------------------------
    def _build_dense(self):
        h = self.h_used * self.direction
        K = self.K
        for s in range(N_STAGES + 1, N_STAGES_EXTENDED):
            dy = h * (A[s, :s] @ K[:s])
            K[s] = self.f(self.t_old + C[s] * h, self.y_old + dy)
        F = np.empty((len(D) + 3, self.n))
        delta = self.y - self.y_old
        F[0] = delta
        F[1] = h * self.f_old - delta
        F[2] = 2.0 * delta - h * (self.fcur + self.f_old)
        F[3:] = h * (D @ K)
        self._dense = F

    def dense(self, t):
        """Interpolated solution inside the last accepted step."""
        if self._dense is None:
            self._build_dense()
        h = self.h_used * self.direction
        x = (t - self.t_old) / h
        y = np.zeros(self.n)
        for i, f in enumerate(self._dense[::-1]):
            y += f
            y *= x if i % 2 == 0 else 1.0 - x
        return y + self.y_old


class _Underflow(Exception):
    def __init__(self, rejected):
        self.rejected = rejected


# -- driver -----------------------------------------------------------------


def _drive(f, t0, y0, horizon, rtol, atol, event_fns, observer, max_steps):
    """Shared integration loop; returns (status, events_hit).

    ``observer(t, y)`` is called at every accepted step (and at the
    localized event time); status is 'horizon', an event name, or raises.
    """
    direction = 1.0 if horizon >= 0 else -1.0
    t_end = t0 + horizon
    stepper = _Stepper(f, t0, y0, direction, rtol, atol)
    g_old = [g(t0, *_unpack(y0)) for _, g in event_fns]
    steps = rejected = 0
    while max_steps is None or steps < max_steps:
        remaining = (t_end - stepper.t) * direction
        if remaining <= 0:
            return "horizon", steps, rejected
        try:
            _, rej = stepper.step(remaining)
        except _Underflow as uf:
            raise StepSizeUnderflowError(
                f"step size underflow at t={stepper.t!r}", None
            ) from uf
        steps += 1
        rejected += rej
        t_new = stepper.t
        z1, z2 = _unpack(stepper.y)
        g_new = [g(t_new, z1, z2) for _, g in event_fns]
        hit = None
        for i, ((name, g), go, gn) in enumerate(
            zip(event_fns, g_old, g_new)
        ):
            if go < 0.0 <= gn:
                t_star = _locate(stepper, g, t_new)
                if hit is None or (t_star - hit[1]) * direction < 0:
                    hit = (name, t_star)
        if hit is not None:
            name, t_star = hit
            y_star = stepper.dense(t_star)
            observer(t_star, y_star)
            return name, steps, rejected
        observer(t_new, stepper.y)
        g_old = g_new
        if abs(stepper.t - t_end) <= 1e-14 * max(1.0, abs(t_end)):
            return "horizon", steps, rejected
    return "max-steps", steps, rejected


def _locate(stepper, g, t_hi):
    """Bisect the dense output for the event root; accuracy 1e-3 * step."""
    t_lo = stepper.t_old
    tol = 1e-3 * abs(t_hi - t_lo)
    for _ in range(64):
        if abs(t_hi - t_lo) <= tol:
            break
        t_mid = 0.5 * (t_lo + t_hi)
        if g(t_mid, *_unpack(stepper.dense(t_mid))) >= 0.0:
            t_hi = t_mid
        else:
            t_lo = t_mid
    return t_hi


def _unpack(y):
    return complex(y[0], y[1]), complex(y[2], y[3])


def _pack(z1, z2):
    return np.array([z1.real, z1.imag, z2.real, z2.imag])


class _Recorder:
    """Accepted-step recorder with stride-doubling decimation."""

    def __init__(self, make_sample, h_fn, max_samples):
        self.make_sample = make_sample
        self.h_fn = h_fn
        self.max_samples = max(max_samples, 16)
        self.stride = 1
        self.count = 0
        self.samples = []
        self.stats = TrajectoryStats()
        self.h0 = None

    def __call__(self, t, y):
        state = self.make_sample(t, y)
        h = self.h_fn(state)
        if self.h0 is None:
            self.h0 = h
        scale = max(abs(self.h0), 1e-300)
        self.stats.h_drift = max(self.stats.h_drift, abs(h - self.h0) / scale)
        self.stats.max_abs_z = max(
            self.stats.max_abs_z, abs(state.z1), abs(state.z2)
        )
        if self.count % self.stride == 0:
            self.samples.append((state, h))
            if len(self.samples) > self.max_samples:
                del self.samples[1::2]
                self.stride *= 2
        self.count += 1
        self.last = (state, h)

    def finish(self):
        if self.samples and self.samples[-1][0] is not self.last[0]:
            self.samples.append(self.last)
        return self.samples


def integrate(domain, state0, horizon, tol, events=None, max_samples=4096,
              max_steps=None):
    """Integrate the full two-vortex system with event detection.

    Parameters
    ----------
    state0 : VortexState
    horizon : float
        Integration span (may be negative for backward runs).
    tol : float
        Relative tolerance in [1e-13, 1e-6]; the absolute tolerance is
        tied to it through the domain scale.
    events : EventSpec, optional

    Returns
    -------
    Trajectory
        Samples (state, H) at accepted steps (decimated above
        ``max_samples``), triggered events, and running stats.
    """
    if not 1e-13 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    spec = events or EventSpec()
    a1, a2 = state0.a1, state0.a2
    event_fns = _event_functions(domain, spec, (a1, a2))

    def f(t, y):
        z1, z2 = _unpack(y)
        v1, v2 = velocity(
            domain, VortexState(t=t, z1=z1, z2=z2, a1=a1, a2=a2)
        )
        return _pack(v1, v2)

    def make_sample(t, y):
        z1, z2 = _unpack(y)
        return VortexState(t=t, z1=z1, z2=z2, a1=a1, a2=a2)

    rec = _Recorder(
        make_sample, lambda s: greens.hamiltonian(domain, s), max_samples
    )
    rec(state0.t, _pack(state0.z1, state0.z2))
    rtol = tol
    atol = tol * 1e-2 * domain.inradius
    status, steps, rejected = _drive(
        f, state0.t, _pack(state0.z1, state0.z2), horizon, rtol, atol,
        event_fns, rec, max_steps,
    )
    samples = rec.finish()
    traj = Trajectory(samples=samples, events=[], stats=rec.stats)
    traj.stats.steps = steps
    traj.stats.rejected = rejected
    t_final = samples[-1][0].t
    traj.events.append((t_final, status if status != "max-steps" else "horizon"))
    if status == "max-steps":
        traj.stats.budget_exhausted = True
    return traj


def integrate_reduced(domain, reduced0, strengths, horizon, tol,
                      events=None, max_samples=4096, max_steps=None):
    """Integrate the (B, xi) system; samples are lifted to VortexState."""
    if not 1e-13 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    a1, a2 = strengths
    spec = events or EventSpec()

    def f(t, y):
        db, dxi = reduced_velocity(
            domain, ReducedState(B=complex(y[0], y[1]),
                                 xi=complex(y[2], y[3])), strengths
        )
        return _pack(db, dxi)

    def make_sample(t, y):
        red = ReducedState(B=complex(y[0], y[1]), xi=complex(y[2], y[3]))
        return lift(red, strengths, t=t)

    # events watch the lifted positions
    lifted_events = []
    for name, g in _event_functions(domain, spec, strengths):

        def gl(t, b, xi, _g=g):
            st = lift(ReducedState(B=b, xi=xi), strengths, t=t)
            return _g(t, st.z1, st.z2)

        lifted_events.append((name, gl))

    rec = _Recorder(
        make_sample, lambda s: greens.hamiltonian(domain, s), max_samples
    )
    red0 = reduced0
    rec(0.0, _pack(red0.B, red0.xi))
    rtol = tol
    atol = tol * 1e-2 * domain.inradius
    status, steps, rejected = _drive(
        f, 0.0, _pack(red0.B, red0.xi), horizon, rtol, atol,
        lifted_events, rec, max_steps,
    )
    samples = rec.finish()
    traj = Trajectory(samples=samples, events=[], stats=rec.stats)
    traj.stats.steps = steps
    traj.stats.rejected = rejected
    traj.events.append((samples[-1][0].t, status if status != "max-steps" else "horizon"))
    return traj
