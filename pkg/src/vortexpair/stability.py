"""Stationary points, stability classification and confinement verdicts.

The pipeline for a stable domain:

1. :func:`classify` -- margin ``2|phi'(0)|^3 - |phi'''(0)|``, three-way
   class, local coefficients (c0, c1) and the rotation frequencies
   (omega_c, omega = (a1+a2) omega_c).
2. :func:`normal_frame` -- the linear frame L with ``B = L b`` that turns
   the linearized center motion into a plain rotation ``db/dt = -i omega b``.
3. :func:`hamiltonian_expansion` -- the shifted energy as a polynomial in
   (b, bbar, xi, xibar), the ``lambda ln I_xi`` coefficient split off.
4. :func:`action_coefficients` -- angle average; the C table with
   ``C[m, n]`` = coefficient of ``r_xi^m r_b^n``.
5. :func:`frequency_and_hessian`, :func:`diophantine_check`,
   :func:`confinement_verdict` -- the non-degeneracy and non-resonance
   checks behind a "confined" conclusion.  The Diophantine check is
   truncated at ``kmax``; a pass is always modulo that truncation, and the
   verdict records the constants used.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np

from . import greens
from .greens import NotStationaryError
from .series import ActionPoly, Poly4, angle_average, compose, log_unit

TWO_PI = 2.0 * math.pi


class NotStableError(ValueError):
    """Operation requires a stable stationary point."""


@dataclass(frozen=True)
class StabilityReport:
    """Classification of the stationary point at the origin."""

    stationary_point: complex
    margin: float
    classification: str  # stable | critical | unstable
    c0: complex
    c1: float
    omega_c: float | None
    omega: float | None
    strengths: tuple

    def to_json(self):
        return json.dumps(
            {
                "stationary_point": [self.stationary_point.real,
                                     self.stationary_point.imag],
                "margin": self.margin,
                "class": self.classification,
                "c0": [self.c0.real, self.c0.imag],
                "c1": self.c1,
                "omega_c": self.omega_c,
                "omega": self.omega,
                "strengths": list(self.strengths),
            }
        )


@dataclass(frozen=True)
class NormalFrame:
    """Linear frame L (2x2, acting on (Re B, Im B)) and its complex form
    ``L b = l1 b + conj(l2) conj(b)``."""

    L: np.ndarray
    l1: complex
    l2: complex

    def apply(self, b):
        return self.l1 * b + self.l2.conjugate() * b.conjugate()

    def invert(self, B):
        vec = np.linalg.solve(self.L, [B.real, B.imag])
        return complex(vec[0], vec[1])


@dataclass(frozen=True)
class DiophantineResult:
    passed: bool
    witness: tuple | None = None  # first violating integer vector

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class Verdict:
    """Outcome of the confinement checklist for one initial condition."""

    I_xi0: float
    I_B0: float
    omega_star: tuple
    hessian_det: float
    diophantine: DiophantineResult
    conclusion: str  # confined | inconclusive
    params: dict

    def to_json(self):
        return json.dumps(
            {
                "I_xi0": self.I_xi0,
                "I_B0": self.I_B0,
                "omega_star": list(self.omega_star),
                "hessian_det": self.hessian_det,
                "diophantine": (
                    "pass"
                    if self.diophantine.passed
                    else f"fail{list(self.diophantine.witness)}"
                ),
                "conclusion": self.conclusion,
                "params": self.params,
            }
        )


# -- stationary points --------------------------------------------------------


def _stationary_residual(domain, x):
    """S(x) = phi''(x)(1-|phi|^2) + 2 conj(phi) phi'(x)^2 and its Wirtinger
    derivatives; S = 0 is the stationary-point equation (it reduces to
    phi''(x) = 0 where phi vanishes)."""
    c = domain.taylor_at(x, 3).coeffs
    p, dp, ddp, dddp = c[0], c[1], 2.0 * c[2], 6.0 * c[3]
    pc = p.conjugate()
    s = ddp * (1.0 - p * pc) + 2.0 * pc * dp * dp
    s_x = dddp * (1.0 - p * pc) + 3.0 * pc * dp * ddp
    s_xbar = dp.conjugate() * (2.0 * dp * dp - p * ddp)
    return s, s_x, s_xbar, dp


def find_stationary(domain, guess, max_iter=50, tol=1e-12):
    """Newton iteration for the stationary point near ``guess``.

    Solves the Robin-gradient equation
    ``phi''(x)(1-|phi(x)|^2) + 2 conj(phi(x)) phi'(x)^2 = 0`` (this is
    equivalent to phi''(x) = 0 whenever phi(x) = 0, and in particular at
    the designated origin).  The equation is real-analytic, so the Newton
    step solves the 2x2 Wirtinger system.
    """
    x = complex(guess)
    for _ in range(max_iter):
        s, s_x, s_xbar, dp = _stationary_residual(domain, x)
        scale = max(abs(dp), abs(dp) ** 2)
        if abs(s) <= tol * scale:
            try:
                if abs(domain.phi(x)) > 1.0 - domain.eta:
                    raise ValueError
            except Exception:
                raise ValueError(f"stationary root {x!r} outside the domain")
            return x
        det = abs(s_x) ** 2 - abs(s_xbar) ** 2
        if det == 0:
            raise ValueError("singular Newton system for stationary point")
        delta = (-s * s_x.conjugate() + s_xbar * s.conjugate()) / det
        x = x + delta
    raise ValueError(f"no convergence after {max_iter} iterations (at {x!r})")


# -- classification -----------------------------------------------------------

CRITICAL_BAND = 1e-9


def classify(domain, strengths=(1.0, 1.0)):
    """Three-way stability class of the origin with the paper quantities.

    ``omega = (a1+a2) * omega_c`` is reported for the given strengths;
    omega_c and omega are None for an unstable point.
    """
    c = domain.taylor0.coeffs
    p1, p2, p3 = c[1], 2.0 * c[2], 6.0 * c[3]
    if abs(p2) > 1e-10 * abs(p1):
        raise NotStationaryError(
            f"|phi''(0)| = {abs(p2):.3e} exceeds 1e-10 * |phi'(0)|"
        )
    two_d1_cubed = 2.0 * abs(p1) ** 3
    margin = two_d1_cubed - abs(p3)
    band = CRITICAL_BAND * two_d1_cubed
    if margin > band:
        label = "stable"
    elif abs(margin) <= band:
        label = "critical"
    else:
        label = "unstable"
    lm = greens.local_model(domain)
    a = strengths[0] + strengths[1]
    radicand = lm.c1**2 - 2.25 * abs(lm.c0) ** 2
    if label == "unstable":
        omega_c = None
        omega = None
    else:
        omega_c = math.sqrt(max(radicand, 0.0))
        omega = a * omega_c
    return StabilityReport(
        stationary_point=0j,
        margin=margin,
        classification=label,
        c0=lm.c0,
        c1=lm.c1,
        omega_c=omega_c,
        omega=omega,
        strengths=(float(strengths[0]), float(strengths[1])),
    )


def normal_frame(report):
    """The canonical linear frame for a stable report."""
    if report.classification != "stable":
        raise NotStableError(
            f"normal frame needs a stable point, got {report.classification}"
        )
    c0r, c0i = report.c0.real, report.c0.imag
    c1 = report.c1
    wc = report.omega_c
    p = 1.5 * c0r + c1  # > 0 under the stability condition
    s = math.sqrt(wc / p)
    v = math.sqrt(p / wc)
    u = 1.5 * c0i / math.sqrt(wc * p)
    L = np.array([[s, -u], [0.0, -v]])
    l1 = complex(0.5 * (s - v), 0.5 * u)
    l2 = complex(0.5 * (s + v), 0.5 * u)
    return NormalFrame(L=L, l1=l1, l2=l2)


# -- Hamiltonian expansion -----------------------------------------------------


def _divided_difference(coeffs, x, y):
    """sum_k c_k h_{k-1}(x, y) with h_m the complete homogeneous symmetric
    polynomials; equals (phi(x)-phi(y))/(x-y) for polynomials."""
    cap = x.degree_cap
    out = Poly4.constant(coeffs[1], cap)
    h = Poly4.constant(1.0, cap)
    ypow = Poly4.constant(1.0, cap)
    for k in range(2, len(coeffs)):
        ypow = ypow * y
        h = x * h + ypow
        if coeffs[k] != 0:
            out = out + h * coeffs[k]
    return out


def hamiltonian_expansion(domain, strengths, degree=8):
    """The shifted reduced energy as a Poly4 plus the log coefficient.

    Builds ``Htilde = H_red - lambda ln(|xi|^2 / 2)`` to total degree
    ``degree`` by composing the map series with the affine substitutions
    z1 = L b + sqrt(a2/a1) xi, z2 = L b - sqrt(a1/a2) xi, and returns
    ``(poly, lambda)`` with ``lambda = a1 a2 / (4 pi (a1+a2))``.
    """
    a1, a2 = strengths
    if a1 <= 0 or a2 <= 0:
        raise ValueError("expansion requires positive strengths")
    if degree < 6:
        raise ValueError("degree must be >= 6 to reach the C[4,2] term")
    report = classify(domain, strengths)
    if report.classification != "stable":
        raise NotStableError(f"expansion needs a stable point, got "
                             f"{report.classification}")
    frame = normal_frame(report)
    a = a1 + a2
    lam = a1 * a2 / (2.0 * TWO_PI * a)

    needed = degree + 1  # phi' to order `degree` needs phi to degree+1
    f = domain.taylor0
    if f.order < needed:
        if domain.map_expr is not None:
            f = domain.map_expr.taylor(0.0, needed)
        else:
            raise ValueError(
                f"series order {f.order} too low for degree {degree}"
            )
    fb = f.conj_coeffs()
    l1, l2 = frame.l1, frame.l2
    t2 = math.sqrt(a2 / a1)
    t1 = math.sqrt(a1 / a2)
    cap = degree
    z1 = Poly4.linear(l1, l2.conjugate(), t2, 0.0, cap)
    z2 = Poly4.linear(l1, l2.conjugate(), -t1, 0.0, cap)
    zb1 = Poly4.linear(l2, l1.conjugate(), 0.0, t2, cap)
    zb2 = Poly4.linear(l2, l1.conjugate(), 0.0, -t1, cap)

    f_z1 = compose(f.truncate(cap), z1)
    f_z2 = compose(f.truncate(cap), z2)
    fb_zb1 = compose(fb.truncate(cap), zb1)
    fb_zb2 = compose(fb.truncate(cap), zb2)

    quarter = 1.0 / (2.0 * TWO_PI)
    gamma_poly = (
        log_unit(_divided_difference(f.coeffs, z1, z2))
        + log_unit(_divided_difference(fb.coeffs, zb1, zb2))
        - log_unit(1.0 - f_z1 * fb_zb2)
        - log_unit(1.0 - fb_zb1 * f_z2)
    ) * quarter

    lg_df = log_unit(f.derivative())
    lg_dfb = log_unit(fb.derivative())
    robin1 = (
        (compose(lg_df.truncate(cap), z1) + compose(lg_dfb.truncate(cap), zb1))
        * quarter
        - log_unit(1.0 - f_z1 * fb_zb1) * (2.0 * quarter)
    )
    robin2 = (
        (compose(lg_df.truncate(cap), z2) + compose(lg_dfb.truncate(cap), zb2))
        * quarter
        - log_unit(1.0 - f_z2 * fb_zb2) * (2.0 * quarter)
    )

    ht = (
        0.5 * a1 * a1 * robin1 + 0.5 * a2 * a2 * robin2 + a1 * a2 * gamma_poly
    ) * (1.0 / a)
    ht = ht + lam * math.log(2.0)  # ln(|xi|^2) - ln(I_xi) leftover
    return ht, lam


def action_coefficients(poly, lam):
    """Angle average with the bookkeeping from radii to actions."""
    return angle_average(poly, log_coeff=lam)


def c_table(action_poly, max_m=None, max_n=None):
    """C[m, n] = coefficient of r_xi^m r_b^n, keyed by even (m, n)."""
    out = {}
    for (k, l) in action_poly.terms:
        m, n = 2 * k, 2 * l
        if max_m is not None and m > max_m:
            continue
        if max_n is not None and n > max_n:
            continue
        out[(m, n)] = action_poly.r_coefficient(m, n)
    return out


def frequency_and_hessian(action_poly, actions):
    """Gradient (frequency vector) and Hessian determinant of h at I."""
    i_xi, i_b = actions
    if i_xi <= 0:
        raise ValueError("I_xi must be positive (log term)")
    grad = action_poly.gradient(i_xi, i_b)
    hess = action_poly.hessian(i_xi, i_b)
    det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
    return grad, float(det)


# -- Diophantine check ---------------------------------------------------------


def _lattice(kmax):
    """Nonzero integer vectors up to sup-norm kmax, one per sign pair,
    ordered by (|k|^2, lexicographic)."""
    ks = []
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if (k1, k2) == (0, 0):
                continue
            if k1 < 0 or (k1 == 0 and k2 < 0):
                continue  # canonical sign: |w.k| is even in k
            ks.append((k1, k2))
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
    return ks


def diophantine_check(omega_star, constant=1e-3, nu=2.0, kmax=50):
    """Exhaustive |omega.k| >= C/|k|^nu over 0 < |k|_inf <= kmax.

    |k| is the Euclidean norm.  Returns the first violating k (in order of
    increasing |k|) on failure.  A pass is relative to the truncation.
    """
    if constant <= 0 or nu <= 0 or kmax < 1:
        raise ValueError("need C > 0, nu > 0, kmax >= 1")
    w1, w2 = float(omega_star[0]), float(omega_star[1])
    for k1, k2 in _lattice(kmax):
        lhs = abs(w1 * k1 + w2 * k2)
        rhs = constant / (k1 * k1 + k2 * k2) ** (nu / 2.0)
        if lhs < rhs:
            return DiophantineResult(passed=False, witness=(k1, k2))
    return DiophantineResult(passed=True)


# -- end-to-end verdict ---------------------------------------------------------


def confinement_verdict(domain, strengths, z1_0, z2_0, constant=1e-3,
                        nu=2.0, kmax=50, degree=8):
    """Run the confinement checklist for one initial configuration.

    Computes xi(0), B(0), the normal-frame actions, the angle-averaged
    Hamiltonian, the frequency vector and Hessian determinant, then the
    truncated Diophantine check.  Conclusion is "confined" iff the
    Diophantine check passes and the Hessian determinant is nonzero,
    otherwise "inconclusive"; the constants used are recorded.
    """
    a1, a2 = strengths
    if a1 + a2 == 0:
        raise ValueError("degenerate strengths a1 + a2 = 0")
    if a1 <= 0 or a2 <= 0:
        raise ValueError("verdict pipeline supports positive strengths only")
    z1_0, z2_0 = complex(z1_0), complex(z2_0)
    if z1_0 == z2_0:
        raise ValueError("coincident initial positions")
    a = a1 + a2
    xi0 = math.sqrt(a1 * a2) / a * (z1_0 - z2_0)
    b_big0 = (a1 * z1_0 + a2 * z2_0) / a
    report = classify(domain, strengths)
    if report.classification != "stable":
        raise NotStableError(
            f"verdict needs a stable point, got {report.classification}"
        )
    frame = normal_frame(report)
    b0 = frame.invert(b_big0)
    i_xi0 = 0.5 * abs(xi0) ** 2
    i_b0 = 0.5 * abs(b0) ** 2
    poly, lam = hamiltonian_expansion(domain, strengths, degree=degree)
    h = action_coefficients(poly, lam)
    omega_star, det = frequency_and_hessian(h, (i_xi0, i_b0))
    dio = diophantine_check(omega_star, constant=constant, nu=nu, kmax=kmax)
    confined = dio.passed and det != 0.0
    return Verdict(
        I_xi0=i_xi0,
        I_B0=i_b0,
        omega_star=(float(omega_star[0]), float(omega_star[1])),
        hessian_det=det,
        diophantine=dio,
        conclusion="confined" if confined else "inconclusive",
        params={"C": constant, "nu": nu, "Kmax": kmax, "D": degree},
    )
