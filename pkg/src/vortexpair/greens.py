"""Green's function, Robin function and Hamiltonians for conformal domains.

A :class:`Domain` is a conformal map ``phi`` of a simply connected region
onto the unit disc with ``phi(0) = 0``, given either as a parsed expression
or as a truncated Taylor series at 0, plus geometric metadata (inradius,
boundary margin).  The disc formulas

    G(x, y)     = (1/2pi) ln|phi(x)-phi(y)| - (1/2pi) ln|1-phi(x)*conj(phi(y))|
    gamma(x, y) = G(x, y) - (1/2pi) ln|x-y|

transport to the domain through ``phi``.  Near the diagonal the quotient
``(phi(x)-phi(y))/(x-y)`` is evaluated through a midpoint Taylor expansion;
the straightforward formula is numerically catastrophic there.

Gradients are encoded as single complex numbers ``g = g1 + i*g2`` so that
the perpendicular gradient is ``i*g``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from . import mapexpr
from .series import UniSeries

TWO_PI = 2.0 * math.pi


class BoundaryProximityError(ValueError):
    """Evaluation point mapped too close to the unit circle."""


class CoincidenceError(ValueError):
    """x and y coincide where the Green's function is singular."""


class NotStationaryError(ValueError):
    """The origin is not a stationary point (phi''(0) != 0)."""


@dataclass(frozen=True)
class LocalModel:
    """Quadratic local model of gamma at the stationary point 0.

    c0 = phi'''(0) / (6 pi phi'(0)),  c1 = |phi'(0)|^2 / (2 pi).
    """

    c0: complex
    c1: float


def _shift_series(coeffs, m):
    """Re-center the polynomial sum c_k z^k at z = m (exact binomial shift)."""
    n = len(coeffs) - 1
    out = [0j] * (n + 1)
    for k in range(n + 1):
        c = coeffs[k]
        if c == 0:
            continue
        binom = 1.0
        mp = 1.0 + 0j
        for j in range(k, -1, -1):
            out[j] += c * binom * mp
            binom = binom * j / (k - j + 1)
            mp = mp * m
    return out


class Domain:
    """A conformal map phi with phi(0) = 0 plus geometric metadata.

    Parameters
    ----------
    map_expr : MapExpr or None
        Closed-form expression for phi.  When None, evaluation falls back
        to the stored Taylor polynomial (valid well inside the inradius).
    taylor0 : UniSeries or None
        Taylor series of phi at 0 (order >= 8).  Computed from the
        expression when omitted.
    inradius : float
        min over the boundary of |x|; user-declared scale of the domain.
    eta : float
        Boundary margin: evaluation is rejected when |phi(z)| > 1 - eta.
    """

    __slots__ = ("map_expr", "taylor0", "inradius", "eta", "_dexpr", "_dtaylor")

    def __init__(self, map_expr=None, taylor0=None, inradius=1.0, eta=1e-3,
                 order=12):
        if map_expr is None and taylor0 is None:
            raise ValueError("need an expression or a Taylor series")
        if taylor0 is None:
            taylor0 = map_expr.taylor(0.0, order)
        if abs(taylor0.coeffs[0]) > 1e-13 * max(1.0, abs(taylor0.coeffs[1])):
            raise ValueError("phi(0) must vanish")
        if taylor0.coeffs[0] != 0:
            taylor0 = taylor0 - taylor0.coeffs[0]
        if taylor0.coeffs[1] == 0:
            raise ValueError("phi'(0) must be nonzero (conformality)")
        if taylor0.order < 8:
            raise ValueError("taylor0 order must be >= 8")
        if not inradius > 0:
            raise ValueError("inradius must be positive")
        if not 0 < eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        self.map_expr = map_expr
        self.taylor0 = taylor0
        self.inradius = float(inradius)
        self.eta = float(eta)
        self._dexpr = map_expr.derivative() if map_expr is not None else None
        self._dtaylor = taylor0.derivative()

    @classmethod
    def from_expression(cls, text, params=None, inradius=1.0, eta=1e-3,
                        order=12):
        return cls(mapexpr.parse(text, params), inradius=inradius, eta=eta,
                   order=order)

    @classmethod
    def from_series(cls, coeffs, inradius=1.0, eta=1e-3):
        return cls(map_expr=None, taylor0=UniSeries(coeffs),
                   inradius=inradius, eta=eta)

    # -- map evaluation -------------------------------------------------
    def phi(self, z):
        if self.map_expr is not None:
            return self.map_expr.eval(z)
        return self.taylor0(complex(z))

    def dphi(self, z):
        if self._dexpr is not None:
            return self._dexpr.eval(z)
        return self._dtaylor(complex(z))

    def taylor_at(self, center, order):
        """Taylor series of phi at an interior center."""
        if self.map_expr is not None:
            return self.map_expr.taylor(center, order)
        shifted = _shift_series(self.taylor0.coeffs, complex(center))
        return UniSeries(shifted, self.taylor0.order).truncate(order)

    def phi_checked(self, z):
        w = self.phi(z)
        if abs(w) > 1.0 - self.eta:
            raise BoundaryProximityError(
                f"|phi({z!r})| = {abs(w):.6f} > 1 - eta"
            )
        return w

    def jet2(self, z):
        """(phi, phi', phi'') at z in a single pass."""
        if self.map_expr is not None:
            return self.map_expr.jet2(z)
        z = complex(z)
        c = self.taylor0.coeffs
        f = c[-1]
        df = 0j
        ddf = 0j
        for ck in reversed(c[:-1]):
            ddf = ddf * z + 2.0 * df
            df = df * z + f
            f = f * z + ck
        return f, df, ddf

    def __repr__(self):
        src = self.map_expr.to_string() if self.map_expr else "<series>"
        return f"Domain({src}, inradius={self.inradius})"


# -- near-diagonal machinery -------------------------------------------------


def _diagonal_switch(domain, x, y):
    return abs(x - y) < 1e-4 * domain.inradius


def _dd_series(domain, x, y, order=8):
    """(phi(x)-phi(y))/(x-y) by midpoint Taylor; exact limit on diagonal."""
    m = 0.5 * (x + y)
    d = 0.5 * (x - y)
    c = domain.taylor_at(m, order).coeffs
    q = 0j
    dp = 1.0 + 0j
    for k in range(1, order + 1, 2):
        q += c[k] * dp
        dp *= d * d
    return q


def _grad_reg_series(domain, x, y, order=8):
    """phi'(x)/(phi(x)-phi(y)) - 1/(x-y) by midpoint Taylor."""
    m = 0.5 * (x + y)
    d = 0.5 * (x - y)
    c = domain.taylor_at(m, order).coeffs
    num = 0j
    dp = 1.0 + 0j
    for k in range(2, order + 1):
        num += (k // 2) * c[k] * dp
        dp *= d
    q = 0j
    dp = 1.0 + 0j
    for k in range(1, order + 1, 2):
        q += c[k] * dp
        dp *= d * d
    return num / q


# -- Green's function pieces --------------------------------------------------


def gamma(domain, x, y):
    """Smooth part of the Green's function (regular on the diagonal)."""
    x, y = complex(x), complex(y)
    px = domain.phi_checked(x)
    py = domain.phi_checked(y)
    if x == y:
        dd = domain.dphi(x)
    elif _diagonal_switch(domain, x, y):
        dd = _dd_series(domain, x, y)
    else:
        dd = (px - py) / (x - y)
    return (
        math.log(abs(dd)) - math.log(abs(1.0 - px * py.conjugate()))
    ) / TWO_PI


def robin(domain, x):
    """Robin function gamma(x, x)."""
    return gamma(domain, x, x)


def green(domain, x, y):
    """Full Green's function; singular on the diagonal."""
    x, y = complex(x), complex(y)
    if abs(x - y) < 1e-14 * max(1.0, abs(x)):
        raise CoincidenceError("Green's function evaluated on the diagonal")
    return gamma(domain, x, y) + math.log(abs(x - y)) / TWO_PI


def green_parts(domain, x, y):
    """(G, gamma, robin at x) in one call; G needs x != y."""
    g = gamma(domain, x, y)
    return green(domain, x, y), g, robin(domain, x)


def grad1_gamma(domain, x, y):
    """Gradient of gamma in the first argument, encoded g = d1 + i*d2.

    Regular on the diagonal; the removable singularity of the pair
    phi'(x)/(phi(x)-phi(y)) - 1/(x-y) is evaluated by series when x is
    close to y.
    """
    x, y = complex(x), complex(y)
    px = domain.phi_checked(x)
    py = domain.phi_checked(y)
    dpx = domain.dphi(x)
    if x == y:
        c = domain.taylor_at(x, 2).coeffs
        reg = c[2] / c[1]  # phi''(x) / (2 phi'(x))
    elif abs(x - y) < 1e-3 * domain.inradius:
        # wider switch than for gamma: the difference of two O(1/|x-y|)
        # terms loses digits quadratically in the separation
        reg = _grad_reg_series(domain, x, y)
    else:
        reg = dpx / (px - py) - 1.0 / (x - y)
    pyc = py.conjugate()
    inversion = dpx * pyc / (px * pyc - 1.0)
    w = (reg - inversion) / TWO_PI
    return w.conjugate()


def grad_robin(domain, x):
    """Gradient of the Robin function: 2 * grad1_gamma(x, x)."""
    return 2.0 * grad1_gamma(domain, x, x)


def pair_gradients(domain, z1, z2):
    """(grad_robin(z1), grad_robin(z2), grad1(z1,z2), grad1(z2,z1)).

    Equivalent to the public operations but evaluates each map jet once;
    this is the integrator's hot path.
    """
    p1, dp1, ddp1 = domain.jet2(z1)
    p2, dp2, ddp2 = domain.jet2(z2)
    lim = 1.0 - domain.eta
    if abs(p1) > lim or abs(p2) > lim:
        raise BoundaryProximityError("vortex too close to the boundary")
    w = z1 - z2
    if abs(w) < 1e-3 * domain.inradius:
        d = 0.5 * w
        c = domain.taylor_at(0.5 * (z1 + z2), 8).coeffs
        q = num12 = num21 = 0j
        dp = 1.0 + 0j
        dn = 1.0 + 0j
        for k in range(2, 9):
            half = k // 2
            num12 += half * c[k] * dp
            num21 += half * c[k] * dn
            dp *= d
            dn *= -d
        dpq = 1.0 + 0j
        for k in range(1, 9, 2):
            q += c[k] * dpq
            dpq *= d * d
        reg12 = num12 / q
        reg21 = num21 / q
    else:
        reg12 = dp1 / (p1 - p2) - 1.0 / w
        reg21 = dp2 / (p2 - p1) + 1.0 / w
    p1c, p2c = p1.conjugate(), p2.conjugate()
    g1 = 2.0 * (
        (ddp1 / (2.0 * dp1) - dp1 * p1c / (p1 * p1c - 1.0)) / TWO_PI
    ).conjugate()
    g2 = 2.0 * (
        (ddp2 / (2.0 * dp2) - dp2 * p2c / (p2 * p2c - 1.0)) / TWO_PI
    ).conjugate()
    h12 = ((reg12 - dp1 * p2c / (p1 * p2c - 1.0)) / TWO_PI).conjugate()
    h21 = ((reg21 - dp2 * p1c / (p2 * p1c - 1.0)) / TWO_PI).conjugate()
    return g1, g2, h12, h21


# -- local model and Hamiltonians ---------------------------------------------


def local_model(domain):
    """Local coefficients (c0, c1) at the stationary point 0.

    Requires phi''(0) = 0 within 1e-10 * |phi'(0)|.
    """
    c = domain.taylor0.coeffs
    p1 = c[1]
    p2 = 2.0 * c[2]
    p3 = 6.0 * c[3]
    if abs(p2) > 1e-10 * abs(p1):
        raise NotStationaryError(
            f"|phi''(0)| = {abs(p2):.3e} exceeds 1e-10 * |phi'(0)|"
        )
    return LocalModel(c0=p3 / (6.0 * math.pi * p1), c1=abs(p1) ** 2 / TWO_PI)


def hamiltonian(domain, state):
    """Conserved energy of the two-vortex system."""
    z1, z2 = complex(state.z1), complex(state.z2)
    a1, a2 = state.a1, state.a2
    if abs(z1 - z2) < 1e-14 * max(1.0, abs(z1)):
        raise CoincidenceError("coincident vortices")
    p1, dp1, _ = domain.jet2(z1)
    p2, dp2, _ = domain.jet2(z2)
    lim = 1.0 - domain.eta
    if abs(p1) > lim or abs(p2) > lim:
        raise BoundaryProximityError("vortex too close to the boundary")
    rb1 = (math.log(abs(dp1)) - math.log(1.0 - abs(p1) ** 2)) / TWO_PI
    rb2 = (math.log(abs(dp2)) - math.log(1.0 - abs(p2) ** 2)) / TWO_PI
    if _diagonal_switch(domain, z1, z2):
        dd = _dd_series(domain, z1, z2)
    else:
        dd = (p1 - p2) / (z1 - z2)
    gam = (
        math.log(abs(dd)) - math.log(abs(1.0 - p1 * p2.conjugate()))
    ) / TWO_PI
    return (
        0.5 * (a1 * a1 * rb1 + a2 * a2 * rb2)
        + a1 * a2 * (gam + math.log(abs(z1 - z2)) / TWO_PI)
    )


def reduced_hamiltonian(domain, reduced, strengths):
    """Energy of the (B, xi) reduction (per unit total strength)."""
    a1, a2 = strengths
    a = a1 + a2
    if a == 0 or a1 * a2 == 0:
        raise ValueError("reduced Hamiltonian needs a1+a2 != 0 and a1*a2 != 0")
    b, xi = complex(reduced.B), complex(reduced.xi)
    root = math.sqrt(a1 * a2) if a1 * a2 > 0 else cmath.sqrt(a1 * a2)
    z1 = b + (a2 / root) * xi
    z2 = b - (a1 / root) * xi
    return (
        a1 * a2 / (TWO_PI * a) * math.log(abs(xi))
        + (
            0.5 * (a1 * a1 * robin(domain, z1) + a2 * a2 * robin(domain, z2))
            + a1 * a2 * gamma(domain, z1, z2)
        )
        / a
    )
