"""Built-in example domains.

Each factory returns a :class:`~vortexpair.greens.Domain`:

* ``unit_disc`` -- the identity map on the disc.
* ``strip`` -- the infinite strip |Im z| < 1 via tan(i pi z / 4).
* ``tan_family(a)`` -- bounded domains a (tan(iz) + tan(iz/2)), a > 1/2.
* ``hexagon_family(delta)`` -- biconvex hexagonal domains defined through
  the derivative of the inverse map; the forward map is recovered by
  series reversion, so these domains are series-backed (no closed form).
"""

from __future__ import annotations

import math

from . import mapexpr
from .greens import Domain
from .series import revert

STRIP_TEXT = "tan(i*pi*z/4)"
TAN_FAMILY_TEXT = "a*(tan(i*z)+tan(i*z/2))"


def estimate_inradius(expr, rmax, directions=64, tol=1e-9):
    """min over sampled rays of the radius where |phi| reaches 1.

    Walks each ray outward until |phi| >= 1 (or evaluation fails), then
    bisects.  This is a metadata estimate, not a certified bound.
    """
    best = rmax
    for j in range(directions):
        theta = 2.0 * math.pi * j / directions
        direction = complex(math.cos(theta), math.sin(theta))

        def mag(r):
            try:
                return abs(expr.eval(r * direction))
            except mapexpr.EvalDomainError:
                return math.inf

        lo, hi = 0.0, None
        step = rmax / 64.0
        r = step
        while r <= rmax + 1e-15:
            if mag(r) >= 1.0:
                hi = r
                break
            lo = r
            r += step
        if hi is None:
            continue
        while hi - lo > tol * rmax:
            mid = 0.5 * (lo + hi)
            if mag(mid) >= 1.0:
                hi = mid
            else:
                lo = mid
        best = min(best, 0.5 * (lo + hi))
    return best


def unit_disc(order=12, eta=1e-3):
    return Domain.from_expression("z", inradius=1.0, eta=eta, order=order)


def strip(order=12, eta=1e-3):
    # boundary Im z = +-1 has min |z| = 1
    return Domain.from_expression(STRIP_TEXT, inradius=1.0, eta=eta,
                                  order=order)


def tan_family(a, order=12, eta=1e-3):
    """Bounded domain with phi = a (tan(iz) + tan(iz/2)); needs a > 1/2."""
    if not a > 0.5:
        raise ValueError("tan family needs a > 1/2 for a bounded domain")
    expr = mapexpr.parse(TAN_FAMILY_TEXT, {"a": a})
    inradius = estimate_inradius(expr, rmax=1.5)
    return Domain(expr, inradius=inradius, eta=eta, order=order)


def hexagon_family(delta, order=12, eta=1e-3):
    """Series-backed domain from (inverse map)' = (z^2-1)^(3d-1)/(z^6-1)^d.

    Implemented as (1-z^2)^(2d-1) / (1+z^2+z^4)^d after factoring
    z^6 - 1 = (z^2-1)(z^4+z^2+1); the discarded unimodular constant only
    rotates the disc, which leaves every stability quantity invariant.
    """
    if not 0.5 <= delta < 1.0:
        raise ValueError("hexagon family is defined for 1/2 <= delta < 1")
    work = max(order, 32)
    text = f"(1-z^2)^({2.0 * delta - 1.0!r})/(1+z^2+z^4)^({delta!r})"
    dpsi = mapexpr.parse(text).taylor(0.0, work - 1)
    psi = dpsi.antiderivative()  # inverse map, disc -> domain
    phi = revert(psi)
    # inradius: the inverse map is analytic on the open disc; sample its
    # boundary magnitude at a radius where the tail is already small.
    rho = 0.9
    inradius = min(
        abs(psi(rho * complex(math.cos(t), math.sin(t))))
        for t in [2.0 * math.pi * j / 128 for j in range(128)]
    )
    return Domain(map_expr=None, taylor0=phi.truncate(order),
                  inradius=inradius, eta=eta)


def polynomial_map(coeffs, eta=1e-3, inradius=None):
    """Domain from explicit Taylor coefficients (c0 must be 0)."""
    if inradius is None:
        # crude scale: where the linear part alone would reach the circle
        inradius = 0.5 / abs(complex(coeffs[1]))
    return Domain.from_series(coeffs, inradius=inradius, eta=eta)
