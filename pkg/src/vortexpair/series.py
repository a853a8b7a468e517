"""Truncated power-series algebra.

Two coefficient rings drive everything downstream:

* :class:`UniSeries` -- univariate truncated Taylor series with complex
  coefficients, supporting ring arithmetic, composition, elementary
  functions, reversion and antiderivatives.
* :class:`Poly4` -- sparse polynomials in the four variables
  ``(b, bbar, xi, xibar)`` truncated at a total degree cap.  A monomial
  ``b^p bbar^q xi^r xibar^s`` stands for
  ``r_b^(p+q) r_xi^(r+s) exp(i(p-q)theta_b) exp(i(r-s)theta_xi)``.
* :class:`ActionPoly` -- the angle-averaged image of a :class:`Poly4`,
  a real polynomial in the actions ``I_xi = r_xi^2/2``, ``I_b = r_b^2/2``
  plus one reserved ``lambda * ln(I_xi)`` slot.

All values are immutable; operations are pure functions.  Coefficients are
double precision complex throughout.  Canonical sparse form drops only true
zeros (``|c| < 1e-300``), never numerically small terms.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

ZERO_DROP = 1e-300


def _binom(alpha, k):
    """Generalized binomial coefficient alpha choose k (alpha complex)."""
    out = 1.0 + 0.0j
    for j in range(k):
        out *= (alpha - j) / (j + 1)
    return out


class UniSeries:
    """Univariate truncated power series sum_k c_k z^k, k <= order.

    Parameters
    ----------
    coeffs : sequence of complex
        Coefficients c_0..c_N.  Shorter input is zero-padded to ``order``.
    order : int, optional
        Truncation degree N.  Defaults to ``len(coeffs) - 1``.
    """

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs, order=None):
        coeffs = [complex(c) for c in coeffs]
        if order is None:
            if not coeffs:
                raise ValueError("empty coefficient list needs an explicit order")
            order = len(coeffs) - 1
        if order < 0:
            raise ValueError("order must be >= 0")
        if len(coeffs) < order + 1:
            coeffs = coeffs + [0j] * (order + 1 - len(coeffs))
        for c in coeffs:
            if not (math.isfinite(c.real) and math.isfinite(c.imag)):
                raise ValueError("non-finite series coefficient")
        self.coeffs = tuple(coeffs[: order + 1])
        self.order = order

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, c, order):
        return cls([complex(c)], order)

    @classmethod
    def identity(cls, order):
        """The series z."""
        return cls([0j, 1.0 + 0j], max(order, 1))

    # -- basic ring ops ----------------------------------------------
    def __eq__(self, other):
        return (
            isinstance(other, UniSeries)
            and self.order == other.order
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        return hash((self.coeffs, self.order))

    def __repr__(self):
        return f"UniSeries({list(self.coeffs)!r}, order={self.order})"

    def truncate(self, order):
        if order >= self.order:
            return self
        return UniSeries(self.coeffs[: order + 1], order)

    def __neg__(self):
        return UniSeries([-c for c in self.coeffs], self.order)

    def __add__(self, other):
        if not isinstance(other, UniSeries):
            c = list(self.coeffs)
            c[0] += complex(other)
            return UniSeries(c, self.order)
        n = min(self.order, other.order)
        return UniSeries(
            [self.coeffs[k] + other.coeffs[k] for k in range(n + 1)], n
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, UniSeries) else -complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, UniSeries):
            w = complex(other)
            return UniSeries([c * w for c in self.coeffs], self.order)
        n = min(self.order, other.order)
        out = [0j] * (n + 1)
        for i, a in enumerate(self.coeffs[: n + 1]):
            if a == 0:
                continue
            for j in range(min(n - i, other.order) + 1):
                out[i + j] += a * other.coeffs[j]
        return UniSeries(out, n)

    __rmul__ = __mul__

    def inverse(self):
        """Reciprocal series; requires a nonzero constant term."""
        a0 = self.coeffs[0]
        if a0 == 0:
            raise ValueError("division by series with zero constant term")
        n = self.order
        inv = [0j] * (n + 1)
        inv[0] = 1.0 / a0
        for k in range(1, n + 1):
            acc = 0j
            for j in range(1, k + 1):
                acc += self.coeffs[j] * inv[k - j] if j <= n else 0j
            inv[k] = -acc / a0
        return UniSeries(inv, n)

    def __truediv__(self, other):
        if not isinstance(other, UniSeries):
            return self * (1.0 / complex(other))
        return self * other.inverse()

    def __rtruediv__(self, other):
        return self.inverse() * complex(other)

    # -- calculus ------------------------------------------------------
    def derivative(self):
        if self.order == 0:
            return UniSeries([0j], 0)
        return UniSeries(
            [k * self.coeffs[k] for k in range(1, self.order + 1)], self.order - 1
        )

    def antiderivative(self):
        """Term-wise c_k -> c_k/(k+1) shifted up one degree, constant 0."""
        return UniSeries(
            [0j] + [c / (k + 1) for k, c in enumerate(self.coeffs)], self.order + 1
        )

    # -- composition and elementary functions -------------------------
    def compose(self, inner):
        """Horner composition self(inner); inner constant term must be 0."""
        return compose(self, inner)

    def _split(self):
        """Constant term and the nilpotent tail (as a series)."""
        tail = UniSeries((0j,) + self.coeffs[1:], self.order)
        return self.coeffs[0], tail

    def _nilpotent_apply(self, maclaurin_coeff):
        """sum_k maclaurin_coeff(k) * tail^k for the zero-constant tail."""
        c0, v = self._split()
        out = UniSeries.constant(maclaurin_coeff(0), self.order)
        vp = UniSeries.constant(1.0, self.order)
        for k in range(1, self.order + 1):
            vp = vp * v
            out = out + vp * maclaurin_coeff(k)
        return c0, v, out

    def exp(self):
        c0, v = self._split()
        out = UniSeries.constant(1.0, self.order)
        vp = UniSeries.constant(1.0, self.order)
        fact = 1.0
        for k in range(1, self.order + 1):
            vp = vp * v
            fact *= k
            out = out + vp * (1.0 / fact)
        return out * cmath.exp(c0)

    def log(self):
        """Principal-branch log; constant term must be nonzero (unit)."""
        a0 = self.coeffs[0]
        if a0 == 0:
            raise ValueError("log of series with zero constant term")
        u = self * (1.0 / a0) - 1.0
        out = UniSeries.constant(cmath.log(a0), self.order)
        up = UniSeries.constant(1.0, self.order)
        for k in range(1, self.order + 1):
            up = up * u
            out = out + up * ((-1.0) ** (k + 1) / k)
        return out

    def sin(self):
        c0, v = self._split()
        sv = _sin_nilpotent(v)
        cv = _cos_nilpotent(v)
        return sv * cmath.cos(c0) + cv * cmath.sin(c0)

    def cos(self):
        c0, v = self._split()
        sv = _sin_nilpotent(v)
        cv = _cos_nilpotent(v)
        return cv * cmath.cos(c0) - sv * cmath.sin(c0)

    def tan(self):
        c = self.cos()
        if c.coeffs[0] == 0:
            raise ValueError("tan at a pole of cos")
        return self.sin() / c

    def pow_int(self, n):
        if n == 0:
            return UniSeries.constant(1.0, self.order)
        base = self if n > 0 else self.inverse()
        n = abs(n)
        out = UniSeries.constant(1.0, self.order)
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def pow_real(self, alpha):
        """Principal-branch power (1-parameter binomial series); unit only."""
        a0 = self.coeffs[0]
        if a0 == 0:
            raise ValueError("fractional power of series with zero constant term")
        u = self * (1.0 / a0) - 1.0
        out = UniSeries.constant(1.0, self.order)
        up = UniSeries.constant(1.0, self.order)
        for k in range(1, self.order + 1):
            up = up * u
            out = out + up * _binom(alpha, k)
        scale = cmath.exp(alpha * cmath.log(a0))
        return out * scale

    def sqrt(self):
        return self.pow_real(0.5)

    def conj_coeffs(self):
        """Series with conjugated coefficients (phi -> phibar)."""
        return UniSeries([c.conjugate() for c in self.coeffs], self.order)

    def __call__(self, z):
        """Horner evaluation at a point (or numpy array)."""
        out = self.coeffs[-1]
        if isinstance(z, np.ndarray):
            out = np.full_like(z, out, dtype=complex)
        for c in reversed(self.coeffs[:-1]):
            out = out * z + c
        return out


def _sin_nilpotent(v):
    out = UniSeries.constant(0.0, v.order)
    vp = v
    v2 = v * v
    sign, fact = 1.0, 1.0
    k = 1
    while k <= v.order:
        out = out + vp * (sign / fact)
        sign = -sign
        fact *= (k + 1) * (k + 2)
        vp = vp * v2
        k += 2
    return out


def _cos_nilpotent(v):
    out = UniSeries.constant(1.0, v.order)
    vp = UniSeries.constant(1.0, v.order)
    v2 = v * v
    sign, fact = -1.0, 2.0
    k = 2
    while k <= v.order:
        vp = vp * v2
        out = out + vp * (sign / fact)
        sign = -sign
        fact *= (k + 1) * (k + 2)
        k += 2
    return out


def compose(outer, inner):
    """Compose a univariate series with an inner series or Poly4.

    The inner value must have an exactly zero constant term, otherwise the
    truncation would silently lose low-order contributions.
    """
    if isinstance(inner, UniSeries):
        if inner.coeffs[0] != 0:
            raise ValueError("compose requires inner constant term 0")
        n = min(outer.order, inner.order)
        out = UniSeries.constant(outer.coeffs[min(n, outer.order)], n)
        for k in range(min(n, outer.order) - 1, -1, -1):
            out = out * inner.truncate(n) + outer.coeffs[k]
        return out
    if isinstance(inner, Poly4):
        if inner.terms.get((0, 0, 0, 0), 0) != 0:
            raise ValueError("compose requires inner constant term 0")
        cap = inner.degree_cap
        top = min(outer.order, cap)
        out = Poly4.constant(outer.coeffs[top], cap)
        for k in range(top - 1, -1, -1):
            out = out * inner + outer.coeffs[k]
        return out
    raise TypeError(f"cannot compose into {type(inner).__name__}")


def log_unit(a):
    """log of a series/Poly4 with nonzero constant term, via Mercator."""
    if isinstance(a, UniSeries):
        return a.log()
    if isinstance(a, Poly4):
        a0 = a.terms.get((0, 0, 0, 0), 0j)
        if a0 == 0:
            raise ValueError("log of Poly4 with zero constant term")
        u = a * (1.0 / a0) - 1.0
        out = Poly4.constant(cmath.log(a0), a.degree_cap)
        up = Poly4.constant(1.0, a.degree_cap)
        for k in range(1, a.degree_cap + 1):
            up = up * u
            if not up.terms:
                break
            out = out + up * ((-1.0) ** (k + 1) / k)
        return out
    raise TypeError(f"log_unit undefined for {type(a).__name__}")


def antiderivative(a):
    return a.antiderivative()


def revert(a):
    """Compositional inverse of a series with a_0 = 0, a_1 != 0.

    Newton iteration on series: B <- B - (A(B) - z)/A'(B), which doubles the
    attained order each pass; all arithmetic is done at the target order.
    """
    if a.coeffs[0] != 0:
        raise ValueError("revert requires zero constant term")
    if a.coeffs[1] == 0:
        raise ValueError("revert requires nonzero linear coefficient")
    n = a.order
    z = UniSeries.identity(n)
    da = UniSeries(a.derivative().coeffs, n)  # re-pad to order n
    b = z * (1.0 / a.coeffs[1])
    passes = max(1, math.ceil(math.log2(n + 1)) + 1)
    for _ in range(passes):
        b = b - (compose(a, b) - z) / compose(da, b)
    return b


# ----------------------------------------------------------------------
# Four-variable truncated polynomials
# ----------------------------------------------------------------------

_DENSE_MASKS = {}


def _over_cap_mask(cap):
    m = _DENSE_MASKS.get(cap)
    if m is None:
        idx = np.arange(cap + 1)
        tot = (
            idx[:, None, None, None]
            + idx[None, :, None, None]
            + idx[None, None, :, None]
            + idx[None, None, None, :]
        )
        m = tot > cap
        _DENSE_MASKS[cap] = m
    return m


class Poly4:
    """Sparse polynomial in (b, bbar, xi, xibar), total degree <= cap.

    Parameters
    ----------
    terms : dict
        Map from exponent tuple ``(p, q, r, s)`` to complex coefficient.
        Zero coefficients and terms above the cap are dropped on input.
    degree_cap : int
        Maximal retained total degree p+q+r+s.
    """

    __slots__ = ("terms", "degree_cap")

    def __init__(self, terms, degree_cap):
        clean = {}
        for key in sorted(terms):
            p, q, r, s = key
            if p + q + r + s > degree_cap:
                continue
            c = complex(terms[key])
            if abs(c) < ZERO_DROP:
                continue
            clean[key] = c
        self.terms = clean
        self.degree_cap = degree_cap

    # -- constructors --------------------------------------------------
    @classmethod
    def constant(cls, c, cap):
        return cls({(0, 0, 0, 0): complex(c)}, cap)

    @classmethod
    def zero(cls, cap):
        return cls({}, cap)

    @classmethod
    def linear(cls, cb, cbbar, cxi, cxibar, cap):
        """cb*b + cbbar*bbar + cxi*xi + cxibar*xibar."""
        return cls(
            {
                (1, 0, 0, 0): cb,
                (0, 1, 0, 0): cbbar,
                (0, 0, 1, 0): cxi,
                (0, 0, 0, 1): cxibar,
            },
            cap,
        )

    # -- ring ops --------------------------------------------------------
    def __eq__(self, other):
        return (
            isinstance(other, Poly4)
            and self.degree_cap == other.degree_cap
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((tuple(sorted(self.terms.items())), self.degree_cap))

    def __repr__(self):
        return f"Poly4({len(self.terms)} terms, cap={self.degree_cap})"

    def __neg__(self):
        return Poly4({k: -c for k, c in self.terms.items()}, self.degree_cap)

    def __add__(self, other):
        if not isinstance(other, Poly4):
            out = dict(self.terms)
            out[(0, 0, 0, 0)] = out.get((0, 0, 0, 0), 0j) + complex(other)
            return Poly4(out, self.degree_cap)
        cap = min(self.degree_cap, other.degree_cap)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0j) + c
        return Poly4(out, cap)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly4) else -complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly4):
            w = complex(other)
            return Poly4(
                {k: c * w for k, c in self.terms.items()}, self.degree_cap
            )
        cap = min(self.degree_cap, other.degree_cap)
        a, b = self, other
        if len(a.terms) > len(b.terms):
            a, b = b, a
        if len(a.terms) * len(b.terms) <= 20000:
            out = {}
            for (p1, q1, r1, s1), c1 in a.terms.items():
                d1 = p1 + q1 + r1 + s1
                for (p2, q2, r2, s2), c2 in b.terms.items():
                    if d1 + p2 + q2 + r2 + s2 > cap:
                        continue
                    key = (p1 + p2, q1 + q2, r1 + r2, s1 + s2)
                    out[key] = out.get(key, 0j) + c1 * c2
            return Poly4(out, cap)
        return self._mul_dense(a, b, cap)

    __rmul__ = __mul__

    @staticmethod
    def _mul_dense(a, b, cap):
        n = cap + 1
        bd = np.zeros((n, n, n, n), dtype=complex)
        for (p, q, r, s), c in b.terms.items():
            if p < n and q < n and r < n and s < n:
                bd[p, q, r, s] = c
        out = np.zeros_like(bd)
        for (p, q, r, s), c in a.terms.items():
            if p >= n or q >= n or r >= n or s >= n:
                continue
            out[p:, q:, r:, s:] += c * bd[: n - p, : n - q, : n - r, : n - s]
        out[_over_cap_mask(cap)] = 0
        nz = np.nonzero(out)
        terms = {
            (int(p), int(q), int(r), int(s)): out[p, q, r, s]
            for p, q, r, s in zip(*nz)
        }
        return Poly4(terms, cap)

    def inverse(self):
        """Reciprocal of a unit Poly4 via the geometric series."""
        a0 = self.terms.get((0, 0, 0, 0), 0j)
        if a0 == 0:
            raise ValueError("division by Poly4 with zero constant term")
        u = -(self * (1.0 / a0) - 1.0)
        out = Poly4.constant(1.0, self.degree_cap)
        up = Poly4.constant(1.0, self.degree_cap)
        for _ in range(self.degree_cap):
            up = up * u
            if not up.terms:
                break
            out = out + up
        return out * (1.0 / a0)

    def __truediv__(self, other):
        if not isinstance(other, Poly4):
            return self * (1.0 / complex(other))
        return self * other.inverse()

    def conjugate(self):
        """Complex conjugate as a function: swap b<->bbar, xi<->xibar."""
        return Poly4(
            {
                (q, p, s, r): c.conjugate()
                for (p, q, r, s), c in self.terms.items()
            },
            self.degree_cap,
        )

    def total_degree(self):
        return max((sum(k) for k in self.terms), default=0)

    def coefficient(self, p, q, r, s):
        return self.terms.get((p, q, r, s), 0j)

    def evaluate(self, b, xi):
        """Numeric evaluation with bbar = conj(b), xibar = conj(xi).

        Accepts scalars or broadcasting numpy arrays.
        """
        bb = np.conj(b) if isinstance(b, np.ndarray) else complex(b).conjugate()
        xb = np.conj(xi) if isinstance(xi, np.ndarray) else complex(xi).conjugate()
        out = 0j
        for (p, q, r, s), c in self.terms.items():
            out = out + c * b**p * bb**q * xi**r * xb**s
        return out


class ActionPoly:
    """Real polynomial in the actions plus a reserved ``lambda ln(I_xi)``.

    ``terms`` maps ``(k, l)`` to the (real) coefficient of
    ``I_xi^k * I_b^l``; ``log_coeff`` is the lambda multiplying
    ``ln(I_xi)``.  ``imag_residual`` records the largest imaginary part
    discarded when the coefficients were realized.
    """

    __slots__ = ("terms", "log_coeff", "imag_residual")

    def __init__(self, terms, log_coeff=0.0, imag_residual=0.0):
        self.terms = {k: float(v) for k, v in sorted(terms.items())}
        self.log_coeff = float(log_coeff)
        self.imag_residual = float(imag_residual)

    def __repr__(self):
        return (
            f"ActionPoly({len(self.terms)} terms, log_coeff={self.log_coeff!r})"
        )

    def coefficient(self, k, l):
        return self.terms.get((k, l), 0.0)

    def r_coefficient(self, m, n):
        """Coefficient of r_xi^m r_b^n (m, n even); the C table entries."""
        if m % 2 or n % 2:
            return 0.0
        k, l = m // 2, n // 2
        return self.terms.get((k, l), 0.0) / 2.0 ** (k + l)

    def value(self, i_xi, i_b):
        if i_xi <= 0 and self.log_coeff != 0:
            raise ValueError("value undefined at I_xi <= 0 (log term)")
        out = self.log_coeff * math.log(i_xi) if self.log_coeff else 0.0
        for (k, l), c in self.terms.items():
            out += c * i_xi**k * i_b**l
        return out

    def gradient(self, i_xi, i_b):
        if i_xi <= 0:
            raise ValueError("gradient undefined at I_xi <= 0 (log term)")
        gx = self.log_coeff / i_xi
        gb = 0.0
        for (k, l), c in self.terms.items():
            if k:
                gx += k * c * i_xi ** (k - 1) * i_b**l
            if l:
                gb += l * c * i_xi**k * i_b ** (l - 1)
        return np.array([gx, gb])

    def hessian(self, i_xi, i_b):
        if i_xi <= 0:
            raise ValueError("hessian undefined at I_xi <= 0 (log term)")
        hxx = -self.log_coeff / i_xi**2
        hxb = 0.0
        hbb = 0.0
        for (k, l), c in self.terms.items():
            if k >= 2:
                hxx += k * (k - 1) * c * i_xi ** (k - 2) * i_b**l
            if k >= 1 and l >= 1:
                hxb += k * l * c * i_xi ** (k - 1) * i_b ** (l - 1)
            if l >= 2:
                hbb += l * (l - 1) * c * i_xi**k * i_b ** (l - 2)
        return np.array([[hxx, hxb], [hxb, hbb]])


def angle_average(poly, log_coeff=0.0):
    """Angle average of a Poly4 as an :class:`ActionPoly`.

    Keeps exactly the exponent-balanced monomials (p = q and r = s); the
    coefficient of ``(p, p, r, r)`` lands on ``I_xi^r I_b^p`` with the
    substitution ``r_b^(2p) r_xi^(2r) = (2 I_b)^p (2 I_xi)^r``.
    """
    acc = {}
    for (p, q, r, s), c in poly.terms.items():
        if p == q and r == s:
            key = (r, p)
            acc[key] = acc.get(key, 0j) + c * 2.0 ** (p + r)
    resid = max((abs(c.imag) for c in acc.values()), default=0.0)
    return ActionPoly(
        {k: c.real for k, c in acc.items()}, log_coeff=log_coeff,
        imag_residual=resid,
    )
