"""Linear time-invariant building blocks.

Rational transfer functions in the Laplace variable with an optional pure
input delay, plus the handful of operations the rest of the toolkit needs:
composition (series, parallel, feedback), exact frequency response, Pade
delay approximation, root finding with Newton polish, and a pole-based
stability test.

Polynomials are stored with ascending coefficients: c[0] + c[1]*s + ...
Denominators are kept monic so equality checks and root finding are well
conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

DEGREE_CAP = 64

# residual tolerance (relative) for polished roots
EPS_ROOT = 1e-9
# pole real-part threshold separating "stable" from everything else (rad/s)
EPS_STAB = 1e-7
# relative tolerance for treating a numerator and denominator root as common
CANCEL_RTOL = 1e-7

class MixedDelayError(Exception):
    """Two operands carry incompatible pure delays for the requested op."""


class DegenerateLoopError(Exception):
    """A composition produced an identically zero denominator."""


class PoleOnAxisError(Exception):
    """Frequency response was requested exactly at an imaginary-axis pole."""


class ConvergenceError(Exception):
    """Root polishing failed to reach the residual tolerance."""


def _as_coeffs(c):
    a = np.atleast_1d(np.asarray(c, dtype=float))
    if a.ndim != 1:
        raise ValueError("coefficients must be one dimensional")
    return a


def _trim(a: np.ndarray) -> np.ndarray:
    """Drop exactly-zero leading (highest order) coefficients.

    Only exact zeros go.  Coefficients in these loops legitimately span
    fifteen-plus decades, so trimming by magnitude would silently delete
    real fast dynamics; degree bookkeeping must stay exact.
    """
    if not a.size:
        return np.zeros(1)
    n = a.size
    while n > 1 and a[n - 1] == 0.0:
        n -= 1
    return np.array(a[:n], dtype=float)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with ascending coefficients."""

    coeffs: np.ndarray

    def __init__(self, coeffs):
        c = _trim(_as_coeffs(coeffs))
        if c.size - 1 > DEGREE_CAP:
            raise ValueError(
                "polynomial degree %d exceeds cap %d" % (c.size - 1, DEGREE_CAP))
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        """Degree, with the zero polynomial reported as -1."""
        if self.is_zero():
            return -1
        return self.coeffs.size - 1

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def __call__(self, x):
        return npoly.polyval(x, self.coeffs)

    def __add__(self, other):
        other = _coerce_poly(other)
        return Polynomial(npoly.polyadd(self.coeffs, other.coeffs))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __sub__(self, other):
        return self + (-_coerce_poly(other))

    def __rsub__(self, other):
        return _coerce_poly(other) + (-self)

    def __mul__(self, other):
        other = _coerce_poly(other)
        if self.is_zero() or other.is_zero():
            return Polynomial([0.0])
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __eq__(self, other):
        try:
            other = _coerce_poly(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self.coeffs.shape == other.coeffs.shape and bool(
            np.all(self.coeffs == other.coeffs))

    def deriv(self) -> "Polynomial":
        if self.degree <= 0:
            return Polynomial([0.0])
        return Polynomial(npoly.polyder(self.coeffs))

    def monic(self) -> "Polynomial":
        if self.is_zero():
            raise ValueError("zero polynomial has no monic form")
        return Polynomial(self.coeffs / self.coeffs[-1])

    def roots(self) -> np.ndarray:
        return poly_roots(self)


def _coerce_poly(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    if np.isscalar(p):
        return Polynomial([float(p)])
    return Polynomial(p)


def poly_arith(a, b, op: str) -> Polynomial:
    """Combine two polynomials. op is one of add, sub, mul."""
    a, b = _coerce_poly(a), _coerce_poly(b)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError("unknown op %r" % (op,))


def poly_roots(p: Polynomial) -> np.ndarray:
    """All complex roots of p, companion-matrix values polished by Newton.

    Raises ConvergenceError if any polished root leaves a residual above
    EPS_ROOT relative to the coefficient magnitude at that point.
    """
    if p.is_zero():
        raise ValueError("zero polynomial has no well-defined roots")
    if p.degree == 0:
        return np.zeros(0, dtype=complex)
    c = p.coeffs
    raw = npoly.polyroots(c)
    dc = npoly.polyder(c)
    absc = np.abs(c)
    roots = []
    for r in raw:
        z = complex(r)
        for _ in range(8):
            pv = npoly.polyval(z, c)
            dv = npoly.polyval(z, dc)
            if dv == 0:
                break  # multiple root, keep the eigenvalue estimate
            step = pv / dv
            z -= step
            if abs(step) <= 1e-15 * max(1.0, abs(z)):
                break
        scale = npoly.polyval(abs(z), absc)
        if abs(npoly.polyval(z, c)) > EPS_ROOT * max(scale, 1e-300):
            raise ConvergenceError(
                "root polish stalled at %s (residual above tolerance)" % (z,))
        roots.append(z)
    return np.array(roots, dtype=complex)


def poly_from_roots(roots, lead: float = 1.0) -> Polynomial:
    """Rebuild a real polynomial from a conjugate-closed root set."""
    if len(roots) == 0:
        return Polynomial([lead])
    c = npoly.polyfromroots(np.asarray(roots, dtype=complex)) * lead
    scale = np.max(np.abs(c))
    if scale > 0 and np.max(np.abs(c.imag)) > 1e-9 * scale:
        raise ConvergenceError("root set is not conjugate closed")
    return Polynomial(c.real)


@dataclass(frozen=True)
class RationalTF:
    """num/den rational function times exp(-s*delay).

    The denominator is normalized monic at construction.
    """

    num: Polynomial
    den: Polynomial
    delay: float = 0.0

    def __init__(self, num, den, delay: float = 0.0):
        num, den = _coerce_poly(num), _coerce_poly(den)
        if den.is_zero():
            raise DegenerateLoopError("transfer function with zero denominator")
        if delay < 0:
            raise ValueError("delay must be nonnegative")
        lead = den.coeffs[-1]
        object.__setattr__(self, "num", Polynomial(num.coeffs / lead))
        object.__setattr__(self, "den", Polynomial(den.coeffs / lead))
        object.__setattr__(self, "delay", float(delay))

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def __neg__(self):
        return RationalTF(-self.num, self.den, self.delay)

    def __mul__(self, other):
        other = _coerce_tf(other)
        return RationalTF(self.num * other.num, self.den * other.den,
                          self.delay + other.delay)

    __rmul__ = __mul__

    def __add__(self, other):
        other = _coerce_tf(other)
        if self.delay != other.delay:
            # a sum of unequal delays has no rational representative
            if self.is_zero():
                return other
            if other.is_zero():
                return self
            raise MixedDelayError(
                "cannot add transfer functions with delays %g and %g"
                % (self.delay, other.delay))
        return RationalTF(self.num * other.den + other.num * self.den,
                          self.den * other.den, self.delay)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_coerce_tf(other))

    def __rsub__(self, other):
        return _coerce_tf(other) + (-self)

    def __truediv__(self, other):
        other = _coerce_tf(other)
        if other.is_zero():
            raise DegenerateLoopError("division by the zero transfer function")
        d = self.delay - other.delay
        if d < 0:
            raise MixedDelayError("division would need a negative delay")
        return RationalTF(self.num * other.den, self.den * other.num, d)

    def __rtruediv__(self, other):
        return _coerce_tf(other) / self


def _coerce_tf(g) -> RationalTF:
    if isinstance(g, RationalTF):
        return g
    if isinstance(g, Polynomial):
        return RationalTF(g, Polynomial([1.0]))
    if np.isscalar(g):
        return RationalTF(Polynomial([float(g)]), Polynomial([1.0]))
    raise TypeError("cannot interpret %r as a transfer function" % (g,))


def tf(num, den, delay: float = 0.0) -> RationalTF:
    """Shorthand constructor from ascending coefficient lists."""
    return RationalTF(Polynomial(num), Polynomial(den), delay)


#: the Laplace variable as a transfer function
S = tf([0.0, 1.0], [1.0])
ONE = tf([1.0], [1.0])


def _conjugate_groups(roots):
    """Split a conjugate-closed root set into real roots and pair
    representatives (imag > 0), reuniting slightly asymmetric conjugates."""
    reals, pos, neg = [], [], []
    for r in roots:
        if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)):
            reals.append(complex(r.real, 0.0))
        elif r.imag > 0:
            pos.append(r)
        else:
            neg.append(r)
    pairs = []
    neg = list(neg)
    for r in pos:
        if neg:
            j = int(np.argmin([abs(np.conj(n) - r) for n in neg]))
            n = neg.pop(j)
            pairs.append(complex((r.real + n.real) / 2, (r.imag - n.imag) / 2))
        else:
            reals.append(complex(r.real, 0.0))  # orphan, should not happen
    for n in neg:
        reals.append(complex(n.real, 0.0))
    return reals, pairs


def _greedy_cancel(den_items, num_items, rtol):
    """Match den roots against num roots; returns the matched pairs as
    (num_root, den_root) lists."""
    matches = []
    for rd in den_items:
        best_i, best_d = -1, np.inf
        for i, rn in enumerate(num_items):
            d = abs(rn - rd)
            if d < best_d:
                best_i, best_d = i, d
        if best_i >= 0 and best_d <= rtol * max(1.0, abs(rd)):
            matches.append((num_items.pop(best_i), rd))
    return matches


def _deflate_real(c: np.ndarray, r: float) -> np.ndarray:
    """Divide an ascending-coefficient polynomial by (s - r), dropping the
    remainder (caller guarantees r is a root to working precision)."""
    n = c.size - 1
    out = np.zeros(n)
    acc = c[n]
    for k in range(n - 1, -1, -1):
        out[k] = acc
        acc = c[k] + r * acc
    return out


def _deflate_pair(c: np.ndarray, z: complex) -> np.ndarray:
    """Divide by the real quadratic (s - z)(s - conj(z))."""
    b = -2.0 * z.real
    a = abs(z) ** 2
    n = c.size - 1
    out = np.zeros(n - 1)
    hi2 = 0.0
    hi1 = c[n]
    out[n - 2] = hi1
    for k in range(n - 1, 1, -1):
        q = c[k] - b * hi1 - a * hi2
        out[k - 2] = q
        hi2, hi1 = hi1, q
    return out


def cancel_common(g: RationalTF, rtol: float = CANCEL_RTOL) -> RationalTF:
    """Strip near-common roots of numerator and denominator.

    A numerator/denominator root pair within rtol (relative to the root
    magnitude) is treated as an analytic cancellation.  Real roots and
    conjugate pairs are matched separately and a conjugate pair cancels as
    a unit, so both sides stay real.  The matched factors are deflated out
    of the original coefficient arrays by synthetic division, which keeps
    the surviving coefficients at working precision instead of round
    tripping the whole polynomial through its roots.
    """
    if g.is_zero() or g.num.degree == 0 or g.den.degree == 0:
        return g
    num_reals, num_pairs = _conjugate_groups(poly_roots(g.num))
    den_reals, den_pairs = _conjugate_groups(poly_roots(g.den))
    real_m = _greedy_cancel(den_reals, num_reals, rtol)
    pair_m = _greedy_cancel(den_pairs, num_pairs, rtol)
    if not (real_m or pair_m):
        return g
    num_c, den_c = g.num.coeffs, g.den.coeffs
    for rn, rd in real_m:
        num_c = _deflate_real(num_c, rn.real)
        den_c = _deflate_real(den_c, rd.real)
    for zn, zd in pair_m:
        num_c = _deflate_pair(num_c, zn)
        den_c = _deflate_pair(den_c, zd)
    return RationalTF(Polynomial(num_c), Polynomial(den_c), g.delay)


def tf_compose(g, h, op: str, pade_order: int | None = None) -> RationalTF:
    """Combine two transfer functions.

    op: series (g*h), parallel (g+h), feedback (g/(1+g*h)).

    Pure delays ride along exactly in series and in parallel of equal
    delays.  Any combination that would put a delay somewhere a rational
    function cannot represent it raises MixedDelayError, unless pade_order
    is given, in which case delays are first converted to rational Pade
    approximants of that order.
    """
    g, h = _coerce_tf(g), _coerce_tf(h)
    if op == "series":
        return cancel_common(g * h)
    if pade_order is not None:
        g = fold_delay(g, pade_order)
        h = fold_delay(h, pade_order)
    if op == "parallel":
        return cancel_common(g + h)
    if op == "feedback":
        if h.is_zero():
            return g
        if g.delay or h.delay:
            raise MixedDelayError(
                "feedback with a delay in the loop needs pade_order")
        num = g.num * h.den
        den = g.den * h.den + g.num * h.num
        if den.is_zero():
            raise DegenerateLoopError("feedback loop 1 + g*h vanished")
        return cancel_common(RationalTF(num, den))
    raise ValueError("unknown op %r" % (op,))


def pade(delay: float, order: int = 3) -> RationalTF:
    """Diagonal Pade approximant of exp(-s*delay).

    Always all-pass by construction.  pade(0, n) is exact unity.
    """
    if delay < 0:
        raise ValueError("delay must be nonnegative")
    if order < 1:
        raise ValueError("order must be at least 1")
    if delay == 0.0:
        return ONE
    n = order
    num = np.zeros(n + 1)
    den = np.zeros(n + 1)
    for k in range(n + 1):
        c = (math.factorial(2 * n - k) * math.factorial(n)
             / (math.factorial(2 * n) * math.factorial(k) * math.factorial(n - k)))
        num[k] = c * (-delay) ** k
        den[k] = c * delay ** k
    return tf(num, den)


def fold_delay(g: RationalTF, order: int = 3) -> RationalTF:
    """Replace the pure delay of g by its Pade approximant."""
    if g.delay == 0.0:
        return g
    return RationalTF(g.num, g.den) * pade(g.delay, order)


def freq_response(g: RationalTF, omega):
    """Complex response at real frequency omega (rad/s, scalar or array).

    The pure delay enters exactly as exp(-1j*omega*delay).  Evaluation at a
    point where the denominator magnitude collapses relative to its
    coefficient scale raises PoleOnAxisError.
    """
    w = np.asarray(omega, dtype=float)
    jw = 1j * w
    den_v = npoly.polyval(jw, g.den.coeffs)
    scale = npoly.polyval(np.abs(w), np.abs(g.den.coeffs))
    bad = np.abs(den_v) <= 1e-12 * np.maximum(scale, 1e-300)
    if np.any(bad):
        w_bad = w[bad] if w.ndim else w
        raise PoleOnAxisError("denominator vanishes at omega=%s" % (w_bad,))
    resp = npoly.polyval(jw, g.num.coeffs) / den_v
    if g.delay:
        resp = resp * np.exp(-jw * g.delay)
    if w.ndim == 0:
        return complex(resp)
    return resp


def poles(g: RationalTF) -> np.ndarray:
    """Poles of the rational part of g (the delay contributes none)."""
    return poly_roots(g.den)


def zeros(g: RationalTF) -> np.ndarray:
    if g.is_zero():
        return np.zeros(0, dtype=complex)
    return poly_roots(g.num)


def is_stable(g: RationalTF, pade_order: int = 3) -> tuple[bool, float]:
    """Pole-based stability of g with any delay folded through Pade.

    Near-common numerator/denominator roots are stripped first, so factors
    that cancel analytically (shared integrators from loop assembly) do not
    show up as marginal poles.  Returns (stable, margin) where margin is the
    largest pole real part; stable means margin < -EPS_STAB.
    """
    gr = fold_delay(g, pade_order)
    gr = cancel_common(gr)
    if gr.den.degree == 0:
        return True, -np.inf
    p = poly_roots(gr.den)
    margin = float(np.max(p.real))
    return margin < -EPS_STAB, margin
