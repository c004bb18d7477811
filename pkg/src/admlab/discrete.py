"""Discrete-time controller path.

What actually runs at the sample rate: the generic bilinear/forward-Euler
discretizer for rational blocks, the hand-coded three-sample admittance
recursion (kept independent of the discretizer on purpose, so the two can
cross-check each other), the force deadband, the collision response that
flattens the command history on a rising contact edge, and the
speed-scheduled damping update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lti import Polynomial, RationalTF
from .plant import ControllerParams


class DegreeError(Exception):
    """Improper transfer function: numerator degree above denominator."""


@dataclass(frozen=True)
class DifferenceEq:
    """Linear recurrence a[0] y_t = b.u_hist - a[1:].y_hist.

    Coefficients are stored in ascending delay order: a[0] multiplies the
    newest output sample, b[0] the newest input sample.
    """

    a: np.ndarray
    b: np.ndarray

    def __init__(self, a, b):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.size < 1 or b.size < 1:
            raise ValueError("coefficient arrays must be nonempty")
        if a[0] == 0.0:
            raise ValueError("newest-output coefficient must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def normalized(self) -> "DifferenceEq":
        return DifferenceEq(self.a / self.a[0], self.b / self.a[0])


class IIRState:
    """Streaming evaluator for a DifferenceEq, one call per sample."""

    def __init__(self, deq: DifferenceEq):
        self.deq = deq.normalized()
        self._u = np.zeros(self.deq.b.size)
        self._y = np.zeros(max(self.deq.a.size - 1, 1))

    def step(self, u: float) -> float:
        self._u[1:] = self._u[:-1]
        self._u[0] = u
        y = float(self.deq.b @ self._u - self.deq.a[1:] @ self._y[:self.deq.a.size - 1])
        self._y[1:] = self._y[:-1]
        self._y[0] = y
        return y


def _binomial_powers(base: np.ndarray, top: int) -> list[np.ndarray]:
    """Ascending-power convolution powers base^0 .. base^top."""
    out = [np.array([1.0])]
    for _ in range(top):
        out.append(np.convolve(out[-1], base))
    return out


def discretize(g: RationalTF, h: float, method: str = "tustin") -> DifferenceEq:
    """Map a delay-free rational block to a difference equation at step h.

    tustin substitutes s -> (2/h)(z-1)/(z+1); euler substitutes
    s -> (z-1)/h.  Coefficients come back in ascending delay order (newest
    sample first).
    """
    if g.delay != 0:
        raise ValueError("fold the delay into a delay line before discretizing")
    if h <= 0:
        raise ValueError("sample time must be positive")
    n, m = g.num.degree, g.den.degree
    if n > m:
        raise DegreeError("improper block: numerator degree %d > %d" % (n, m))
    if method not in ("tustin", "euler"):
        raise ValueError("unknown method %r" % (method,))

    zm1 = np.array([-1.0, 1.0])   # (z - 1), ascending in z
    zp1 = np.array([1.0, 1.0])    # (z + 1)
    up = _binomial_powers(zm1, m)
    down = _binomial_powers(zp1, m)

    def transform(p: Polynomial) -> np.ndarray:
        acc = np.zeros(m + 1)
        for k, c in enumerate(p.coeffs):
            if c == 0.0:
                continue
            if method == "tustin":
                term = np.convolve(up[k], down[m - k]) * (2.0 / h) ** k
            else:
                term = np.zeros(m + 1)
                term[: k + 1] = up[k] * h ** -k
            acc = acc + c * term
        return acc

    num_z = transform(g.num)
    den_z = transform(g.den)
    # ascending powers of z -> ascending delay means reading high powers first
    a = den_z[::-1]
    b = num_z[::-1]
    if a[0] == 0.0:
        raise DegreeError("discretization produced a zero newest-output coefficient")
    return DifferenceEq(a, b).normalized()


def apply_deadband(F, F_dead: float):
    """Zero every channel whose magnitude is strictly below the threshold."""
    if np.isscalar(F):
        return 0.0 if abs(F) < F_dead else float(F)
    F = np.asarray(F, dtype=float)
    return np.where(np.abs(F) < F_dead, 0.0, F)


@dataclass
class AdmittanceState:
    """Per-channel state of the admittance recursion and its contact latch.

    xd_next / xd_now / xd_prev hold the commanded-position window
    (newest first), f_hist the matching three input samples.  Ba_current
    is the damping actually used this step; the scheduler mutates it.
    """

    xd_next: np.ndarray
    xd_now: np.ndarray
    xd_prev: np.ndarray
    f_hist: np.ndarray                # shape (3, channels), newest first
    was_contact: bool = False
    Ba_current: float = 0.0
    last_adapt_time: float = -np.inf
    quiet_steps: int = 0              # consecutive steps without contact

    @property
    def channels(self) -> int:
        return self.xd_now.size


def initial_state(cp: ControllerParams, channels: int = 1) -> AdmittanceState:
    z = np.zeros(channels)
    return AdmittanceState(xd_next=z.copy(), xd_now=z.copy(), xd_prev=z.copy(),
                           f_hist=np.zeros((3, channels)), Ba_current=cp.Ba)


def _force_term(state: AdmittanceState, u: np.ndarray, cp: ControllerParams) -> np.ndarray:
    beta = 2.0 * cp.Kl / cp.h
    gain = cp.h ** 2 / (4.0 * cp.Ma)
    return gain * ((1.0 + beta) * u + 2.0 * state.f_hist[0]
                   + (1.0 - beta) * state.f_hist[1])


def _shift_forces(state: AdmittanceState, u: np.ndarray):
    state.f_hist[2] = state.f_hist[1]
    state.f_hist[1] = state.f_hist[0]
    state.f_hist[0] = u


def admittance_step(state: AdmittanceState, u, cp: ControllerParams) -> np.ndarray:
    """Advance the three-sample recursion one step with input u.

    Solves (1+alpha) x_{t+1} = 2 x_t - (1-alpha) x_{t-1} + g(u history)
    with alpha = Ba h / 2Ma, using the state's current damping.  Returns
    the new commanded position (also left in xd_next).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    alpha = state.Ba_current * cp.h / (2.0 * cp.Ma)
    g = _force_term(state, u, cp)
    new = (2.0 * state.xd_next - (1.0 - alpha) * state.xd_now + g) / (1.0 + alpha)
    state.xd_prev = state.xd_now
    state.xd_now = state.xd_next
    state.xd_next = new
    _shift_forces(state, u)
    return new


def detect_contact(F_sense, v, cp: ControllerParams, translational: int = 3) -> bool:
    """Contact when measured force opposes commanded motion hard enough.

    Checked on the translational channels only; sign(0) kills the test at
    zero speed so resting against the environment does not trigger.
    """
    F = np.atleast_1d(np.asarray(F_sense, dtype=float))[:translational]
    vv = np.atleast_1d(np.asarray(v, dtype=float))[:translational]
    return bool(np.any(F * np.sign(vv) > cp.F_bar))


def collision_step(state: AdmittanceState, u, F_sense, v,
                   cp: ControllerParams) -> tuple[np.ndarray, bool]:
    """One controller step with the collision response armed.

    On a rising contact edge the commanded-position history collapses to
    the current command on every channel, which zeroes the carried
    velocity while keeping the command continuous; the force history
    still shifts so the next ordinary step sees fresh inputs.  Otherwise
    this is admittance_step.  The latch re-arms after the contact
    condition has stayed clear for cp.contact_hold_time.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    contact = detect_contact(F_sense, v, cp)
    if contact:
        state.quiet_steps = 0
    else:
        state.quiet_steps += 1
        if state.was_contact and state.quiet_steps * cp.h >= cp.contact_hold_time:
            state.was_contact = False

    if contact and not state.was_contact:
        held = state.xd_next.copy()
        state.xd_now = held.copy()
        state.xd_prev = held.copy()
        state.was_contact = True
        _shift_forces(state, u)
        return held, True

    return admittance_step(state, u, cp), False


def adapt_damping(state: AdmittanceState, v: float, t: float,
                  cp: ControllerParams) -> float:
    """Move Ba toward the speed-scheduled target, rate limited.

    Runs only when the scheduler period has elapsed; each update moves by
    at most max_delta and the result stays inside [B_lo, B_hi].
    """
    vd = cp.var_damping
    if vd is None:
        return state.Ba_current
    if t - state.last_adapt_time < vd.update_period:
        return state.Ba_current
    target = vd.target(v)
    delta = np.clip(target - state.Ba_current, -vd.max_delta, vd.max_delta)
    state.Ba_current = float(np.clip(state.Ba_current + delta, vd.B_lo, vd.B_hi))
    state.last_adapt_time = t
    return state.Ba_current
