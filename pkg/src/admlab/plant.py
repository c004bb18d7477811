"""Controller blocks and closed-loop models for the coupled robot-payload rig.

The physical picture: a velocity-controlled robot arm carries a payload
through a force sensor of stiffness Ks.  An admittance law turns measured
force into commanded position, the inner velocity controller tracks it with
a transport delay, and the payload can meet an elastic environment.  This
module builds the continuous-time blocks, assembles the force-to-velocity
loop and the force-tracking closed loop as single rational functions, and
evaluates exact-delay frequency responses blockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import lti
from .lti import Polynomial, RationalTF, tf


def _require(cond: bool, what: str):
    if not cond:
        raise ValueError("invalid parameters: %s" % what)


@dataclass(frozen=True)
class VarDampingParams:
    """Speed-scheduled virtual damping: high at rest, low while moving."""

    B_hi: float = 800.0     # N*s/m, damping at zero speed
    B_lo: float = 550.0     # N*s/m, floor while moving
    rate_coeff: float = 8.0  # 1/(m/s), decay rate of the schedule
    update_period: float = 0.01  # s, scheduler cadence
    max_delta: float = 20.0  # N*s/m, largest change per update

    def __post_init__(self):
        _require(self.B_hi >= self.B_lo > 0, "B_hi >= B_lo > 0")
        _require(self.rate_coeff >= 0, "rate_coeff >= 0")
        _require(self.update_period > 0, "update_period > 0")
        _require(self.max_delta > 0, "max_delta > 0")

    def target(self, speed: float) -> float:
        return max(self.B_hi * math.exp(-self.rate_coeff * abs(speed)), self.B_lo)


@dataclass(frozen=True)
class ControllerParams:
    Ma: float = 10.0        # kg, virtual admittance mass
    Ba: float = 1000.0      # N*s/m, virtual admittance damping
    Kl: float = 0.02        # s, lead feedforward gain
    Bfb: float = 2e-5       # damping feedback gain on filtered velocity
    omega_v: float = 120.0  # rad/s, velocity filter cutoff
    omega_a: float = 200.0  # rad/s, acceleration estimator cutoff
    Mp_hat: float = 0.0     # kg, payload mass estimate; 0 disables compensation
    h: float = 8e-4         # s, controller sample period
    F_dead: float = 5.0     # N, deadband half width
    F_bar: float = 7.0      # N, contact detection threshold
    Fd: float = 30.0        # N, reference force
    contact_hold_time: float = 0.05  # s, detection latch hold before re-arming
    var_damping: VarDampingParams | None = None

    def __post_init__(self):
        _require(self.Ma > 0, "Ma > 0")
        _require(self.Ba > 0, "Ba > 0")
        _require(self.Kl >= 0, "Kl >= 0")
        _require(self.Bfb >= 0, "Bfb >= 0")
        _require(self.omega_v > 0, "omega_v > 0")
        _require(self.omega_a > 0, "omega_a > 0")
        _require(self.Mp_hat >= 0, "Mp_hat >= 0")
        _require(self.h > 0, "h > 0")
        _require(self.F_dead >= 0, "F_dead >= 0")
        _require(self.F_bar > 0, "F_bar > 0")
        _require(self.contact_hold_time >= 0, "contact_hold_time >= 0")


def contact_controller(**overrides) -> ControllerParams:
    """Controller tuning used for the contact-task studies."""
    base = dict(Ma=13.0, Ba=1000.0, Kl=0.013, Bfb=7.5e-6)
    base.update(overrides)
    return ControllerParams(**base)


def default_robot() -> RationalTF:
    """Inner velocity loop: commanded position in, velocity out.

    Second order, poles at -4 and -20 rad/s, about 3 Hz bandwidth, unit
    position tracking at DC once integrated.
    """
    return tf([0.0, 400.0, 100.0], [400.0, 120.0, 5.0])


@dataclass(frozen=True)
class PlantParams:
    Mp: float = 16.0        # kg, payload mass
    Bp: float = 630.0       # N*s/m, payload-side damping
    Ks: float = 3e5         # N/m, sensor/coupling stiffness
    Ke: float = 5e5         # N/m, environment stiffness (0 = free space)
    Be: float = 0.0         # N*s/m, environment damping while in contact
    Td: float = 2.4e-3      # s, transport delay on the velocity loop input
    robot: RationalTF = field(default_factory=default_robot)
    x_wall: float = 0.0     # m, environment surface location
    noise_rms: float = 0.14  # N, sensor noise, no acceleration compensation
    noise_rms_comp: float = 0.40  # N, sensor noise with compensation active

    def __post_init__(self):
        _require(self.Mp > 0, "Mp > 0")
        _require(self.Bp >= 0, "Bp >= 0")
        _require(self.Ks > 0, "Ks > 0")
        _require(self.Ke >= 0, "Ke >= 0")
        _require(self.Be >= 0, "Be >= 0")
        _require(self.Td >= 0, "Td >= 0")
        _require(self.noise_rms >= 0, "noise_rms >= 0")
        _require(self.noise_rms_comp >= 0, "noise_rms_comp >= 0")
        _require(self.robot.delay == 0, "robot model must carry no delay field")


def natural_frequency(Mp: float, Ks: float) -> float:
    """Payload-on-sensor resonance in Hz."""
    return math.sqrt(Ks / Mp) / (2.0 * math.pi)


def damping_ratio(Bp: float, Mp: float, Ks: float) -> float:
    return Bp / (2.0 * math.sqrt(Mp * Ks))


def payload_for_mode(f_hz: float, zeta: float, Ks: float) -> tuple[float, float]:
    """Invert (natural_frequency, damping_ratio) to payload (Mp, Bp)."""
    _require(f_hz > 0, "f_hz > 0")
    _require(zeta >= 0, "zeta >= 0")
    wn = 2.0 * math.pi * f_hz
    Mp = Ks / wn ** 2
    Bp = 2.0 * zeta * math.sqrt(Mp * Ks)
    return Mp, Bp


@dataclass(frozen=True)
class Blocks:
    """Continuous controller blocks, all delay free."""

    A: RationalTF       # admittance: force to position
    Cff: RationalTF     # lead feedforward (acts on force)
    Cfb: RationalTF     # damping feedback (acts on robot position)
    Oa: RationalTF      # acceleration estimator (acts on robot position)


def build_blocks(cp: ControllerParams, ideal_acc: bool = False) -> Blocks:
    A = tf([1.0], [0.0, cp.Ba, cp.Ma])
    Cff = tf([0.0, cp.Kl], [1.0])
    Cfb = tf([0.0, cp.Bfb * cp.omega_v], [cp.omega_v, 1.0])
    if ideal_acc:
        Oa = tf([0.0, 0.0, 1.0], [1.0])  # exact double differentiator
    else:
        Oa = tf([0.0, 0.0, cp.omega_v * cp.omega_a],
                np.convolve([cp.omega_a, 1.0], [cp.omega_v, 1.0]))
    return Blocks(A=A, Cff=Cff, Cfb=Cfb, Oa=Oa)


@dataclass(frozen=True)
class LoopModel:
    """Assembled loop transfer functions plus everything needed to
    re-evaluate them blockwise with the exact delay."""

    G: RationalTF        # measured force to robot velocity, loop open at sensor
    E_bar: RationalTF    # robot velocity to measured force through the payload
    closed: RationalTF   # reference force to measured force
    ideal_acc_comp: bool
    cp: ControllerParams
    pp: PlantParams
    blocks: Blocks
    pade_order: int
    inverse_mass_comp: bool


def _origin_strip(num: Polynomial, den: Polynomial) -> tuple[Polynomial, Polynomial]:
    """Drop the s^k factor shared exactly by numerator and denominator.

    Integrators common to both sides of a loop show up as exact-zero
    low-order coefficients (products and sums of exact zeros stay exact
    zero in floating point), so this is plain bookkeeping rather than
    root matching and costs no precision.
    """
    def lead_zeros(p: Polynomial) -> int:
        k = 0
        while k < p.coeffs.size - 1 and p.coeffs[k] == 0.0:
            k += 1
        return k

    k = min(lead_zeros(num), lead_zeros(den))
    if k == 0:
        return num, den
    return Polynomial(num.coeffs[k:]), Polynomial(den.coeffs[k:])


def _loop_pieces(A: RationalTF, Cff: RationalTF, Cfb: RationalTF,
                 Rg: RationalTF, comp: RationalTF | None
                 ) -> tuple[Polynomial, Polynomial]:
    """Raw numerator and denominator of the sensor-opened force loop:

        G = -num/den,  num/den = A (1 + Cff) Rg / (1 + Rg Cfb / s
                                  - A (1 + Cff) Rg comp / s)

    Everything is put over the one common denominator
    A.den * Rg.den * Cfb.den * comp.den * s up front, so the structurally
    shared factors never multiply in and the caller can strip the shared
    origin factors exactly.  comp is the scaled acceleration estimator, or
    None when compensation is off.
    """
    s = Polynomial([0.0, 1.0])
    ff = Polynomial([1.0]) + Cff.num  # Cff always has a unit denominator
    cden = comp.den if comp is not None else Polynomial([1.0])
    fwd_num = A.num * ff * Rg.num
    den = A.den * Rg.den * Cfb.den * cden * s \
        + Rg.num * Cfb.num * (A.den * cden)
    if comp is not None:
        den = den - fwd_num * comp.num * Cfb.den
    if den.is_zero():
        raise lti.DegenerateLoopError("force loop denominator vanished")
    num = fwd_num * Cfb.den * cden * s
    return num, den


def _sensor_path(pp: PlantParams) -> RationalTF:
    """Velocity in, measured force out, payload hanging on the sensor and
    leaning on the environment spring.

    The chain Ks/s * (1 + P*E) / (1 + P*E + P*Ks/s) with P the payload
    mobility and E the environment spring collapses to a cubic whose
    coefficients come straight from the physical parameters, so it is
    written down directly instead of assembled and cancelled.
    """
    mode = Polynomial([pp.Ke, pp.Bp, pp.Mp])
    num = pp.Ks * mode
    den = Polynomial([0.0, pp.Ke + pp.Ks, pp.Bp, pp.Mp])
    return RationalTF(num, den)


def build_loop(cp: ControllerParams, pp: PlantParams, ideal_acc: bool = False,
               pade_order: int = 3,
               inverse_mass_comp: bool = False) -> LoopModel:
    """Assemble the loop as single rational functions.

    All sums are done over one common denominator and the integrators
    shared between paths are stripped as exact zero coefficients, so no
    root-matching cancellation ever runs on the assembled loop.  A nonzero
    transport delay stays attached exactly when the loop algebra allows
    it; where it lands inside a denominator it is replaced by its diagonal
    Pade approximant of the given order.
    """
    if inverse_mass_comp and cp.Mp_hat == 0:
        raise ValueError("inverse_mass_comp needs a nonzero Mp_hat")
    blocks = build_blocks(cp, ideal_acc=ideal_acc)
    A, Cff, Cfb, Oa = blocks.A, blocks.Cff, blocks.Cfb, blocks.Oa

    if cp.Mp_hat == 0:
        comp = None
    elif inverse_mass_comp:
        comp = (1.0 / cp.Mp_hat) * Oa
    else:
        comp = cp.Mp_hat * Oa

    delay_in_den = comp is not None or cp.Bfb != 0
    R_rat = pp.robot if pp.Td == 0 else pp.robot * lti.pade(pp.Td, pade_order)
    Rg = pp.robot if pp.Td == 0 else R_rat
    num_raw, den_raw = _loop_pieces(A, Cff, Cfb, Rg, comp)

    if pp.Td > 0 and not delay_in_den:
        # Delay-free denominator: keep the transport delay exact on G.
        fn = A.num * (Polynomial([1.0]) + Cff.num) * pp.robot.num
        fd = A.den * pp.robot.den
        G = RationalTF(*_origin_strip(-fn, fd), pp.Td)
    else:
        G = -RationalTF(*_origin_strip(num_raw, den_raw))

    E_bar = _sensor_path(pp)

    # G already carries the summing-junction minus, so the closed force
    # loop is -G*E_bar fed back through unity: -G*E_bar / (1 - G*E_bar).
    # Written out over the raw pieces that is num*En / (den*Ed + num*En),
    # one polynomial sum with no cancellation step at all.
    cnum = num_raw * E_bar.num
    cden = den_raw * E_bar.den + cnum
    closed = RationalTF(*_origin_strip(cnum, cden))

    return LoopModel(G=G, E_bar=E_bar, closed=closed, ideal_acc_comp=ideal_acc,
                     cp=cp, pp=pp, blocks=blocks, pade_order=pade_order,
                     inverse_mass_comp=inverse_mass_comp)


def loop_response(model: LoopModel, which: str, omega, exact_delay: bool = True):
    """Blockwise complex response composed from the individual blocks.

    which: one of "G", "E", "closed".  omega in rad/s, scalar or array.
    With exact_delay the transport delay enters as exp(-1j*w*Td); otherwise
    the same Pade approximant the assembled rationals use stands in, which
    makes this a like-for-like cross-check of the symbolic assembly.
    """
    w = np.asarray(omega, dtype=float)
    jw = 1j * w
    cp, pp = model.cp, model.pp

    Ev = lti.freq_response(model.E_bar, w)
    if which == "E":
        return Ev

    b = model.blocks
    Av = lti.freq_response(b.A, w)
    Cffv = lti.freq_response(b.Cff, w)
    Cfbv = lti.freq_response(b.Cfb, w)
    if exact_delay:
        delay_v = np.exp(-jw * pp.Td)
    else:
        delay_v = lti.freq_response(lti.pade(pp.Td, model.pade_order), w)
    Rv = lti.freq_response(pp.robot, w) * delay_v
    fwd = Av * (1.0 + Cffv) * Rv
    den = 1.0 + Rv * Cfbv / jw
    if cp.Mp_hat != 0:
        Oav = lti.freq_response(b.Oa, w)
        scale = 1.0 / cp.Mp_hat if model.inverse_mass_comp else cp.Mp_hat
        den = den - fwd * scale * Oav / jw
    Gv = -fwd / den
    if which == "G":
        return Gv
    if which == "closed":
        L = Gv * Ev
        return -L / (1.0 - L)
    raise ValueError("unknown response %r" % (which,))


def closed_loop_stable(model: LoopModel) -> tuple[bool, float]:
    """Pole test of the assembled force-tracking loop."""
    return lti.is_stable(model.closed, pade_order=model.pade_order)
