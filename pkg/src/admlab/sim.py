"""Fixed-step time-domain simulation of the complete loop.

Discrete controller, transport-delayed velocity-tracked robot, payload on
the coupling spring, unilateral environment, additive sensor noise.  One
scalar translational axis pointed at the wall; positive positions and
forces point into the contact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import discrete
from .discrete import IIRState, admittance_step, adapt_damping, apply_deadband, collision_step
from .lti import tf
from .plant import ControllerParams, PlantParams

MODES = ("force_reference_contact", "free_space_jog", "approach_and_contact")


class DelayNotMultipleError(Exception):
    """Transport delay is not an integer number of controller samples."""


class DivergenceError(Exception):
    """A simulated state left the configured blow-up bound."""


@dataclass(frozen=True)
class SimScenario:
    cp: ControllerParams
    pp: PlantParams
    duration: float = 4.0
    mode: str = "force_reference_contact"
    discretization: str = "tustin"
    collision_response: bool = False
    full_stop: bool = False
    seed: int = 0
    force_profile: np.ndarray | None = None  # external force per step, N
    blowup_limit: float = 5.0                # m, divergence bound on positions
    bilateral_env: bool = False              # spring acts in both directions

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.mode not in MODES:
            raise ValueError("unknown mode %r" % (self.mode,))
        if self.discretization not in ("tustin", "euler"):
            raise ValueError("unknown discretization %r" % (self.discretization,))
        if self.discretization == "euler":
            # the collision response and the damping scheduler live on the
            # three-sample recursion, which is the bilinear form
            if self.collision_response or self.full_stop:
                raise ValueError(
                    "collision handling requires the tustin discretization")
            if self.cp.var_damping is not None:
                raise ValueError(
                    "variable damping requires the tustin discretization")
        if self.blowup_limit <= 0:
            raise ValueError("blowup_limit must be positive")
        if self.force_profile is not None:
            object.__setattr__(self, "force_profile",
                               np.asarray(self.force_profile, dtype=float))


@dataclass
class SimTrace:
    """Everything sampled at the controller rate, equal-length arrays."""

    t: np.ndarray
    F_meas: np.ndarray
    F_raw: np.ndarray
    u: np.ndarray
    x_cmd: np.ndarray
    x_adm: np.ndarray
    x_robot: np.ndarray
    x_payload: np.ndarray
    v_robot: np.ndarray
    Ba_trace: np.ndarray
    contact_flags: np.ndarray

    FIELDS = ("t", "F_meas", "F_raw", "u", "x_cmd", "x_adm", "x_robot",
              "x_payload", "v_robot", "Ba_trace", "contact_flags")

    def columns(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def delay_steps(Td: float, h: float) -> int:
    """Transport delay expressed in controller samples; must divide evenly."""
    ratio = Td / h
    n = round(ratio)
    if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise DelayNotMultipleError(
            "delay %g s is not an integer multiple of the sample time %g s"
            % (Td, h))
    return int(n)


def payload_step(x_p: float, v_p: float, x_r: float, pp: PlantParams,
                 F_ext: float, h: float, wall: str) -> tuple[float, float, float]:
    """Advance the payload one step by semi-implicit Euler.

    Returns (x_p, v_p, F_env).  wall is "off", "unilateral" or
    "bilateral".  The unilateral environment acts only in compression: it
    can push back but never pull, so its reaction is clamped at zero.  The
    bilateral form is the in-contact linearization used when
    cross-checking the pole-based stability oracle.
    """
    pen = x_p - pp.x_wall
    if wall == "bilateral":
        F_env = -pp.Ke * pen - pp.Be * v_p
    elif wall == "unilateral" and pen > 0.0:
        F_env = min(0.0, -pp.Ke * pen - pp.Be * v_p)
    else:
        F_env = 0.0
    acc = (pp.Ks * (x_r - x_p) - pp.Bp * v_p + F_env + F_ext) / pp.Mp
    v_p = v_p + h * acc
    x_p = x_p + h * v_p
    return x_p, v_p, F_env


def _controller_input(mode: str, Fd: float, F_band: float, F_ext: float) -> float:
    if mode == "force_reference_contact":
        return Fd - F_band
    if mode == "free_space_jog":
        return F_ext - F_band
    return Fd + F_ext - F_band  # approach_and_contact


def simulate(sc: SimScenario) -> SimTrace:
    """Run the scenario and return the full trace.

    Step order: sense (noise, acceleration compensation, deadband), form
    the controller input, adapt damping, advance the admittance law or the
    collision response, apply the velocity-feedback position correction,
    push through the transport delay line, track with the discretized
    velocity loop, integrate the payload, then check the blow-up bound.
    """
    cp, pp = sc.cp, sc.pp
    h = cp.h
    n_steps = int(round(sc.duration / h))
    nd = delay_steps(pp.Td, h)
    rng = np.random.default_rng(sc.seed)

    comp_on = cp.Mp_hat > 0
    noise_rms = pp.noise_rms_comp if comp_on else pp.noise_rms
    if sc.mode == "free_space_jog" or pp.Ke == 0:
        wall = "off"
    elif sc.bilateral_env:
        wall = "bilateral"
    else:
        wall = "unilateral"

    robot = IIRState(discrete.discretize(pp.robot, h, "tustin"))
    st = discrete.initial_state(cp)
    if sc.discretization == "euler":
        # same admittance-plus-lead law, coefficients from the
        # forward-difference map instead of the bilinear one
        euler_filter = IIRState(discrete.discretize(
            tf([1.0, cp.Kl], [0.0, cp.Ba, cp.Ma]), h, "euler"))
    else:
        euler_filter = None
    if comp_on:
        acc_filter = IIRState(discrete.discretize(
            tf([0.0, 0.0, cp.omega_v * cp.omega_a],
               np.convolve([cp.omega_a, 1.0], [cp.omega_v, 1.0])), h, "tustin"))
    else:
        acc_filter = None

    delay_line = np.zeros(nd + 1)
    lp_pole = math.exp(-cp.omega_v * h)

    x_r = 0.0
    v_r = 0.0
    x_p = 0.0
    v_p = 0.0
    v_hat = 0.0
    x_r_prev = 0.0
    frozen_cmd = None  # set once when the full stop triggers

    out = {name: np.zeros(n_steps) for name in SimTrace.FIELDS}

    for k in range(n_steps):
        t = k * h

        F_raw = pp.Ks * (x_r - x_p)
        F_meas = F_raw + (rng.normal(0.0, noise_rms) if noise_rms > 0 else 0.0)
        if comp_on:
            a_hat = acc_filter.step(x_r)
            F_comp = F_meas - cp.Mp_hat * a_hat
        else:
            F_comp = F_meas
        F_band = apply_deadband(F_comp, cp.F_dead)

        F_ext = 0.0
        if sc.force_profile is not None and k < sc.force_profile.size:
            F_ext = float(sc.force_profile[k])
        u = _controller_input(sc.mode, cp.Fd, F_band, F_ext)

        d = (x_r - x_r_prev) / h
        v_hat = lp_pole * v_hat + (1.0 - lp_pole) * d
        x_r_prev = x_r

        adapt_damping(st, v_hat, t, cp)

        event = False
        if frozen_cmd is not None:
            x_adm = frozen_cmd
            x_cmd = frozen_cmd
        else:
            if sc.collision_response or sc.full_stop:
                x_vec, event = collision_step(st, u, F_band, v_hat, cp)
                x_adm = float(x_vec[0])
            elif euler_filter is not None:
                x_adm = euler_filter.step(u)
            else:
                x_adm = float(admittance_step(st, u, cp)[0])
            x_cmd = x_adm - cp.Bfb * v_hat
            if sc.full_stop and event:
                frozen_cmd = x_cmd

        delay_line[1:] = delay_line[:-1]
        delay_line[0] = x_cmd
        x_cmd_delayed = delay_line[nd]

        v_new = robot.step(x_cmd_delayed)
        x_r = x_r + 0.5 * h * (v_new + v_r)
        v_r = v_new

        x_p, v_p, _ = payload_step(x_p, v_p, x_r, pp, F_ext, h, wall)

        out["t"][k] = t
        out["F_meas"][k] = F_meas
        out["F_raw"][k] = F_raw
        out["u"][k] = u
        out["x_cmd"][k] = x_cmd
        out["x_adm"][k] = x_adm
        out["x_robot"][k] = x_r
        out["x_payload"][k] = x_p
        out["v_robot"][k] = v_r
        out["Ba_trace"][k] = st.Ba_current
        out["contact_flags"][k] = 1.0 if event else 0.0

        if (abs(x_r) > sc.blowup_limit or abs(x_p) > sc.blowup_limit
                or abs(x_adm) > sc.blowup_limit):
            raise DivergenceError(
                "position left the %.3g m bound at t=%.4f s" % (sc.blowup_limit, t))

    return SimTrace(**out)


def run_full_stop(sc: SimScenario) -> SimTrace:
    """Scenario with the command frozen permanently at first detection."""
    if not sc.full_stop:
        raise ValueError("scenario must have full_stop enabled")
    return simulate(sc)
