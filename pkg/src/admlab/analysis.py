"""Frequency-domain studies, stability-frontier scans, and trace metrics.

Everything here is a pure function over an assembled loop model or a
finished simulation trace; the CLI serializes the results.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import lti, plant, sim
from .plant import ControllerParams, LoopModel, PlantParams
from .sim import SimScenario, SimTrace

# magnitude peaks are read inside the band that holds the payload
# resonances; far above it the delay dominates every variant alike
RESONANCE_BAND_HZ = 25.0

GRID_POINTS = 200
GRID_LO_HZ = 0.05
GRID_HI_HZ = 100.0


class NoBracketError(Exception):
    """Both ends of a bisection bracket are on the same side of stability."""


class NoContactError(Exception):
    """Contact metrics were requested for a trace that never makes contact."""


def default_grid() -> np.ndarray:
    """Log-spaced angular frequencies covering the studied band, rad/s."""
    hz = np.logspace(np.log10(GRID_LO_HZ), np.log10(GRID_HI_HZ), GRID_POINTS)
    return 2.0 * np.pi * hz


@dataclass
class BodeCurve:
    omegas: np.ndarray       # rad/s, strictly increasing
    magnitudes: np.ndarray   # dimensionless
    label: str

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)
        if self.omegas.size != self.magnitudes.size:
            raise ValueError("grid and magnitudes differ in length")
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(self.magnitudes)):
            raise ValueError("magnitudes must be finite")


@dataclass
class StabilityFrontier:
    sweep_variable: str            # "omega_n" | "zeta" | "Ke"
    values: np.ndarray
    min_stable_Ba: np.ndarray | None
    max_stable_Kl: np.ndarray | None
    rtol: float


@dataclass
class ContactMetrics:
    peak_force: float       # N
    dominant_mode: float    # Hz
    energy: float           # J, sum of |F*v|*h
    time_to_contact: float  # s
    contact_velocity: float  # m/s
    rms_noise: float        # N


def variant_label(cp: ControllerParams, ideal_acc: bool = False) -> str:
    parts = []
    if cp.Kl > 0:
        parts.append("lead")
    if cp.Bfb > 0:
        parts.append("fb")
    if cp.Mp_hat > 0:
        parts.append("acc-ideal" if ideal_acc else "acc-filtered")
    return "+".join(parts) if parts else "baseline"


def bode_sweep(model: LoopModel, which: str = "closed",
               omegas: np.ndarray | None = None) -> BodeCurve:
    """Magnitude of the chosen loop transfer over the grid, exact delay."""
    if omegas is None:
        omegas = default_grid()
    resp = plant.loop_response(model, which, omegas, exact_delay=True)
    label = variant_label(model.cp, model.ideal_acc_comp)
    return BodeCurve(omegas=np.asarray(omegas, dtype=float),
                     magnitudes=np.abs(resp), label=label)


def resonance_peak(curve: BodeCurve, band_hz: float = RESONANCE_BAND_HZ) -> float:
    """Largest magnitude over the grid points at or below band_hz."""
    mask = curve.omegas <= 2.0 * np.pi * band_hz
    if not np.any(mask):
        raise ValueError("band contains no grid points")
    return float(curve.magnitudes[mask].max())


# ------------------------------------------------------------------ frontier

@dataclass(frozen=True)
class FrontierSweep:
    """What to sweep and where to look for the stability boundary.

    values are Hz for an omega_n sweep, dimensionless for zeta, N/m for
    Ke.  zeta fixes the payload damping ratio while omega_n or Ke is
    swept; omega_n_hz fixes the mode frequency while zeta is swept.
    """

    variable: str
    values: tuple
    zeta: float = 0.3
    omega_n_hz: float = 9.0
    Ba_bracket: tuple = (50.0, 20000.0)
    Kl_bracket: tuple = (0.0, 0.2)
    rtol: float = 1e-3
    pade_order: int = 3
    scan_Ba: bool = True
    scan_Kl: bool = True

    def __post_init__(self):
        if self.variable not in ("omega_n", "zeta", "Ke"):
            raise ValueError("unknown sweep variable %r" % (self.variable,))
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one value")


def payload_at(pp: PlantParams, omega_n_hz: float, zeta: float) -> PlantParams:
    """Plant with the payload mode placed at (omega_n, zeta) on the same Ks."""
    Mp, Bp = plant.payload_for_mode(omega_n_hz, zeta, pp.Ks)
    return dataclasses.replace(pp, Mp=Mp, Bp=Bp)


def _point_params(pp: PlantParams, sweep: FrontierSweep, value):
    if sweep.variable == "omega_n":
        return payload_at(pp, value, sweep.zeta)
    if sweep.variable == "zeta":
        return payload_at(pp, sweep.omega_n_hz, value)
    return dataclasses.replace(pp, Ke=value)


def _stable(cp: ControllerParams, pp: PlantParams, pade_order: int) -> bool:
    ok, _ = plant.closed_loop_stable(plant.build_loop(cp, pp, pade_order=pade_order))
    return bool(ok)


def _bisect(lo: float, hi: float, stable_at, stable_end: str, rtol: float) -> float:
    """Shrink [lo, hi] onto the stability boundary; one end must be stable.

    stable_end says which end is required stable ("lo" or "hi"); the
    returned value is that end after convergence, so the result itself is
    always a stable parameter.
    """
    s_lo, s_hi = stable_at(lo), stable_at(hi)
    want_lo = stable_end == "lo"
    if s_lo == s_hi:
        raise NoBracketError(
            "no stability boundary in [%g, %g]: both ends %s"
            % (lo, hi, "stable" if s_lo else "unstable"))
    if s_lo != want_lo:
        raise NoBracketError(
            "bracket is inverted: expected the %s end stable" % stable_end)
    scale = max(abs(lo), abs(hi))
    while hi - lo > rtol * scale:
        mid = 0.5 * (lo + hi)
        if stable_at(mid) == want_lo:
            lo = mid
        else:
            hi = mid
    return lo if want_lo else hi


def scan_frontier(cp: ControllerParams, pp: PlantParams,
                  sweep: FrontierSweep) -> StabilityFrontier:
    """Bisect the stable region's edge at each sweep value.

    min_stable_Ba lowers Ba from the stable high end; max_stable_Kl
    raises Kl from the stable low end.  The contact coupling is the
    linear (bilateral) model throughout.
    """
    min_ba = [] if sweep.scan_Ba else None
    max_kl = [] if sweep.scan_Kl else None
    for value in sweep.values:
        pp_v = _point_params(pp, sweep, value)
        if sweep.scan_Ba:
            lo, hi = sweep.Ba_bracket
            ba = _bisect(lo, hi,
                         lambda x: _stable(dataclasses.replace(cp, Ba=x), pp_v,
                                           sweep.pade_order),
                         "hi", sweep.rtol)
            min_ba.append(ba)
        if sweep.scan_Kl:
            lo, hi = sweep.Kl_bracket
            kl = _bisect(lo, hi,
                         lambda x: _stable(dataclasses.replace(cp, Kl=x), pp_v,
                                           sweep.pade_order),
                         "lo", sweep.rtol)
            max_kl.append(kl)
    return StabilityFrontier(
        sweep_variable=sweep.variable,
        values=np.asarray(sweep.values, dtype=float),
        min_stable_Ba=None if min_ba is None else np.asarray(min_ba),
        max_stable_Kl=None if max_kl is None else np.asarray(max_kl),
        rtol=sweep.rtol)


# ------------------------------------------------------------------- metrics

def magnitude_spectrum(samples: np.ndarray) -> np.ndarray:
    """Hann-windowed magnitude spectrum of a mean-removed record."""
    x = np.asarray(samples, dtype=float)
    x = x - x.mean()
    return np.abs(np.fft.rfft(x * np.hanning(x.size)))


def _parabolic_refine(mags: np.ndarray, k: int) -> float:
    """Sub-bin peak location from the log-magnitude parabola through k."""
    if k <= 0 or k >= mags.size - 1:
        return float(k)
    floor = 1e-300
    a = np.log(max(mags[k - 1], floor))
    b = np.log(max(mags[k], floor))
    c = np.log(max(mags[k + 1], floor))
    denom = a - 2.0 * b + c
    if denom == 0.0:
        return float(k)
    return k + 0.5 * (a - c) / denom


def dominant_mode_hz(samples: np.ndarray, h: float) -> float:
    """Frequency of the largest spectral peak, parabolically interpolated."""
    mags = magnitude_spectrum(samples)
    if mags.size < 3:
        return 0.0
    k = int(np.argmax(mags[1:])) + 1  # mean removal empties the DC bin
    return _parabolic_refine(mags, k) / (len(samples) * h)


def trace_metrics(tr: SimTrace, window: float = 2.0,
                  threshold: float = 7.0) -> ContactMetrics:
    """Scalar summary of a contact run.

    Contact is the first sample whose sensed force exceeds the detection
    threshold in the pressing direction.  The dominant mode is extracted
    from the window of force samples that follows it; energy sums
    |F*v|*h over the whole trace; the noise floor is the standard
    deviation of the mean-removed force over the final window, where the
    run has settled.
    """
    if tr.t.size == 0:
        raise ValueError("empty trace")
    h = float(tr.t[1] - tr.t[0]) if tr.t.size > 1 else 1.0
    above = np.nonzero(tr.F_meas > threshold)[0]
    if above.size == 0:
        raise NoContactError("force never exceeds %g N" % threshold)
    k0 = int(above[0])

    n_win = max(int(round(window / h)), 8)
    seg = tr.F_meas[k0: k0 + n_win]
    mode = dominant_mode_hz(seg, h)

    tail = tr.F_meas[-min(n_win, tr.F_meas.size):]
    rms = float(np.std(tail - tail.mean()))

    return ContactMetrics(
        peak_force=float(np.abs(tr.F_meas).max()),
        dominant_mode=mode,
        energy=float(np.sum(np.abs(tr.F_meas * tr.v_robot)) * h),
        time_to_contact=float(tr.t[k0]),
        contact_velocity=float(abs(tr.v_robot[k0])),
        rms_noise=rms)


# ------------------------------------------------------------------ variants

SCENARIO_KEYS = ("collision_response", "full_stop", "discretization", "mode",
                 "bilateral_env", "duration", "blowup_limit")


def _delta_label(delta: dict) -> str:
    if not delta:
        return "baseline"
    parts = []
    for key, value in sorted(delta.items()):
        if isinstance(value, float):
            parts.append("%s=%g" % (key, value))
        else:
            parts.append("%s=%s" % (key, value))
    return ",".join(parts)


def apply_delta(base: SimScenario, delta: dict) -> SimScenario:
    """Scenario with controller fields or scenario flags overridden."""
    cp_fields = {f.name for f in dataclasses.fields(ControllerParams)}
    cp_over = {}
    sc_over = {}
    for key, value in delta.items():
        if key in cp_fields:
            cp_over[key] = value
        elif key in SCENARIO_KEYS:
            sc_over[key] = value
        else:
            raise ValueError("unknown variant parameter %r" % (key,))
    cp = dataclasses.replace(base.cp, **cp_over) if cp_over else base.cp
    return dataclasses.replace(base, cp=cp, **sc_over)


def compare_variants(base: SimScenario, variants: list,
                     window: float = 2.0,
                     threshold: float = 7.0) -> list:
    """One (label, ContactMetrics) row per controller delta, shared scenario.

    Every variant runs from the same scenario, seed, and force profile;
    only the flagged parameters differ.
    """
    rows = []
    for delta in variants:
        sc = apply_delta(base, delta)
        tr = sim.simulate(sc)
        rows.append((_delta_label(delta), trace_metrics(tr, window, threshold)))
    return rows
