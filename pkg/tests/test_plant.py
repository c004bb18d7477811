"""Block construction and loop assembly for the robot/payload rig."""

import math

import numpy as np
import pytest

from admlab import lti, plant
from admlab.lti import Polynomial, tf

W_GRID = np.logspace(np.log10(2 * np.pi * 0.05), np.log10(2 * np.pi * 100.0), 200)
HZ_GRID = W_GRID / (2.0 * np.pi)


def nominal_pp(**kw):
    return plant.PlantParams(**kw)


# ---------------------------------------------------------------------------
# Parameter containers


def test_controller_params_validation():
    with pytest.raises(ValueError):
        plant.ControllerParams(Ma=0.0)
    with pytest.raises(ValueError):
        plant.ControllerParams(Ba=-1.0)
    with pytest.raises(ValueError):
        plant.ControllerParams(Kl=-0.01)
    with pytest.raises(ValueError):
        plant.ControllerParams(h=0.0)
    with pytest.raises(ValueError):
        plant.ControllerParams(F_bar=0.0)


def test_plant_params_validation():
    with pytest.raises(ValueError):
        plant.PlantParams(Mp=0.0)
    with pytest.raises(ValueError):
        plant.PlantParams(Ks=0.0)
    with pytest.raises(ValueError):
        plant.PlantParams(Td=-1e-3)
    with pytest.raises(ValueError):
        plant.PlantParams(robot=tf([1.0], [1.0, 1.0], delay=1e-3))


def test_variable_damping_schedule():
    vd = plant.VarDampingParams()
    assert vd.target(0.0) == pytest.approx(800.0)
    # decays exponentially with speed until it hits the floor
    assert vd.target(0.02) == pytest.approx(800.0 * math.exp(-0.16), rel=1e-12)
    assert vd.target(1.0) == pytest.approx(550.0)
    # crossover speed where the exponential meets the floor
    v_cross = math.log(800.0 / 550.0) / 8.0
    assert vd.target(v_cross) == pytest.approx(550.0, rel=1e-12)
    assert v_cross == pytest.approx(0.0468366, rel=1e-5)
    with pytest.raises(ValueError):
        plant.VarDampingParams(B_hi=500.0, B_lo=550.0)


def test_contact_tuning_defaults_and_overrides():
    cp = plant.contact_controller()
    assert (cp.Ma, cp.Ba, cp.Kl, cp.Bfb) == (13.0, 1000.0, 0.013, 7.5e-6)
    assert cp.Fd == 30.0
    cp2 = plant.contact_controller(Ba=800.0, var_damping=plant.VarDampingParams())
    assert cp2.Ba == 800.0
    assert cp2.var_damping is not None


# ---------------------------------------------------------------------------
# Individual blocks


def test_admittance_block_coefficients():
    b = plant.build_blocks(plant.ControllerParams())
    # 1/(10 s^2 + 1000 s), stored monic: den s^2 + 100 s
    assert b.A.den.coeffs == pytest.approx([0.0, 100.0, 1.0])
    assert b.A.num.coeffs == pytest.approx([0.1])


def test_lead_block_disabled_at_zero_gain():
    b = plant.build_blocks(plant.ControllerParams(Kl=0.0))
    assert b.Cff.is_zero()


def test_damping_feedback_block_shape():
    cp = plant.ControllerParams()
    b = plant.build_blocks(cp)
    # Bfb*wv*s/(s+wv): zero at DC, gain Bfb*wv far above the cutoff
    assert abs(lti.freq_response(b.Cfb, 1e-6)) <= 1e-8 * cp.Bfb * cp.omega_v
    hf = abs(lti.freq_response(b.Cfb, 1e5))
    assert hf == pytest.approx(cp.Bfb * cp.omega_v, rel=1e-3)


def test_acceleration_estimator_normalized_gain():
    cp = plant.ControllerParams()
    b = plant.build_blocks(cp)
    w = 1000.0
    ratio = abs(lti.freq_response(b.Oa, w)) / w ** 2
    # |wa*wv/((jw+wa)(jw+wv))| at w=1000 with wa=200, wv=120
    want = abs(200.0 * 120.0 / (complex(200.0, w) * complex(120.0, w)))
    assert ratio == pytest.approx(want, rel=1e-12)
    assert ratio == pytest.approx(0.0233663, rel=1e-4)


def test_ideal_acceleration_estimator_is_double_differentiator():
    b = plant.build_blocks(plant.ControllerParams(), ideal_acc=True)
    assert b.Oa.num == Polynomial([0.0, 0.0, 1.0])
    assert b.Oa.den == Polynomial([1.0])


def test_default_velocity_loop_poles_and_gain():
    r = plant.default_robot()
    assert sorted(lti.poles(r).real) == pytest.approx([-20.0, -4.0], rel=1e-9)
    assert abs(lti.freq_response(r, 1e6)) == pytest.approx(20.0, rel=1e-6)


# ---------------------------------------------------------------------------
# Payload mode helpers


def test_natural_frequency_against_direct_formula():
    assert plant.natural_frequency(50.0, 1.6e5) == pytest.approx(
        math.sqrt(1.6e5 / 50.0) / (2.0 * math.pi), rel=1e-12)
    assert plant.natural_frequency(50.0, 1.6e5) == pytest.approx(9.00, rel=0.02)
    assert plant.natural_frequency(16.0, 3e5) == pytest.approx(
        math.sqrt(3e5 / 16.0) / (2.0 * math.pi), rel=1e-12)
    assert plant.natural_frequency(16.0, 3e5) == pytest.approx(21.8, rel=0.01)


def test_damping_ratio_formula():
    assert plant.damping_ratio(0.0, 16.0, 3e5) == 0.0
    assert plant.damping_ratio(630.0, 16.0, 3e5) == pytest.approx(
        630.0 / (2.0 * math.sqrt(16.0 * 3e5)), rel=1e-12)


def test_payload_mode_inversion_round_trip():
    Mp, Bp = plant.payload_for_mode(9.0, 0.14, 3e5)
    assert plant.natural_frequency(Mp, 3e5) == pytest.approx(9.0, rel=1e-12)
    assert plant.damping_ratio(Bp, Mp, 3e5) == pytest.approx(0.14, rel=1e-12)


# ---------------------------------------------------------------------------
# Loop assembly


def test_free_space_pure_admittance_reduction():
    # every enhancement off, no environment: the force loop collapses to
    # minus admittance times velocity tracking with the bare transport delay
    cp = plant.ControllerParams(Kl=0.0, Bfb=0.0, Mp_hat=0.0)
    pp = nominal_pp(Ke=0.0)
    m = plant.build_loop(cp, pp)
    assert m.G.delay == pytest.approx(pp.Td)
    b = plant.build_blocks(cp)
    got = lti.freq_response(m.G, W_GRID)
    want = (-lti.freq_response(b.A, W_GRID)
            * lti.freq_response(pp.robot, W_GRID)
            * np.exp(-1j * W_GRID * pp.Td))
    assert np.allclose(got, want, rtol=1e-12)


def test_sensor_path_matches_direct_complex_evaluation():
    pp = nominal_pp()
    m = plant.build_loop(plant.ControllerParams(), pp)
    w = np.array([0.01, 0.3, 7.0, 60.0])
    jw = 1j * w
    P = 1.0 / (pp.Mp * jw + pp.Bp)
    E = pp.Ke / jw
    pe = P * E
    want = (pp.Ks / jw) * (1.0 + pe) / (1.0 + pe + P * pp.Ks / jw)
    got = lti.freq_response(m.E_bar, w)
    assert np.allclose(got, want, rtol=1e-10)
    assert abs(got[0]) == pytest.approx(1.875e7, rel=1e-6)


def test_force_tracking_is_exact_at_dc():
    m = plant.build_loop(plant.ControllerParams(), nominal_pp())
    assert lti.freq_response(m.closed, 0.0) == pytest.approx(1.0 + 0.0j, abs=1e-12)


VARIANTS = [
    ("baseline", dict(Kl=0.0, Bfb=0.0), False),
    ("lead_only", dict(Bfb=0.0), False),
    ("lead_plus_feedback", dict(), False),
    ("ideal_acc_comp", dict(Bfb=0.0, Mp_hat=16.0), True),
    ("filtered_acc_comp", dict(Bfb=0.0, Mp_hat=16.0), False),
    ("full_ideal", dict(Mp_hat=16.0), True),
    ("full_filtered", dict(Mp_hat=16.0), False),
]


@pytest.mark.parametrize("tag,kw,ideal", VARIANTS, ids=[v[0] for v in VARIANTS])
def test_assembled_rational_matches_blockwise_composition(tag, kw, ideal):
    # primary guard: the single assembled rational function must reproduce
    # the response composed block by block in complex arithmetic
    m = plant.build_loop(plant.ControllerParams(**kw), nominal_pp(), ideal_acc=ideal)
    asm = lti.freq_response(m.closed, W_GRID)
    blk = plant.loop_response(m, "closed", W_GRID, exact_delay=False)
    rel = np.abs(asm - blk) / np.maximum(np.abs(blk), 1e-30)
    assert rel.max() <= 1e-8


def test_closed_loop_composes_from_open_loop_pieces():
    # the closed force loop is the open loop fed back through unity
    m = plant.build_loop(plant.ControllerParams(), nominal_pp())
    assert m.G.delay == 0.0  # feedback damping puts the delay inside the loop
    Gv = lti.freq_response(m.G, W_GRID)
    Ev = lti.freq_response(m.E_bar, W_GRID)
    L = Gv * Ev
    want = -L / (1.0 - L)
    got = lti.freq_response(m.closed, W_GRID)
    assert np.allclose(got, want, rtol=1e-8)


def test_delay_stays_exact_only_outside_the_denominator():
    pp = nominal_pp()
    assert plant.build_loop(plant.ControllerParams(Bfb=0.0), pp).G.delay == pp.Td
    assert plant.build_loop(plant.ControllerParams(), pp).G.delay == 0.0
    assert plant.build_loop(
        plant.ControllerParams(Bfb=0.0, Mp_hat=16.0), pp).G.delay == 0.0


def test_nominal_loop_is_stable_and_baseline_is_not():
    pp = nominal_pp()
    stable, margin = plant.closed_loop_stable(
        plant.build_loop(plant.ControllerParams(), pp))
    assert stable
    assert margin == pytest.approx(-14.456, rel=1e-3)
    stable_b, margin_b = plant.closed_loop_stable(
        plant.build_loop(plant.ControllerParams(Kl=0.0, Bfb=0.0), pp))
    assert not stable_b
    assert margin_b == pytest.approx(5.296, rel=1e-3)


def test_lead_gain_lowers_the_contact_resonance_peak():
    pp = nominal_pp()
    mags = {}
    for tag, kl in (("base", 0.0), ("lead", 0.02)):
        m = plant.build_loop(plant.ControllerParams(Kl=kl, Bfb=0.0), pp)
        mags[tag] = np.abs(plant.loop_response(m, "closed", W_GRID)).max()
    assert mags["lead"] < mags["base"]


def test_feedback_damping_strictly_lowers_admittance_in_band():
    pp = nominal_pp()
    band = (HZ_GRID >= 1.0) & (HZ_GRID <= 20.0)
    prev = None
    for bfb in (0.0, 2e-5, 4e-5):
        m = plant.build_loop(plant.ControllerParams(Bfb=bfb), pp)
        mag = np.abs(plant.loop_response(m, "G", W_GRID))[band]
        if prev is not None:
            assert np.all(mag < prev)
        prev = mag


def test_inverse_mass_compensation_flag():
    pp = nominal_pp()
    with pytest.raises(ValueError):
        plant.build_loop(plant.ControllerParams(Mp_hat=0.0), pp,
                         inverse_mass_comp=True)
    cp = plant.ControllerParams(Bfb=0.0, Mp_hat=16.0)
    direct = plant.build_loop(cp, pp)
    inverse = plant.build_loop(cp, pp, inverse_mass_comp=True)
    a = np.abs(plant.loop_response(direct, "closed", W_GRID))
    b = np.abs(plant.loop_response(inverse, "closed", W_GRID))
    # the two readings scale the compensation by Mp_hat^2, so they must
    # differ visibly somewhere on the grid
    assert np.max(np.abs(a - b) / np.maximum(b, 1e-30)) > 1e-2


def test_stability_margin_tracks_time_domain_margin_sign():
    # the variants whose sign of the margin the time-domain oracle checks
    pp = nominal_pp()
    cases = [
        (dict(Bfb=0.0), False, True, -14.454),
        (dict(Bfb=0.0, Mp_hat=16.0), True, False, 1.427),
        (dict(Bfb=0.0, Mp_hat=16.0), False, True, -5.077),
    ]
    for kw, ideal, want_stable, want_margin in cases:
        st, margin = plant.closed_loop_stable(
            plant.build_loop(plant.ControllerParams(**kw), pp, ideal_acc=ideal))
        assert st == want_stable
        assert margin == pytest.approx(want_margin, rel=1e-3)
