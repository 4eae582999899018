import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from robinheat.bounds import (BoundEnvelope, EnvelopeError, FitError, VolumeFunctional, default_volume_sample,
                              distance, eval_envelope, expected_slope, f1, f2, fit_constants, fit_decay,
                              harnack_weight_check, volume, volume_bounds_sweep, volume_scale, write_fit_report)
from robinheat.experiments import envelope_samples, make_domain, validate_envelopes
from robinheat.grid import build_grid
from robinheat.heat import build_engine
from robinheat.potentials import AffineWeight1D, LogWeight2D

E = math.e


# ---- envelopes

def hand_upper_2d(lam, t, r):
    # C = c = 1, rho = sigma0 = 1, x = y so the Gaussian factor is 1
    p = 1 + math.sqrt(1 - lam)
    return ((math.log(r) + 1) ** 2) ** (p / 2) / (t * (math.log(r + math.sqrt(t)) + 1) ** p)


def test_upper_2d_direct_evaluation():
    env = BoundEnvelope("upper_2d", lam=0.0)
    value = eval_envelope(env, 1.0, (E, 0.0), (E, 0.0))
    assert value == pytest.approx(hand_upper_2d(0.0, 1.0, E), rel=1e-14)
    assert value == pytest.approx(4 / 2.31326**2, rel=1e-5)
    assert value == pytest.approx(0.74750, abs=1e-5)


@pytest.mark.xfail(strict=True, reason="0.37375 uses F2 = 2, but the F2 definition gives (2*2)^1 = 4 at lambda=0")
def test_upper_2d_listed_value():
    env = BoundEnvelope("upper_2d", lam=0.0)
    assert eval_envelope(env, 1.0, (E, 0.0), (E, 0.0)) == pytest.approx(0.37375, abs=1e-5)


def test_f2_and_f1():
    assert f2((E, 0.0), (E, 0.3), 0.0) == pytest.approx(4.0, rel=1e-15)
    assert f1(0.0, 0.0, 1.0) == pytest.approx(1.0)
    assert f1(1.0, 3.0, 0.0) == pytest.approx(2.0 * 4.0)


def test_two_sided_1d_value():
    for c in (0.3, 1.0, 7.0):
        env = BoundEnvelope("two_sided_1d", lam=1.0, C=1.0, c=c)
        assert eval_envelope(env, 1.0, 0.0, 0.0) == pytest.approx(0.5, rel=1e-15)


def test_envelope_kinds_and_sides():
    with pytest.raises(EnvelopeError):
        BoundEnvelope("upper_3d")
    with pytest.raises(EnvelopeError):
        BoundEnvelope("upper_2d", side="lower")
    with pytest.raises(EnvelopeError):
        BoundEnvelope("two_sided_2d", C=0.0)
    with pytest.raises(EnvelopeError):
        BoundEnvelope("hd_two_sided", dimension=2)
    assert BoundEnvelope("lower_2d").side == "lower"
    hd = BoundEnvelope("hd_two_sided", dimension=3, C=2.0)
    assert eval_envelope(hd, 4.0, (2.0, 0.0), (2.0, 0.0)) == pytest.approx(2.0 / 8.0)
    dirichlet = BoundEnvelope("dirichlet_upper")
    assert eval_envelope(dirichlet, 1.0, (E, 0.0), (E, 0.0)) == pytest.approx(1.0 / math.log(E + 1) ** 2)


def test_lower_envelope_exclusion():
    env = BoundEnvelope("two_sided_2d", side="lower")
    assert env.epsilon == 0.5
    with pytest.raises(EnvelopeError):
        eval_envelope(env, 1.0, (1.2, 0.0), (3.0, 0.0))
    assert eval_envelope(env, 1.0, (1.6, 0.0), (3.0, 0.0)) > 0
    assert eval_envelope(BoundEnvelope("two_sided_2d"), 1.0, (1.2, 0.0), (3.0, 0.0)) > 0
    with pytest.raises(EnvelopeError):
        eval_envelope(BoundEnvelope("two_sided_2d"), 0.0, (2.0, 0.0), (2.0, 0.0))


def test_lower_2d_uses_its_own_shift():
    a = BoundEnvelope("lower_2d", beta=0.2)
    b = BoundEnvelope("lower_2d")
    assert a.shape(10.0, 3.0, 3.0) != b.shape(10.0, 3.0, 3.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-2, 1e8), st.floats(1.0, 1e4), st.floats(1.0, 1e4), st.floats(0.0, 1.0),
       st.floats(0.01, 100.0), st.floats(1.0, 100.0), st.sampled_from(["upper", "lower"]))
def test_two_sided_envelope_nonincreasing_in_sigma0(t, rx, ry, lam, sigma0, factor, side):
    lo = BoundEnvelope("two_sided_2d", lam=lam, sigma0=sigma0, side=side, exclusion_radius=0.0)
    hi = BoundEnvelope("two_sided_2d", lam=lam, sigma0=sigma0 * factor, side=side, exclusion_radius=0.0)
    # the denominator sees |x| only; monotonicity needs log|y| <= log(|x| + sqrt(t))
    ry = min(ry, rx + math.sqrt(t))
    x, y = (rx, 0.0), (ry, 1.0)
    assert eval_envelope(hi, t, x, y) <= eval_envelope(lo, t, x, y) * (1 + 1e-12)


def test_sigma0_monotonicity_can_fail_far_off_diagonal():
    lo = BoundEnvelope("two_sided_2d", sigma0=0.25)
    hi = BoundEnvelope("two_sided_2d", sigma0=0.5)
    x, y = (1.0, 0.0), (2.0, 1.0)
    assert eval_envelope(hi, 0.125, x, y) > eval_envelope(lo, 0.125, x, y)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e12), st.floats(1.0, 1e5), st.floats(1.0, 1e5), st.floats(0.0, 1.0),
       st.sampled_from(["two_sided_2d", "upper_2d", "dirichlet_upper", "two_sided_1d"]))
def test_envelopes_finite_and_positive(t, rx, ry, lam, kind):
    if kind == "dirichlet_upper":
        rx, ry = rx + 1e-3, ry + 1e-3
    v = eval_envelope(BoundEnvelope(kind, lam=lam), t, (rx, 0.2), (ry, 0.0))
    assert math.isfinite(v) and v >= 0


# ---- volumes

def test_unweighted_volume_is_disc_area():
    vf = VolumeFunctional(2, LogWeight2D(0.0, 1.0, 1.0))
    assert volume(vf, (10.0, 0.0), 1.0) == pytest.approx(math.pi, rel=1e-6)


def test_volume_against_cartesian_quadrature():
    w = LogWeight2D(1.0, 1.0, 1.0)
    vf = VolumeFunctional(2, w)
    x0, s = 2.0, 1.5

    def column(x):
        # y-extent of the disc minus the unit obstacle, as a list of intervals
        h = math.sqrt(max(s * s - (x - x0) ** 2, 0.0))
        g = math.sqrt(1.0 - x * x) if abs(x) < 1 else 0.0
        if g >= h:
            return 0.0
        f = lambda y: float(w(math.hypot(x, y))) ** 2
        return 2.0 * integrate.quad(f, g, h, epsabs=0, epsrel=1e-11)[0]

    ref = integrate.quad(column, x0 - s, x0 + s, points=[1.0], epsabs=0, epsrel=1e-9, limit=200)[0]
    assert volume(vf, (x0, 0.0), s) == pytest.approx(ref, rel=1e-6)


def test_volume_upper_bound_sweep():
    vf = VolumeFunctional(2, LogWeight2D(1.0, 1.0, 1.0))
    for x, s in default_volume_sample(1.0, 10):
        assert volume(vf, (x, 0.0), s) <= math.pi * volume_scale(vf, (x, 0.0), s) * (1 + 1e-9)


def test_half_line_volume():
    vf = VolumeFunctional(1, AffineWeight1D(1.0, 1.0), kind="V1")
    assert volume(vf, 0.0, 1.0) == pytest.approx(7.0 / 3.0, rel=1e-12)
    with pytest.raises(ValueError):
        VolumeFunctional(2, AffineWeight1D(1.0, 1.0), kind="V1")


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 1e3), st.floats(1e-2, 1e3), st.floats(1.01, 4.0))
def test_volume_increasing_in_radius(x, s, k):
    vf = VolumeFunctional(2, LogWeight2D(0.75, 0.5, 1.0))
    assert volume(vf, (x, 0.0), k * s) > volume(vf, (x, 0.0), s)


def test_volume_bounds_sweep():
    vf = VolumeFunctional(2, LogWeight2D(1.0, 1.0, 1.0))
    rep = volume_bounds_sweep(vf)
    assert 0 < rep.c0_empirical <= math.pi
    assert rep.c0_relative_change <= 0.1
    assert rep.upper_violations == 0
    assert not any(rep.aux_violations.values())
    assert rep.doubling_max <= rep.doubling_bound
    assert rep.passed
    assert rep.to_dict()["passed"]


def test_auxiliary_log_estimate():
    for x, s in default_volume_sample(1.0, 20):
        for d in (0.1, 0.5, 0.9):
            assert math.log(x + d * s) >= d * math.log(x + s) - 1e-14


def test_harnack_weight():
    w = LogWeight2D(1.0, 1.0, 1.0)
    rep = harnack_weight_check(w, (2.0, 0.0), [10.0, 100.0, 1000.0])
    assert math.isfinite(rep.c) and rep.c >= 1
    assert rep.monotone
    cs = [harnack_weight_check(LogWeight2D(1.0, b, 1.0), (2.0, 0.0), [100.0]).c for b in (0.1, 1.0, 10.0)]
    assert (max(cs) - min(cs)) / min(cs) < 0.2
    const = harnack_weight_check(LogWeight2D(0.0, 1.0, 1.0), (2.0, 0.0), [10.0, 100.0])
    assert const.c == 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 1.0), st.floats(1e-2, 1e2), st.floats(1.0, 1e3), st.floats(10.0, 1e5))
def test_harnack_ratio_is_sup_over_inf(alpha, beta, r0, r):
    w = LogWeight2D(alpha, beta, 1.0)
    rep = harnack_weight_check(w, (r0, 0.0), [r])
    # brute-force sup over |z| <= r0 + 2r and inf over |z| >= r - r0
    inner = np.linspace(1.0, r0 + 2 * r, 2000)
    outer = np.geomspace(max(1.0, r - r0), 1e3 * (r0 + r), 2000)
    assert rep.ratios[r] == pytest.approx(w(inner).max() / w(outer).min(), rel=1e-12)


# ---- constant fitting

@pytest.fixture(scope="module")
def planar_diagonal_samples():
    d = make_domain(2, "robin")
    engine = build_engine(d, build_grid(d, 1e5, 2048), None, 0.0, 30, radii=[2, 3, 5, 10], check=False)
    times = np.geomspace(1.0, 1e6, 60)
    return [engine.kernel(float(t), (r, 0.0), (r, 0.0)) for t in times for r in (2.0, 3.0, 5.0, 10.0)]


def test_upper_envelope_validates(planar_diagonal_samples):
    fit = fit_constants(BoundEnvelope("two_sided_2d", lam=0.0), planar_diagonal_samples, 2 / 3)
    assert fit.calibration_count == 160 and fit.validation_count == 80
    assert max(r[0] for r in fit.records[:160]) < 1e4 < min(r[0] for r in fit.records[160:])
    assert fit.passed, fit.summary()


def test_wrong_exponent_fails_validation(planar_diagonal_samples):
    fit = fit_constants(BoundEnvelope("two_sided_2d", lam=0.0, exponent=3.0), planar_diagonal_samples, 2 / 3)
    assert fit.violations > 0


def test_fit_report_files(planar_diagonal_samples, tmp_path):
    fit = fit_constants(BoundEnvelope("upper_2d", lam=0.0), planar_diagonal_samples, 2 / 3)
    write_fit_report(tmp_path / "f.json", tmp_path / "f.csv", fit)
    assert '"violations": 0' in (tmp_path / "f.json").read_text()
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[1] == "t,rx,thx,ry,thy,kernel,envelope" and len(rows) == 2 + 240


def test_fit_constants_preconditions(planar_diagonal_samples):
    env = BoundEnvelope("two_sided_2d")
    with pytest.raises(FitError):
        fit_constants(env, planar_diagonal_samples[:100])
    short = [s for s in planar_diagonal_samples if s.t < 100] * 5
    with pytest.raises(FitError):
        fit_constants(env, short)
    bad = [(t, x, y, -1.0) for t, x, y in ((s.t, s.x, s.y) for s in planar_diagonal_samples)]
    with pytest.raises(FitError):
        fit_constants(env, bad)


def test_fit_recovers_synthetic_gaussian_constant():
    env = BoundEnvelope("two_sided_2d", lam=0.5)
    truth = env.with_constants(3.0, 4.0)
    pts = [((2.0, 0.0), (2.0, 0.0)), ((2.0, 0.0), (3.0, 1.0)), ((3.0, 0.0), (5.0, 2.0))]
    samples = [(t, x, y, eval_envelope(truth, t, x, y)) for t in np.geomspace(10, 1e5, 80) for x, y in pts]
    fit = fit_constants(env, samples)
    assert fit.envelope.c == pytest.approx(4.0, rel=1e-9)
    assert fit.envelope.C == pytest.approx(3.0, rel=1e-9)
    assert fit.violations == 0


@pytest.fixture(scope="module")
def line_samples():
    return envelope_samples(1, 0.0)


def test_one_dimensional_upper_envelope_validates(line_samples):
    fits = validate_envelopes(line_samples, "two_sided_1d", 0.0, sides=("upper",))
    assert fits["upper"].passed


@pytest.mark.xfail(strict=True, reason="kernel over shape decreases monotonically toward its limit, "
                                       "so the late window sits below any early-window lower constant")
def test_one_dimensional_lower_envelope_validates(line_samples):
    fits = validate_envelopes(line_samples, "two_sided_1d", 0.0, sides=("lower",))
    assert fits["lower"].passed


# ---- decay regression

@pytest.mark.parametrize("s", [1.0, 1.5, 2.0])
def test_fit_decay_recovers_synthetic_exponent(s):
    t = np.geomspace(1e3, 1e7, 41)
    rng = np.random.default_rng(7)
    k = t ** -1 * np.log(t) ** -s * np.exp(1e-4 * rng.standard_normal(t.size))
    fit = fit_decay((t, k), "loglog_t")
    assert abs(fit.slope + s) <= 2 * fit.slope_stderr
    assert fit.window == (pytest.approx(1e3), pytest.approx(1e7))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-5.0, 5.0), st.floats(1e-3, 1e2))
def test_fit_decay_exact_power_laws(s, logc, t_min):
    t = np.geomspace(max(t_min, 1.5), max(t_min, 1.5) * 1e4, 30)
    fit = fit_decay((t, math.exp(logc) * t ** -s), "log_t")
    assert fit.slope == pytest.approx(-s, abs=1e-9)
    fit2 = fit_decay((t, math.exp(logc) / (t * np.log(t) ** s)), "loglog_t")
    assert fit2.slope == pytest.approx(-s, abs=1e-9)


def test_fit_decay_preconditions():
    t = np.geomspace(10, 1e3, 20)
    with pytest.raises(FitError):
        fit_decay((t, 1 / t))
    t = np.geomspace(0.1, 1e3, 20)
    with pytest.raises(FitError):
        fit_decay((t, 1 / t), "loglog_t", min_decades=3)
    with pytest.raises(FitError):
        fit_decay((np.geomspace(10, 1e5, 20), -np.ones(20)), "log_t")


def test_expected_slopes():
    assert expected_slope(2, 0.0) == ("loglog_t", -2.0)
    assert expected_slope(2, 0.75) == ("loglog_t", -1.5)
    assert expected_slope(2, 1.0) == ("loglog_t", -1.0)
    assert expected_slope(2, 0.0, "neumann") == ("log_t", -1.0)
    assert expected_slope(3, 0.0) == ("log_t", -1.5)
    assert expected_slope(1, 0.0, "neumann") == ("log_t", -0.5)
    assert expected_slope(1, 0.0) == ("log_t", -1.5)


def test_three_dimensional_gaussian_shape():
    d = make_domain(3, "robin")
    engine = build_engine(d, build_grid(d, 1e3, 1024), None, 0.0, 40, radii=[5.0], check=False)
    t = 2.0
    angles = np.linspace(0.0, 1.2, 12)
    d2 = np.array([distance((5.0, 0.0), (5.0, a)) ** 2 for a in angles]) / t
    logk = np.log([engine.kernel(t, (5.0, 0.0), (5.0, a)).value for a in angles])
    fit = stats.linregress(d2, logk)
    assert fit.slope < 0
    assert fit.rvalue ** 2 > 0.999
