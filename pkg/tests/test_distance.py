import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from donsker_lab import functionals as fn
from donsker_lab.distance import (
    SQRT_2_OVER_PI,
    _coarse_error_values,
    cube_root_rule,
    envelope_check,
    increment_modulus_check,
    interpolation_error,
    kr_lower_bound,
    main_rate,
    martingale_moment_check,
    modulus_moments,
    monotone_check,
    null_floor,
    projection_error,
    rate_fit,
    reflection_lipschitz_check,
    scalar_w1,
    w1_to_law,
)
from donsker_lab.mc import MCEstimate
from donsker_lab.paths import IncrementLaw, local_time_at_one, sample_walks
from donsker_lab.rng import SeededStream
from donsker_lab.sobolev import LagRule, SobolevIndex, norm_eta_p_batch

from oracles import (
    affine_eval,
    bridge_sup_dense,
    sobolev_power_quad,
    w1_quad,
    w1_rademacher_normal,
    w1_two_atoms_halfnormal,
)

RAD = IncrementLaw()
GAUSS = IncrementLaw("gaussian")
IDX = SobolevIndex(0.1, 20.0)


def test_scalar_w1_examples():
    assert scalar_w1([0.3, -1.0, 2.0], [2.0, 0.3, -1.0]) == 0.0
    assert scalar_w1([0.0], [1.0]) == 1.0
    assert scalar_w1([0.0, 1.0], [0.5, 1.5]) == 0.5
    with pytest.raises(ValueError):
        scalar_w1([], [1.0])


def test_scalar_w1_is_a_metric_and_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = (rng.standard_normal(rng.integers(1, 40)) * rng.uniform(0.5, 3) for _ in range(3))
        ab = scalar_w1(a, b)
        assert ab == scalar_w1(b, a)
        assert ab <= scalar_w1(a, c) + scalar_w1(c, b) + 1e-12
        assert ab == pytest.approx(stats.wasserstein_distance(a, b), rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("law", ["normal", "halfnormal"])
def test_w1_to_law_against_quadrature(law):
    rng = np.random.default_rng(1)
    cdf = stats.norm.cdf if law == "normal" else (lambda u: max(0.0, 2 * stats.norm.cdf(u) - 1))
    for n in (1, 2, 7, 30):
        x = rng.standard_normal(n) * 1.3
        if law == "halfnormal":
            x = np.abs(x)
        # start the half-normal integral at its kink so quad sees a smooth piece
        lo = -40.0 if law == "normal" else 0.0
        assert w1_to_law(x, law) == pytest.approx(w1_quad(x, cdf, lo=lo), abs=1e-9)


def test_rademacher_single_step_against_normal():
    # the two explicit CDFs give 0.5354; see the notes for the other figure
    exact = w1_rademacher_normal()
    assert w1_to_law([-1.0, 1.0], "normal") == pytest.approx(exact, abs=1e-10)
    assert exact == pytest.approx(0.5354, abs=1e-4)
    est = kr_lower_bound(1, RAD, [fn.endpoint()], 100_000, SeededStream(2))["endpoint"]
    assert abs(est.value - exact) <= 3 * est.se + 0.01


def test_local_time_single_step_against_half_normal():
    exact = w1_two_atoms_halfnormal()
    assert w1_to_law([0.0, 1.0], "halfnormal") == pytest.approx(exact, abs=1e-10)
    vals = sample_walks(1, RAD, 100_000, SeededStream(3))[..., 0]
    L = local_time_at_one(vals)
    assert set(np.unique(L)) == {0.0, 1.0}
    assert abs(w1_to_law(L, "halfnormal") - exact) < 0.01


def test_gaussian_walk_has_no_lower_bound_at_vertices():
    s = SeededStream(4)
    est = kr_lower_bound(8, GAUSS, [fn.endpoint()], 20_000, s)["endpoint"]
    assert est.value <= null_floor(20_000, "normal", s) + 3 * est.se
    with pytest.raises(ValueError):
        kr_lower_bound(4, RAD, [fn.square_endpoint()], 100, s)


def test_fine_reference_agrees_with_exact_law():
    s = SeededStream(5)
    exact = kr_lower_bound(16, RAD, [fn.abs_endpoint()], 20_000, s)["abs_endpoint"]
    fine = kr_lower_bound(16, RAD, [fn.abs_endpoint()], 20_000, s, reference="fine", m_ref=256)["abs_endpoint"]
    assert abs(exact.value - fine.value) <= 3 * math.hypot(exact.se, fine.se) + 0.01


def test_rate_fit_examples():
    xs = [2.0, 4.0, 8.0, 16.0]
    f = rate_fit([(x, x ** -0.4) for x in xs])
    assert f.slope == pytest.approx(-0.4, abs=1e-12) and f.residual_norm < 1e-12
    assert f.predict(32.0) == pytest.approx(32 ** -0.4, rel=1e-12)
    assert rate_fit([(x, 3.0) for x in xs]).slope == pytest.approx(0.0, abs=1e-12)
    noise = 1 + 0.01 * np.random.default_rng(6).standard_normal(12)
    xs = 2.0 ** np.arange(12)
    assert rate_fit(list(zip(xs, xs ** -0.5 * noise))).slope == pytest.approx(-0.5, abs=0.02)
    with pytest.raises(ValueError):
        rate_fit([(1, 1.0), (2, 0.0), (3, 1.0)])
    with pytest.raises(ValueError):
        rate_fit([(1, 1.0), (2, 1.0)])


def test_cube_root_rule_and_envelopes():
    assert [cube_root_rule(m) for m in (1, 64, 65, 512, 4096)] == [1, 4, 5, 8, 16]
    rate = main_rate(0.1)
    assert rate(2) == pytest.approx(2 ** (-1 / 6 + 0.1 / 3))
    ests = [MCEstimate(1.0, 0.01, 100), MCEstimate(0.8, 0.01, 100), MCEstimate(0.81, 0.01, 100)]
    assert monotone_check(ests)
    assert not monotone_check([MCEstimate(1.0, 0.01, 100), MCEstimate(1.2, 0.01, 100)])
    ok, c = envelope_check([1, 2, 4], ests, lambda m: 1.0)
    assert ok and c == 1.0
    assert not envelope_check([1, 2], [MCEstimate(1.0, 0.0, 1), MCEstimate(2.0, 0.0, 1)], lambda m: 1.0)[0]


def test_coupled_errors_vanish_on_the_diagonal():
    s = SeededStream(7)
    assert projection_error(16, 16, RAD, IDX, 500, s).value == 0.0
    assert interpolation_error(8, 8, IDX, 500, s).value == 0.0
    with pytest.raises(ValueError):
        interpolation_error(8, 256, IDX, 10, s)
    with pytest.raises(ValueError):
        interpolation_error(3, 64, IDX, 10, s)


@pytest.mark.parametrize("N", [2, 3])
def test_sawtooth_projection_error_against_quadrature(N):
    # alternating walk: its coarse interpolation and the error are explicit
    m = 8
    v = np.array([0.0, 1.0] * 4 + [0.0]) / math.sqrt(m)
    diff = _coarse_error_values(v[None, :, None], N)[0, :, 0]
    grid = np.linspace(0, 1, diff.size)
    coarse = affine_eval(affine_eval(v, np.linspace(0, 1, N + 1)), grid)
    assert np.allclose(diff, affine_eval(v, grid) - coarse, atol=1e-15)
    got = norm_eta_p_batch(diff[None, :, None], IDX, LagRule().refined(), power=True)[0]
    ref = sobolev_power_quad(diff, IDX.eta, IDX.p)
    assert got == pytest.approx(ref, rel=2e-3)


def test_projection_error_on_a_walk_matches_batch_pipeline():
    s = SeededStream(8)
    est, power, qerr = projection_error(27, 3, RAD, IDX, 600, s, return_power=True)
    assert est.value == pytest.approx(power.value ** (1 / 20), rel=1e-12)
    assert 0 < est.se < est.value and qerr < 1e-2


def test_interpolation_sup_against_dense_bridges():
    s = SeededStream(9)
    vals = []
    for N in (2, 4, 8):
        got = interpolation_error(N, 64 * N, IDX, 4000, s.child(N), sup=True)
        dense = bridge_sup_dense(N, 64, 4000, seed=N)
        se = math.hypot(got.se, dense.std() / math.sqrt(dense.size))
        assert abs(got.value - dense.mean()) <= 3 * se
        vals.append(got.value)
    slope = rate_fit(list(zip((2, 4, 8), vals))).slope
    assert -0.6 < slope < -0.25


def test_modulus_zero_cases():
    s = SeededStream(10)
    est = modulus_moments(64, 4, RAD, [(Fraction(1, 4), Fraction(3, 4)), (Fraction(1, 3), Fraction(1, 3)), (0, 1)], 4, 2000, s)
    assert [e.value for e in est] == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        modulus_moments(64, 5, RAD, [(0, 1)], 4, 10, s)


def test_increment_modulus_quick():
    rep = increment_modulus_check(2 ** 10 * 8, 8, GAUSS, 2000, SeededStream(11), p=4)
    assert rep.passed, rep.fits["time"]


@pytest.mark.parametrize("p", [2, 4])
def test_martingale_moments(p):
    ests, fit = martingale_moment_check(RAD, [16, 64, 256, 1024], p, 20_000, SeededStream(12))
    assert fit.slope == pytest.approx(p / 2, abs=0.1)
    assert ests[0].within(16.0 if p == 2 else 3 * 16 ** 2 - 2 * 16)


def test_reflection_lipschitz_spot_check():
    assert reflection_lipschitz_check(32, 50, SeededStream(13)) <= 2.0


def test_half_normal_mean():
    assert SQRT_2_OVER_PI == pytest.approx(0.797885, abs=1e-6)
    z = np.abs(np.random.default_rng(14).standard_normal(400_000))
    assert abs(z.mean() - SQRT_2_OVER_PI) <= 3 * z.std() / math.sqrt(z.size)
