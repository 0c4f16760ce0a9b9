import math

import numpy as np
import pytest
from numpy.polynomial import hermite_e
from scipy import stats

from donsker_lab import functionals as fn
from donsker_lab.mc import combined_se
from donsker_lab.ou_stein import (
    OUTime,
    generator_at,
    hermite,
    lipschitz_modulus_probe,
    ou_apply,
    ou_derivative,
    ou_derivative_commuted,
    ou_derivative_fd,
    second_deriv_two_copy,
    smoothing_error_check,
    stein_dirichlet_check,
    taylor_decomposition_terms,
)
from donsker_lab.paths import BasisIndex, GridPath, IncrementLaw, basis_h
from donsker_lab.rng import SeededStream

from oracles import abs_endpoint_generator_m2

RAD = IncrementLaw()
GAUSS = IncrementLaw("gaussian")


def test_ou_time():
    assert OUTime(0).beta == 0.0
    assert OUTime(50).beta == pytest.approx(1.0)
    for tau in (1e-8, 0.3, 4.0):
        t = OUTime(tau)
        assert 0 <= t.beta < 1
        assert t.beta ** 2 + t.decay ** 2 == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        OUTime(-1.0)


def test_hermite_examples_and_oracle():
    assert hermite(1, 0.0) == 0.0
    assert hermite(2, 2.0) == 3.0
    y = np.linspace(-3, 3, 13)
    for k in range(7):
        c = np.zeros(k + 1)
        c[k] = 1
        assert np.allclose(hermite(k, y), hermite_e.hermeval(y, c), rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        hermite(-1, 0.0)
    z = np.random.default_rng(0).standard_normal(1_000_000)
    h2 = hermite(2, z)
    assert abs(h2.mean()) <= 3 * h2.std() / math.sqrt(z.size)


def test_ou_apply_examples():
    x = GridPath([0.0, 0.4, 1.2])
    s = SeededStream(1)
    assert ou_apply(fn.constant(2.5), x, 0.7, 2000, s).value == 2.5
    tau = 0.7
    est = ou_apply(fn.endpoint(), x, tau, 20_000, s)
    # antithetic pairs make a linear functional exact
    assert est.value == pytest.approx(math.exp(-tau) * 1.2, abs=1e-12)
    est = ou_apply(fn.square_endpoint(), x, tau, 50_000, s)
    t = OUTime(tau)
    assert est.within((t.decay * 1.2) ** 2 + t.beta ** 2)


def test_ou_derivative_examples():
    x1 = GridPath([0.0, 0.3])
    h = basis_h(BasisIndex(1, 0, 1))
    s = SeededStream(2)
    tau = 0.5
    assert ou_derivative(fn.endpoint(), x1, tau, 1, h, 50_000, s).within(math.exp(-tau))
    assert ou_derivative(fn.constant(), x1, tau, 1, h, 5000, s).within(0.0)
    with pytest.raises(ValueError):
        ou_derivative(fn.endpoint(), x1, 0.0, 1, h, 100, s)
    with pytest.raises(ValueError):
        ou_derivative(fn.endpoint(), x1, tau, 3, h, 100, s)


@pytest.mark.parametrize("F", [fn.square_endpoint(), fn.sin_endpoint(), fn.tanh_integral(), fn.softmax()], ids=lambda F: F.tag)
def test_second_derivative_three_ways(F):
    # Hermite weights, finite differences of P_tau F and the commuted formula
    x = GridPath([0.0, 0.5, -0.2, 0.3])
    h = basis_h(BasisIndex(1, 1, 3))
    tau, reps = 0.4, 100_000
    s = SeededStream(3)
    her = ou_derivative(F, x, tau, 2, h, reps, s.child(1))
    fd = ou_derivative_fd(F, x, tau, 2, h, 0.05, reps, s.child(2))
    com = ou_derivative_commuted(F, x, tau, 2, h, reps, s.child(3))
    assert abs(her.value - com.value) <= 3 * combined_se(her, com)
    # fd and the commuted formula: step^4 after Richardson, negligible here
    assert abs(fd.value - com.value) <= 3 * combined_se(fd, com) + 1e-4


def test_second_derivative_square_endpoint_exact():
    x = GridPath([0.0, 0.7])
    h = basis_h(BasisIndex(1, 0, 1))
    tau = 0.3
    exact = 2 * math.exp(-2 * tau)
    assert ou_derivative_commuted(fn.square_endpoint(), x, tau, 2, h, 100, SeededStream(0)).value == pytest.approx(exact, rel=1e-14)
    est = second_deriv_two_copy(fn.square_endpoint(), x, tau, h, 100_000, SeededStream(4))
    assert est.within(exact)


def test_two_copy_linear_is_zero_and_matches_hermite():
    x = GridPath([0.0, 0.2, 0.1, -0.4])
    h = basis_h(BasisIndex(1, 2, 3))
    s = SeededStream(5)
    assert abs(second_deriv_two_copy(fn.endpoint(), x, 0.5, h, 2000, s).value) < 1e-12
    a = second_deriv_two_copy(fn.sin_endpoint(), x, 0.5, h, 100_000, s.child(1))
    b = ou_derivative(fn.sin_endpoint(), x, 0.5, 2, h, 100_000, s.child(2))
    assert abs(a.value - b.value) <= 3 * combined_se(a, b)


def test_two_copy_projected_matches_fine_on_aligned_grid():
    # N | m: F o pi^N read in coarse coordinates equals F applied to coarsen
    from donsker_lab.paths import coarsen_values

    m, N = 4, 2
    F = fn.softmax(times=(0.5, 1.0))
    Fc = fn.PathFunctional("coarse", lambda v: F.evaluate(coarsen_values(v, N)))
    x = GridPath([0.0, 0.1, 0.4, 0.2, 0.5])
    h = basis_h(BasisIndex(1, 1, m))
    a = second_deriv_two_copy(F, x, 0.6, h, 100_000, SeededStream(6), N=N)
    b = second_deriv_two_copy(Fc, x, 0.6, h, 100_000, SeededStream(7))
    assert abs(a.value - b.value) <= 3 * combined_se(a, b)


def test_generator_examples():
    s = SeededStream(8)
    assert generator_at(fn.constant(), 4, 2, RAD, 0.5, 5000, s).value == 0.0
    assert generator_at(fn.abs_endpoint(), 6, 3, GAUSS, 0.5, 50_000, s).within(0.0)
    assert generator_at(fn.sup_norm(), 6, 6, GAUSS, 0.2, 50_000, s).within(0.0)


@pytest.mark.parametrize("tau", [0.1, 0.5, 2.0])
def test_generator_against_closed_form(tau):
    est = generator_at(fn.abs_endpoint(), 2, 2, RAD, tau, 200_000, SeededStream(9))
    assert est.within(abs_endpoint_generator_m2(tau))


def test_generator_raw_and_projected_agree():
    s = SeededStream(10)
    a = generator_at(fn.abs_endpoint(), 5, 2, RAD, 0.3, 100_000, s.child(1))
    b = generator_at(fn.abs_endpoint(), 5, 2, RAD, 0.3, 100_000, s.child(2), method="raw")
    assert abs(a.value - b.value) <= 3 * combined_se(a, b)


def test_taylor_terms_sum_to_generator():
    s = SeededStream(11)
    F = fn.softmax()
    t1, t2 = taylor_decomposition_terms(F, 6, 3, RAD, 0.4, 20_000, s.child(1))
    g = generator_at(F, 6, 3, RAD, 0.4, 100_000, s.child(2))
    tot = t1.value + t2.value
    assert abs(tot - g.value) <= 3 * math.sqrt(t1.se ** 2 + t2.se ** 2 + g.se ** 2)
    g1, g2 = taylor_decomposition_terms(F, 4, 2, GAUSS, 0.4, 20_000, s.child(3))
    assert abs(g1.value + g2.value) <= 3 * math.sqrt(g1.se ** 2 + g2.se ** 2)
    c1, c2 = taylor_decomposition_terms(fn.constant(), 4, 2, RAD, 0.4, 2000, s.child(4))
    assert c1.value == 0.0 and c2.value == 0.0


def test_stein_identity_quick():
    s = SeededStream(12)
    c = stein_dirichlet_check(fn.constant(), 2, 1, RAD, 0.05, 8.0, 5000, s)
    assert c.lhs.value == 0.0 and abs(c.rhs.value) < 1e-12
    c = stein_dirichlet_check(fn.endpoint(), 2, 2, GAUSS, 0.05, 8.0, 20_000, s.child(1))
    assert c.lhs.within(0.0) and c.passed
    c = stein_dirichlet_check(fn.softmax(), 3, 2, RAD, 0.05, 8.0, 20_000, s.child(2))
    assert c.passed
    with pytest.raises(ValueError):
        stein_dirichlet_check(fn.endpoint(), 2, 1, RAD, 0.0, 8.0, 5000, s)
    with pytest.raises(ValueError):
        stein_dirichlet_check(fn.endpoint(), 2, 1, RAD, 0.05, 8.0, 5001, s)


def test_smoothing_gap():
    s = SeededStream(13)
    c = smoothing_error_check(fn.constant(), 4, RAD, 0.1, 2000, s)
    assert c.gap.value == 0.0 and c.majorant.value == 0.0
    taus = [1e-3, 4e-3, 1.6e-2, 6.4e-2]
    maj = [smoothing_error_check(fn.abs_endpoint(), 8, RAD, t, 20_000, s.child(k)) for k, t in enumerate(taus)]
    assert all(c.ordered for c in maj)
    # the coupling majorant shrinks like sqrt(tau)
    slope = stats.linregress(np.log(taus), np.log([c.majorant.value for c in maj])).slope
    assert slope == pytest.approx(0.5, abs=0.05)
    assert all(c.majorant.value <= 2 * c.scale for c in maj)


def test_probe_examples():
    s = SeededStream(14)
    a = BasisIndex(1, 10, 32)
    v = GridPath.zeros(32)
    r = lipschitz_modulus_probe(fn.softmax(), 32, 2, a, 0.0, 0.4, v, 5000, s)
    assert r.delta.value == 0.0 and r.ratio == 0.0
    r = lipschitz_modulus_probe(fn.endpoint(), 32, 2, a, 0.3, 0.4, v, 5000, s)
    assert abs(r.delta.value) < 1e-12
    with pytest.raises(ValueError):
        lipschitz_modulus_probe(fn.softmax(), 16, 2, BasisIndex(1, 0, 16), 0.1, 0.4, GridPath.zeros(16), 100, s)


def test_probe_is_linear_in_eps():
    s = SeededStream(15)
    m, N = 64, 4
    a = BasisIndex(1, 3 * m // 8, m)
    v = GridPath.zeros(m)
    eps = [0.1, 0.2, 0.4]
    d = [abs(lipschitz_modulus_probe(fn.softmax(), m, N, a, e, 0.4, v, 50_000, s).delta.value) for e in eps]
    slope = stats.linregress(np.log(eps), np.log(d)).slope
    assert slope == pytest.approx(1.0, abs=0.2)


def test_smoothing_sweep_on_sup_norm():
    # the signed gap changes sign along the sweep, so the exponent is fitted
    # on the coupling majorant that bounds it
    taus = [0.01, 0.04, 0.16, 0.64]
    cs = [smoothing_error_check(fn.sup_norm(), 16, RAD, t, 20_000, SeededStream(16).child(k)) for k, t in enumerate(taus)]
    assert all(c.ordered for c in cs)
    x = -np.expm1(-np.array(taus))
    slope = stats.linregress(np.log(x), np.log([c.majorant.value for c in cs])).slope
    assert slope == pytest.approx(0.5, abs=0.1)
    c_fit = max(abs(c.gap.value) / c.scale for c in cs)
    assert all(abs(c.gap.value) <= c_fit * c.scale for c in cs) and c_fit < 1


def test_semigroup_and_invariance():
    from donsker_lab.paths import sample_walks

    F = fn.softmax()
    x = GridPath([0.0, 0.4, -0.1, 0.6])
    s = SeededStream(17)
    direct = ou_apply(F, x, 0.7, 100_000, s.child(1))
    # P_0.3 (P_0.4 F)(x): outer draws, inner Monte Carlo per outer point
    t = OUTime(0.3)
    outer = sample_walks(3, GAUSS, 400, s.child(2))
    inner = [ou_apply(F, GridPath(t.decay * x.values + t.beta * y), 0.4, 2000, s.child(3, i)).value for i, y in enumerate(outer)]
    nested = np.mean(inner)
    se = math.hypot(direct.se, np.std(inner, ddof=1) / math.sqrt(len(inner)))
    # the spread of the inner estimates already carries their own noise
    assert abs(nested - direct.value) <= 3 * se
    # invariance of the Gaussian law: E P_tau F(B) = E F(B)
    B = sample_walks(3, GAUSS, 200_000, s.child(4))
    Y = sample_walks(3, GAUSS, 200_000, s.child(5))
    t = OUTime(0.5)
    a = F.evaluate(t.decay * B + t.beta * Y)
    b = F.evaluate(sample_walks(3, GAUSS, 200_000, s.child(6)))
    assert abs(a.mean() - b.mean()) <= 3 * math.hypot(a.std(), b.std()) / math.sqrt(a.size)


def test_generator_polynomial_oracles():
    # L P_tau x(1)^4 has mean 4 e^{-4 tau} (3 - E S(1)^4); E S(1)^4 = 2 for m = 2
    quartic = fn.PathFunctional("quartic", lambda v: v[:, -1, 0] ** 4, float("inf"))
    for tau in (0.2, 0.8):
        est = generator_at(quartic, 2, 2, RAD, tau, 200_000, SeededStream(18))
        assert est.within(4 * math.exp(-4 * tau))
        assert generator_at(fn.square_endpoint(), 2, 2, RAD, tau, 100_000, SeededStream(19)).within(0.0)
    t1, t2 = taylor_decomposition_terms(fn.square_endpoint(), 2, 2, RAD, 0.4, 50_000, SeededStream(20))
    # both terms vanish identically for a quadratic; only roundoff remains
    assert abs(t1.value + t2.value) <= 3 * math.hypot(t1.se, t2.se) + 1e-12


def test_two_copy_on_random_triples():
    g = np.random.default_rng(21)
    lib = fn.smooth_library()
    for k in range(5):
        F = lib[k]
        m = int(g.integers(2, 6))
        x = GridPath(np.concatenate([[0.0], np.cumsum(g.standard_normal(m))]) / math.sqrt(m))
        h = basis_h(BasisIndex(1, int(g.integers(0, m)), m))
        tau = float(g.uniform(0.2, 1.5))
        a = second_deriv_two_copy(F, x, tau, h, 100_000, SeededStream(22).child(k, 1))
        b = ou_derivative(F, x, tau, 2, h, 100_000, SeededStream(22).child(k, 2))
        assert abs(a.value - b.value) <= 3 * combined_se(a, b), F.tag
