import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newtonres.asymptotics import (
    bound_samples,
    check_localization,
    fit_eps_grid,
    fit_expansion,
    localization_constants,
    mk0_inverse_bound,
    predict_first_order,
)
from newtonres.errors import ConfigurationError, DomainError, HypothesisNotMet, PreconditionError
from newtonres.resonances import ResonanceResult, resonance_set
from newtonres.spectral import Cluster, SpectralData


def synthetic(lams, vectors=None, weights=None):
    lams = np.asarray(lams, dtype=float)
    n = len(lams)
    E = np.eye(n) if vectors is None else np.asarray(vectors, dtype=float)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    clusters, start = [], 0
    for i in range(1, n + 1):
        if i == n or lams[i - 1] - lams[i] >= 1e-2 * lams[i - 1]:
            clusters.append(Cluster(start, i, float(np.mean(lams[start:i]))))
            start = i
    return SpectralData(lams, E, w, "synthetic", True, tuple(clusters))


class _Dom:
    def __init__(self, volume, diameter):
        self.total_volume = volume
        self.diameter = diameter


def test_bound_at_zero(ball8_spec):
    lhs, rhs = mk0_inverse_bound(ball8_spec, 0.0)
    assert lhs == 1.0 and rhs == pytest.approx(np.sqrt(2))


def test_bound_on_diagonal_direction(ball8_spec):
    k2 = (1 + 1j) / ball8_spec.lambda1
    lhs, rhs = mk0_inverse_bound(ball8_spec, np.sqrt(k2))
    assert lhs <= np.sqrt(2) and lhs <= rhs


def test_bound_midway_between_two_points(ball8_spec):
    mu1 = 1 / ball8_spec.clusters[0].value
    mu2 = 1 / ball8_spec.clusters[1].value
    x = 0.5 * (mu1 + mu2)
    lhs, rhs = mk0_inverse_bound(ball8_spec, np.sqrt(x))
    # the two neighbouring spectral points dominate the sup
    assert lhs == pytest.approx(max(mu1 / abs(mu1 - x), mu2 / abs(mu2 - x)), rel=1e-12)
    assert rhs == pytest.approx(np.sqrt(2) * x / (mu2 - x), rel=1e-12)
    # lhs / rhs = mu2 / (sqrt2 x) > 1 here: a real-axis counterexample to the stated bound
    assert lhs / rhs == pytest.approx(mu2 / (np.sqrt(2) * x), rel=1e-12)
    assert lhs > rhs


def test_bound_matches_matrix_norm(ball8, ball8_spec):
    from newtonres.operators import assemble_characteristic

    k = 1.2 - 0.7j
    M = assemble_characteristic(ball8, k, 0.0).weighted()
    direct = 1 / np.linalg.svd(M, compute_uv=False)[-1]
    assert mk0_inverse_bound(ball8_spec, k)[0] == pytest.approx(direct, rel=1e-9)


def test_bound_on_spectrum_rejected(ball8_spec):
    with pytest.raises(PreconditionError):
        mk0_inverse_bound(ball8_spec, 1 / np.sqrt(ball8_spec.lambda1))


def test_bounds_that_do_hold(ball8_spec):
    """lhs <= sqrt2 when Re k^2 <= |Im k^2|, and lhs <= 1 + |k^2| / dist everywhere."""
    pts = ball8_spec.reciprocal_points()
    for k in bound_samples(ball8_spec, 400, seed=3):
        lhs, _ = mk0_inverse_bound(ball8_spec, k)
        k2 = k * k
        assert lhs <= 1 + abs(k2) / np.min(np.abs(pts - k2)) + 1e-12
        if k2.real <= abs(k2.imag):
            assert lhs <= np.sqrt(2) * (1 + 1e-12)


def test_bound_samples_region(ball8_spec):
    ks = bound_samples(ball8_spec, 50, seed=0)
    pts = ball8_spec.reciprocal_points()
    assert len(ks) == 50
    assert np.all(np.abs(ks**2) <= 2 / ball8_spec.lambda1 + 1e-12)
    assert all(np.min(np.abs(pts - k * k)) >= 1e-3 for k in ks)
    assert np.array_equal(ks, bound_samples(ball8_spec, 50, seed=0))


def test_constants_arithmetic():
    sp = synthetic([0.4, 0.1])
    c = localization_constants(sp, _Dom(4.0, 2.0), 3.0)
    assert c.r_circ == pytest.approx(3.75) and c.r_plus == pytest.approx(6.75)
    sq = np.sqrt(6.75)
    expected = np.sqrt(2) * (np.sqrt(4.0 / (4 * np.pi)) * sq * np.exp(sq * 2.0) + 0.4) * 6.75**2
    assert c.c_r == pytest.approx(expected, rel=1e-14)
    assert c.eps_max == pytest.approx(c.r_circ / c.c_r, rel=1e-15)


def test_constants_errors():
    with pytest.raises(PreconditionError):
        localization_constants(synthetic([0.4, 0.1]), _Dom(1.0, 1.0), 2.5)
    with pytest.raises(DomainError):
        localization_constants(synthetic([0.4]), _Dom(1.0, 1.0), 3.0)


def test_constants_on_ball(ball8, ball8_spec):
    c = localization_constants(ball8_spec, ball8, 1.2 / ball8_spec.lambda1)
    assert np.isfinite(c.c_r) and c.c_r > np.pi and c.eps_max > 0
    assert c.volume == ball8.total_volume and c.diameter == 2.0


def test_localization_zero_contrast(ball8, ball8_spec):
    c = localization_constants(ball8_spec, ball8, 1.05 / ball8_spec.clusters[1].value)
    res = resonance_set(ball8, 0.0, c.r, ball8_spec)
    rep = check_localization(res, c, ball8_spec, 0.0)
    assert rep.all_pass and len(rep.entries) == 2
    assert max(e.distance for e in rep.entries) < 1e-10 * 10


def test_localization_at_eps_max(ball8, ball8_spec):
    c = localization_constants(ball8_spec, ball8, 1.2 / ball8_spec.lambda1)
    eps = c.eps_max
    rep = check_localization(resonance_set(ball8, eps, c.r, ball8_spec), c, ball8_spec, eps)
    assert rep.all_pass and rep.entries
    assert rep.to_dict()["all_pass"] is True


def test_localization_planted_violation_and_skip(ball8_spec):
    c = localization_constants(ball8_spec, _Dom(4.0, 2.0), 1.2 / ball8_spec.lambda1)
    eps = 0.5 * c.eps_max
    planted = 1 / ball8_spec.lambda1 + 2 * c.c_r * eps
    fake = ResonanceResult(np.sqrt(planted), ball8_spec.lambda1, np.zeros(1), 0.0, 1, "newton_track", eps)
    rep = check_localization([fake], c, ball8_spec, eps)
    assert not rep.all_pass and rep.entries[0].n_discs == 0
    with pytest.raises(HypothesisNotMet):
        check_localization([fake], c, ball8_spec, 2 * c.eps_max)


def test_prediction_ground_mode(ball8_spec):
    (p,) = predict_first_order(ball8_spec, 0)
    assert p.first_coeff.real == 0 and p.first_coeff.imag < 0
    assert p.zeroth == pytest.approx(1 / ball8_spec.lambda1)
    # discrete coefficient approaches -i pi (exact value for the unit ball)
    assert abs(p.first_coeff + 1j * np.pi) / np.pi < 0.03


def test_prediction_dipole_cluster_vanishes(ball8_spec):
    preds = predict_first_order(ball8_spec, 1)
    assert len(preds) == 3
    assert all(abs(p.first_coeff) < 1e-10 for p in preds)


def test_prediction_homogeneity():
    base = predict_first_order(synthetic([0.4, 0.1], weights=[2.0, 1.0]), 0)[0]
    scaled = predict_first_order(synthetic([0.8, 0.2], weights=[2.0, 1.0]), 0)[0]
    assert scaled.first_coeff / base.first_coeff == pytest.approx(2.0**-2.5, rel=1e-14)


def test_prediction_gauge_concentrates_coupling():
    # a doubly degenerate cluster whose basis mixes coupled and uncoupled directions
    th = 0.3
    R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1.0]])
    sp = synthetic([0.5, 0.5, 0.1], vectors=R, weights=[1.0, 2.0, 1.0])
    preds = predict_first_order(sp, 0)
    couplings = sorted(p.coupling_sq for p in preds)
    total = sum((R[:, j] @ sp.weights) ** 2 for j in range(2))
    assert couplings[-1] == pytest.approx(total) and couplings[0] == pytest.approx(0, abs=1e-14)
    assert sum(p.cluster_summed for p in preds) == 1


def test_fit_exact_linear():
    fit = fit_expansion([(e, 2.5 - 0.3j * e) for e in (0.01, 0.02, 0.04)])
    assert abs(fit.zeroth - 2.5) < 1e-12 and abs(fit.first + 0.3j) < 1e-12
    assert max(fit.remainders) < 1e-12


def test_fit_quadratic_order():
    a, b, c = 2.0, -1j, 0.7 - 0.2j
    data = [(e, a + b * e + c * e * e) for e in (0.01, 0.02, 0.04)]
    zeroth, first, order = fit_expansion(data)
    assert abs(order - 2) < 0.2
    assert abs(first - b) < 1e-10 and abs(zeroth - a) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_fit_recovers_quadratic(a, b, br, bi):
    c = complex(br, bi)
    data = [(e, a + 1j * b * e + c * e * e) for e in (0.01, 0.02, 0.04, 0.08)]
    fit = fit_expansion(data, reference=(a, 1j * b))
    assert abs(fit.first - 1j * b) < 1e-8 and abs(fit.second - c) < 1e-6
    if abs(c) > 1e-3:
        assert abs(fit.remainder_order - 2) < 1e-6


def test_fit_input_errors():
    with pytest.raises(ConfigurationError):
        fit_expansion([(0.01, 1.0), (0.01, 1.0), (0.02, 1.0)])
    with pytest.raises(HypothesisNotMet):
        fit_expansion([(e, 1.0) for e in (0.01, 0.02, 0.04)], eps_max=0.03)


def test_fit_grid():
    assert fit_eps_grid() == (0.01, 0.02, 0.04)
    assert fit_eps_grid(0.02) == (0.0025, 0.005, 0.01)
