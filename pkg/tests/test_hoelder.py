"""Hoelder seminorm tests: brute-force oracles, the two-sided comparison
between the exhaustive and dyadic estimators, and witness audits."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspde.hoelder import (
    C2_EQUIVALENCE,
    c1alpha_seminorm,
    centered_gradient,
    parabolic_distance,
    seminorm_dyadic,
    seminorm_naive,
)
from qspde.spectral_noise import Field


def random_field(rng, n_t, n_x, d, dt):
    return Field(rng.standard_normal((n_t,) + (n_x,) * d), dt=dt)


# ---------------------------------------------------------------------------
# parabolic distance


def test_distance_trivia():
    assert parabolic_distance((0.3, (0.2,)), (0.3, (0.2,))) == 0.0
    assert parabolic_distance((0.0, (0.0,)), (1.0, (0.0,))) == 1.0
    assert parabolic_distance((0.5, (0.1,)), (0.5, (0.3,))) == pytest.approx(0.2)
    assert parabolic_distance((0.25, (0.5, 0.0)), (0.0, (0.0, 0.0))) == pytest.approx(1.0)


def test_distance_symmetric_and_wraps():
    a, b = (0.2, (0.95,)), (0.7, (0.05,))
    assert parabolic_distance(a, b) == parabolic_distance(b, a)
    assert parabolic_distance((0.0, (0.95,)), (0.0, (0.05,))) == pytest.approx(0.1)


def test_distance_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        parabolic_distance((0.0, (0.1,)), (0.0, (0.1, 0.2)))


# ---------------------------------------------------------------------------
# exhaustive estimator


def test_naive_constant_field_is_zero():
    f = Field(np.full((3, 8), 2.5), dt=1 / 16)
    rep = seminorm_naive(f, 0.3)
    assert rep.naive == 0.0


def test_naive_single_spike_closed_form():
    # nearest grid neighbours sit at distance min(dx, sqrt(dt)) from the
    # spike; with dx = sqrt(dt) = 0.25 the sup quotient is |c| / 0.25^alpha
    vals = np.zeros((3, 4))
    vals[1, 2] = -1.3
    f = Field(vals, dt=1 / 16)
    rep = seminorm_naive(f, 0.4)
    assert rep.naive == pytest.approx(1.3 / 0.25**0.4, rel=1e-12)


def test_naive_matches_triple_loop_oracle():
    rng = np.random.default_rng(7)
    f = random_field(rng, 5, 5, 1, dt=1 / 32)
    alpha = 0.3
    rep = seminorm_naive(f, alpha)

    best = 0.0
    times = f.times
    xs = np.arange(5) / 5
    for i_t in range(5):
        for i_x in range(5):
            for j_t in range(5):
                for j_x in range(5):
                    if (i_t, i_x) >= (j_t, j_x):
                        continue
                    dx = abs(xs[i_x] - xs[j_x]) % 1.0
                    dx = min(dx, 1.0 - dx)
                    dist = math.sqrt(abs(times[i_t] - times[j_t])) + dx
                    if dist == 0.0:
                        continue
                    q = abs(f.values[i_t, i_x] - f.values[j_t, j_x]) / dist**alpha
                    best = max(best, q)
    assert rep.naive == pytest.approx(best, rel=1e-12)


def test_naive_witness_reproduces_value():
    rng = np.random.default_rng(8)
    f = random_field(rng, 3, 8, 1, dt=1 / 64)
    rep = seminorm_naive(f, 0.45)
    (t1, x1), (t0, x0) = rep.pair
    i1 = int(round(t1 / f.dt)), int(round(x1[0] / f.dx))
    i0 = int(round(t0 / f.dt)), int(round(x0[0] / f.dx))
    gap = abs(f.values[i1] - f.values[i0])
    dist = parabolic_distance((t1, x1), (t0, x0))
    assert gap / dist**0.45 == pytest.approx(rep.naive, rel=1e-14)


def test_naive_budget_guard_mentions_dyadic_alternative():
    f = Field(np.zeros((30, 1024)), dt=1e-4)
    with pytest.raises(ValueError, match="dyadic"):
        seminorm_naive(f, 0.3)


def test_naive_rejects_bad_alpha():
    f = Field(np.zeros((3, 4)), dt=1 / 16)
    for alpha in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            seminorm_naive(f, alpha)


# ---------------------------------------------------------------------------
# dyadic estimator


def test_dyadic_constant_field_is_zero():
    f = Field(np.full((5, 8), -0.7), dt=1 / 16)
    rep = seminorm_dyadic(f, 0.3)
    assert rep.theta == 0.0
    assert rep.pair is None


def test_dyadic_two_sided_comparison_d1():
    rng = np.random.default_rng(11)
    for alpha in (0.3, 0.7):
        for _ in range(5):
            f = random_field(rng, 5, 8, 1, dt=1 / 16)
            th = seminorm_dyadic(f, alpha).theta
            nv = seminorm_naive(f, alpha).naive
            chain = (np.sqrt(3.0) + 1.0) ** alpha
            assert th <= chain * nv * (1 + 1e-12)
            assert nv <= C2_EQUIVALENCE * th * (1 + 1e-12)


def test_dyadic_two_sided_comparison_d2():
    rng = np.random.default_rng(12)
    for _ in range(5):
        f = random_field(rng, 3, 4, 2, dt=1 / 16)
        th = seminorm_dyadic(f, 0.3).theta
        nv = seminorm_naive(f, 0.3).naive
        chain = (np.sqrt(3.0) + np.sqrt(2.0)) ** 0.3
        assert th <= chain * nv * (1 + 1e-12)
        assert nv <= C2_EQUIVALENCE * th * (1 + 1e-12)


def test_dyadic_witness_reproduces_value():
    rng = np.random.default_rng(13)
    f = random_field(rng, 9, 16, 1, dt=1 / 256)
    rep = seminorm_dyadic(f, 0.4)
    (t1, x1), (t0, x0) = rep.pair
    i1 = int(round(t1 / f.dt)), int(round(x1[0] / f.dx))
    i0 = int(round(t0 / f.dt)), int(round(x0[0] / f.dx))
    gap = float(abs(f.values[i1] - f.values[i0]))
    assert gap * rep.level_R**-0.4 == rep.theta


def test_dyadic_rejects_non_dyadic_grids():
    with pytest.raises(ValueError):
        seminorm_dyadic(Field(np.zeros((5, 5)), dt=1 / 16), 0.3)  # n_x not 2^k
    with pytest.raises(ValueError):
        seminorm_dyadic(Field(np.zeros((4, 8)), dt=1 / 16), 0.3)  # n_t-1 not 2^k
    with pytest.raises(ValueError, match="scale"):
        seminorm_dyadic(Field(np.zeros((5, 8)), dt=1 / 10), 0.3)  # dt misaligned


def test_dyadic_scaling_by_power_of_two_exact():
    rng = np.random.default_rng(14)
    f = random_field(rng, 5, 8, 1, dt=1 / 16)
    g = Field(4.0 * f.values, dt=f.dt)
    assert seminorm_dyadic(g, 0.3).theta == 4.0 * seminorm_dyadic(f, 0.3).theta
    assert seminorm_naive(g, 0.3).naive == 4.0 * seminorm_naive(f, 0.3).naive


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-10, 10, allow_nan=False))
def test_shift_invariance(shift):
    rng = np.random.default_rng(15)
    f = random_field(rng, 5, 8, 1, dt=1 / 16)
    g = Field(f.values + shift, dt=f.dt)
    assert seminorm_dyadic(g, 0.3).theta == pytest.approx(
        seminorm_dyadic(f, 0.3).theta, rel=1e-10
    )


def test_naive_monotone_in_alpha_on_short_window():
    # all pairwise distances stay <= 1 when T <= 1/4 in d=1, so the
    # quotient grows with alpha pointwise
    rng = np.random.default_rng(16)
    f = random_field(rng, 5, 8, 1, dt=1 / 16)
    n1 = seminorm_naive(f, 0.2).naive
    n2 = seminorm_naive(f, 0.5).naive
    n3 = seminorm_naive(f, 0.8).naive
    assert n1 <= n2 * (1 + 1e-12) and n2 <= n3 * (1 + 1e-12)


def test_csv_row_and_header_shape():
    f = Field(np.arange(12.0).reshape(3, 4), dt=1 / 16)
    rep = seminorm_naive(f, 0.3)
    row = rep.to_csv_row()
    assert len(row.split(",")) == len(rep.csv_header().split(","))
    assert rep.csv_header().startswith("alpha,naive,theta")


# ---------------------------------------------------------------------------
# gradients and the composite norm


def test_centered_gradient_of_sine():
    n_x = 32
    x = np.arange(n_x) / n_x
    f = Field(np.sin(2 * np.pi * x)[None, :], dt=1.0)
    g = centered_gradient(f)
    h = 1.0 / n_x
    expected = np.cos(2 * np.pi * x) * np.sin(2 * np.pi * h) / h
    assert np.allclose(g[0, 0], expected, atol=1e-12)


def test_centered_gradient_shape_d2():
    f = Field(np.zeros((3, 8, 8)), dt=0.25)
    assert centered_gradient(f).shape == (3, 2, 8, 8)


def test_c1alpha_zero_field():
    f = Field(np.zeros((5, 4)), dt=0.25)
    gw = centered_gradient(f)
    assert c1alpha_seminorm(f, gw, 0.3) == 0.0


def test_c1alpha_linear_in_time_is_unit():
    times = np.arange(5) * 0.25
    vals = np.broadcast_to(times[:, None], (5, 4)).copy()
    f = Field(vals, dt=0.25)
    gw = centered_gradient(f)
    # gradient part vanishes; temporal part peaks at the full window,
    # |t - t'|^((1-alpha)/2) = 1 at |t - t'| = 1
    assert c1alpha_seminorm(f, gw, 0.3) == 1.0


def test_c1alpha_rejects_mismatched_gradient():
    f = Field(np.zeros((5, 4)), dt=0.25)
    with pytest.raises(ValueError):
        c1alpha_seminorm(f, np.zeros((5, 2, 4)), 0.3)
