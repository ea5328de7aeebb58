"""Forward-integral estimates against Ito sums."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insiderlab.enlargement import InfoDriftField
from insiderlab.forward_integral import (
    Integrand,
    compare_forward_ito,
    forward_estimate,
    ito_left_sum,
)
from insiderlab.paths import constant_weight, make_grid, sample_brownian


def const_integrand(grid, c=1.0, adapted=True):
    return Integrand(grid, np.full(grid.n_nodes, c), adapted=adapted)


def test_zero_integrand_all_eps():
    g = make_grid(0, 1, 64)
    B = sample_brownian(g, 1)
    v = const_integrand(g, 0.0)
    for eps in (g.dt, 4 * g.dt, 16 * g.dt):
        assert forward_estimate(v, B, eps) == 0.0


def test_unit_integrand_at_dt_telescopes():
    g = make_grid(0, 1, 128)
    B = sample_brownian(g, 2)
    est = forward_estimate(const_integrand(g), B, g.dt)
    assert est == pytest.approx(B.values[-1], abs=1e-13)


def test_unit_integrand_coarse_eps_window_bound():
    # forward with eps = k dt equals B_T - mean(B_0..B_{k-1}); the deviation
    # from B_T is bounded by the oscillation over the initial eps-window
    g = make_grid(0, 1, 256)
    B = sample_brownian(g, 3)
    v = const_integrand(g)
    for k in (2, 8, 32):
        dev = abs(forward_estimate(v, B, k * g.dt) - B.values[-1])
        osc = np.max(np.abs(B.values[:k]))
        assert dev <= osc + 1e-12


def test_ito_left_sum_basics():
    g = make_grid(0, 1, 64)
    B = sample_brownian(g, 4)
    assert ito_left_sum(const_integrand(g), B) == pytest.approx(
        B.values[-1], abs=1e-13
    )
    assert ito_left_sum(const_integrand(g, 2.5), B) == pytest.approx(
        2.5 * B.values[-1], abs=1e-12
    )


def test_ito_window_indicator():
    g = make_grid(0, 1, 64)
    B = sample_brownian(g, 5)
    lo, hi = g.index_of(0.25), g.index_of(0.5)
    vals = np.zeros(g.n_nodes)
    vals[lo:hi] = 1.0  # left-point indicator of (0.25, 0.5]
    v = Integrand(g, vals)
    assert ito_left_sum(v, B) == pytest.approx(
        B.values[hi] - B.values[lo], abs=1e-13
    )


def test_adapted_agreement_is_bit_exact():
    # eps = dt reproduces the Ito sum bit for bit, for v = B and v = alpha
    g = make_grid(0, 2, 512)
    B = sample_brownian(g, 6)
    Br = B.restrict(1.0)
    vB = Integrand(Br.grid, Br.values.copy())
    assert forward_estimate(vB, Br, Br.grid.dt) == ito_left_sum(vB, Br)

    f = InfoDriftField(constant_weight(1.0), B, horizon=1.0)
    va = Integrand(Br.grid, f.alpha, adapted=True)
    assert forward_estimate(va, Br, Br.grid.dt) == ito_left_sum(va, Br)


def test_brownian_integrand_ito_formula_oracle():
    # int_0^T B dB = (B_T^2 - T)/2; at n = 2^14 the mean absolute deviation
    # over 1e3 paths stays within the 5*sqrt(dt) discretization band
    g = make_grid(0, 1, 2**14)
    devs = np.empty(1000)
    for s in range(1000):
        B = sample_brownian(g, s)
        v = Integrand(g, B.values.copy())
        target = (B.values[-1] ** 2 - 1.0) / 2.0
        devs[s] = abs(forward_estimate(v, B, g.dt) - target)
    assert devs.mean() < 5.0 * math.sqrt(g.dt)


def test_eps_ladder_median_decreases():
    g = make_grid(0, 1, 2**14)
    ladder = [8 * g.dt, 4 * g.dt, 2 * g.dt, g.dt]
    devs = np.empty((1000, 4))
    for s in range(1000):
        B = sample_brownian(g, 10_000 + s)
        v = Integrand(g, B.values.copy())
        target = (B.values[-1] ** 2 - 1.0) / 2.0
        for j, eps in enumerate(ladder):
            devs[s, j] = abs(forward_estimate(v, B, eps) - target)
    med = np.median(devs, axis=0)
    assert np.all(np.diff(med) < 0.0), f"medians not decreasing: {med}"


def test_path_constant_scaling():
    g = make_grid(0, 1, 256)
    B = sample_brownian(g, 7)
    v = Integrand(g, B.values.copy())
    scaled = Integrand(g, 2.0 * v.values)
    for eps in (g.dt, 4 * g.dt):
        # powers of two scale without rounding, so equality is exact
        assert forward_estimate(scaled, B, eps) == 2.0 * forward_estimate(v, B, eps)
    gen = Integrand(g, 1.7 * v.values)
    assert forward_estimate(gen, B, g.dt) == pytest.approx(
        1.7 * forward_estimate(v, B, g.dt), rel=1e-12
    )


@given(
    a=st.floats(-3, 3, allow_nan=False),
    c=st.floats(-3, 3, allow_nan=False),
    seed=st.integers(0, 500),
)
@settings(max_examples=40, deadline=None)
def test_linearity(a, c, seed):
    g = make_grid(0, 1, 32)
    B = sample_brownian(g, seed)
    rng = np.random.default_rng(seed + 1)
    v = Integrand(g, rng.standard_normal(g.n_nodes))
    w = Integrand(g, rng.standard_normal(g.n_nodes))
    combo = Integrand(g, a * v.values + c * w.values)
    lhs = forward_estimate(combo, B, 2 * g.dt)
    rhs = a * forward_estimate(v, B, 2 * g.dt) + c * forward_estimate(w, B, 2 * g.dt)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_compare_table_and_errors():
    g = make_grid(0, 1, 64)
    B = sample_brownian(g, 8)
    v = Integrand(g, B.values.copy())
    table = compare_forward_ito(v, B, [4 * g.dt, 2 * g.dt, g.dt])
    assert len(table) == 3
    assert table[-1][1] == 0.0  # eps = dt coincides with the Ito sum
    with pytest.raises(ValueError):
        compare_forward_ito(v, B, [])


def test_eps_validation():
    g = make_grid(0, 1, 64)
    B = sample_brownian(g, 9)
    v = const_integrand(g)
    with pytest.raises(ValueError):
        forward_estimate(v, B, 1.5 * g.dt)
    with pytest.raises(ValueError):
        forward_estimate(v, B, 1.0)  # eps must stay below the horizon
    with pytest.raises(ValueError):
        forward_estimate(v, B, 0.0)


def test_grid_mismatch_rejected():
    v = const_integrand(make_grid(0, 1, 64))
    B = sample_brownian(make_grid(0, 1, 128), 0)
    with pytest.raises(ValueError):
        ito_left_sum(v, B)
