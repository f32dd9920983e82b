"""Error and rate metrics: closed forms against hand-worked cases and a
symbol-level Monte Carlo cross-check.
"""

import numpy as np
import pytest

from riscouple.core import DimensionError, Precoder, SystemParams
from riscouple.metrics import (
    MMSE_FLOOR,
    UserMetrics,
    analytic_metrics,
    mse_objective,
    simulate_symbol_mse,
)
from riscouple.scattering import EffectiveChannel


def _params(k=2, n=4, noise=0.5, power_dbm=30.0):
    return SystemParams(n_bs_antennas=n, n_users=k, n_ris_elements=16,
                        tx_power_dbm=power_dbm, noise_variance=noise)


def test_zero_precoder_gives_one_plus_scaled_noise():
    # F = 0: residual is -I, so each user's MSE is 1 + rho^2 sigma^2.
    # With rho = 2 and sigma^2 = 0.5 that is 3.0 per user, a negative rate.
    k, n = 2, 4
    h = EffectiveChannel(matrix=np.ones((k, n), dtype=complex))
    sol = Precoder(matrix=np.zeros((n, k), dtype=complex), rx_scale=2.0)
    m = analytic_metrics(h, sol, _params(k, n, noise=0.5))
    assert np.allclose(m.per_user_mmse, [3.0, 3.0], atol=1e-15)
    assert m.total_mse == pytest.approx(6.0, abs=1e-15)
    assert m.sum_rate_bits == pytest.approx(-2.0 * np.log2(3.0), abs=1e-12)
    assert not m.saturated


def test_perfect_equalization_hits_floor_and_flags_saturation():
    # H F = I with rho = 1 and no noise: raw MSE is exactly zero, reported
    # values sit at the positive floor and the result is marked saturated.
    k, n = 2, 4
    h = EffectiveChannel(matrix=np.hstack([np.eye(k), np.zeros((k, n - k))]).astype(complex))
    f = np.vstack([np.eye(k), np.zeros((n - k, k))]).astype(complex)
    sol = Precoder(matrix=f, rx_scale=1.0)
    m = analytic_metrics(h, sol, _params(k, n, noise=0.0))
    assert np.all(m.per_user_mmse == MMSE_FLOOR)
    assert m.saturated
    assert m.sum_rate_bits == pytest.approx(-k * np.log2(MMSE_FLOOR), rel=1e-12)


def test_objective_equals_unfloored_total():
    rng = np.random.default_rng(0)
    k, n = 3, 6
    h = EffectiveChannel(matrix=rng.standard_normal((k, n))
                         + 1j * rng.standard_normal((k, n)))
    sol = Precoder(matrix=(rng.standard_normal((n, k))
                           + 1j * rng.standard_normal((n, k))) * 0.1,
                   rx_scale=0.7)
    p = _params(k, n, noise=0.3)
    resid = sol.rx_scale * (h.matrix @ sol.matrix) - np.eye(k)
    by_hand = float(np.sum(np.abs(resid) ** 2) + k * sol.rx_scale**2 * 0.3)
    assert mse_objective(h, sol, p) == pytest.approx(by_hand, rel=1e-14)
    m = analytic_metrics(h, sol, p)
    assert m.total_mse == pytest.approx(by_hand, rel=1e-12)


def test_user_metrics_cross_validation():
    good = np.array([0.5, 0.25])
    UserMetrics(per_user_mmse=good, total_mse=0.75,
                sum_rate_bits=1.0 + 2.0, saturated=False)
    with pytest.raises(ValueError):
        UserMetrics(per_user_mmse=good, total_mse=0.8,
                    sum_rate_bits=3.0, saturated=False)
    with pytest.raises(ValueError):
        UserMetrics(per_user_mmse=good, total_mse=0.75,
                    sum_rate_bits=2.5, saturated=False)
    with pytest.raises(ValueError):
        UserMetrics(per_user_mmse=np.array([0.5, 0.0]), total_mse=0.5,
                    sum_rate_bits=1.0, saturated=False)


def test_precoder_channel_shape_mismatch_raises():
    h = EffectiveChannel(matrix=np.ones((2, 4), dtype=complex))
    sol = Precoder(matrix=np.ones((3, 2), dtype=complex), rx_scale=1.0)
    with pytest.raises(DimensionError):
        analytic_metrics(h, sol, _params())


# --------------------------------------------------------------------------
# Symbol-level simulation
# --------------------------------------------------------------------------

def test_simulation_is_deterministic_and_blocking_invariant():
    rng = np.random.default_rng(1)
    k, n = 2, 4
    h = EffectiveChannel(matrix=rng.standard_normal((k, n))
                         + 1j * rng.standard_normal((k, n)))
    sol = Precoder(matrix=(rng.standard_normal((n, k))
                           + 1j * rng.standard_normal((n, k))) * 0.2,
                   rx_scale=0.5)
    p = _params(k, n, noise=0.4)
    a = simulate_symbol_mse(h, sol, p, n_symbols=10_000, seed=3)
    b = simulate_symbol_mse(h, sol, p, n_symbols=10_000, seed=3)
    assert np.array_equal(a, b)
    c = simulate_symbol_mse(h, sol, p, n_symbols=10_000, seed=4)
    assert not np.array_equal(a, c)


def test_simulation_noiseless_perfect_equalizer_is_exactly_zero():
    k, n = 2, 4
    h = EffectiveChannel(matrix=np.hstack([np.eye(k), np.zeros((k, n - k))]).astype(complex))
    f = np.vstack([np.eye(k), np.zeros((n - k, k))]).astype(complex)
    sol = Precoder(matrix=f, rx_scale=1.0)
    out = simulate_symbol_mse(h, sol, _params(k, n, noise=0.0),
                              n_symbols=5_000, seed=0)
    assert np.array_equal(out, np.zeros(k))


def test_simulation_agrees_with_analytic_values():
    rng = np.random.default_rng(5)
    k, n = 2, 4
    h = EffectiveChannel(matrix=rng.standard_normal((k, n))
                         + 1j * rng.standard_normal((k, n)))
    sol = Precoder(matrix=(rng.standard_normal((n, k))
                           + 1j * rng.standard_normal((n, k))) * 0.2,
                   rx_scale=0.5)
    p = _params(k, n, noise=0.4)
    exact = analytic_metrics(h, sol, p).per_user_mmse
    n_symbols = 20_000
    sim = simulate_symbol_mse(h, sol, p, n_symbols=n_symbols, seed=7)
    # each |error|^2 has mean mmse_k and std mmse_k (exponential), so the
    # sample mean has std mmse_k / sqrt(n); allow four standard errors
    tol = 4.0 * exact / np.sqrt(n_symbols)
    assert np.all(np.abs(sim - exact) <= tol)


def test_simulation_rejects_bad_symbol_count():
    h = EffectiveChannel(matrix=np.ones((2, 4), dtype=complex))
    sol = Precoder(matrix=np.zeros((4, 2), dtype=complex), rx_scale=1.0)
    with pytest.raises(DimensionError):
        simulate_symbol_mse(h, sol, _params(), n_symbols=0, seed=0)
