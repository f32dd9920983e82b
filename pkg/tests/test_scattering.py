"""Scattering model: modal basis, port blocks, resolvent, and composition.

Oracles here are independent of the implementation: small cases are worked
out by hand as literal matrices or scalar formulas, and larger cases are
checked against direct dense linear algebra (`np.linalg.inv`) composed in a
different association order than the library uses.
"""

import numpy as np
import pytest

from riscouple.core import (
    ChannelSample,
    DimensionError,
    RisPhaseConfig,
    SingularResolventError,
)
from riscouple.scattering import (
    assemble_scattering,
    build_dft_kronecker,
    effective_channel,
    effective_reflection,
    losslessness_residual,
    make_design,
    neumann_partial_sum,
    symmetry_residual,
)


def _mirrored_design(m, seed=0, peak=1.0):
    """Random mirror-symmetric design with |sigma_aa| <= peak on the circle."""
    rng = np.random.default_rng(seed)
    half = rng.uniform(-peak, peak, size=m // 2)
    sigma_aa = np.concatenate([half, half[::-1]])
    sigma_ab = np.sqrt(1.0 - sigma_aa**2)
    return make_design(sigma_aa, sigma_ab)


def _phases(m, seed=0):
    rng = np.random.default_rng(seed)
    return RisPhaseConfig(rng.uniform(0.0, 2.0 * np.pi, size=m))


# --------------------------------------------------------------------------
# Modal basis (two-dimensional DFT, Kronecker form)
# --------------------------------------------------------------------------

def test_basis_m1_is_scalar_one():
    u = build_dft_kronecker(1)
    assert u.shape == (1, 1)
    assert u[0, 0] == pytest.approx(1.0 + 0.0j, abs=1e-15)


def test_basis_m4_matches_hand_kronecker():
    # D2 = [[1, 1], [1, -1]]/sqrt(2); kron(D2, D2) written out by hand.
    expected = 0.5 * np.array([
        [1,  1,  1,  1],
        [1, -1,  1, -1],
        [1,  1, -1, -1],
        [1, -1, -1,  1],
    ], dtype=complex)
    assert np.allclose(build_dft_kronecker(4), expected, atol=1e-14)


def test_basis_m16_is_unitary():
    u = build_dft_kronecker(16)
    assert np.linalg.norm(u @ u.conj().T - np.eye(16)) < 1e-12


@pytest.mark.parametrize("m", [0, 3, -4])
def test_basis_rejects_non_square_counts(m):
    with pytest.raises(DimensionError):
        build_dft_kronecker(m)


# --------------------------------------------------------------------------
# Port-block assembly
# --------------------------------------------------------------------------

def test_assembly_identities_full_transmission():
    d = make_design(np.zeros(4), np.ones(4))
    s_aa, s_ab, s_ba = assemble_scattering(d)
    assert np.array_equal(s_aa, np.zeros((4, 4)))
    assert np.allclose(s_ab, np.eye(4), atol=1e-12)
    assert np.array_equal(s_ba, s_ab.T)


def test_assembly_identities_full_reflection():
    d = make_design(np.ones(4), np.zeros(4))
    s_aa, s_ab, _ = assemble_scattering(d)
    assert np.allclose(s_aa, np.eye(4), atol=1e-12)
    assert np.array_equal(s_ab, np.zeros((4, 4)))


def test_random_design_conserves_energy():
    d = _mirrored_design(16, seed=3)
    assert losslessness_residual(d) < 1e-10


def test_symmetry_residual_is_zero_for_zero_coupling():
    d = make_design(np.zeros(4), np.ones(4))
    assert symmetry_residual(d) == 0.0


# --------------------------------------------------------------------------
# Composite reflection operator
# --------------------------------------------------------------------------

def test_zero_coupling_reflection_is_exactly_the_phase_diagonal():
    d = make_design(np.zeros(9), np.ones(9))
    cfg = _phases(9, seed=1)
    phi = effective_reflection(d, cfg)
    assert np.array_equal(phi, np.diag(cfg.load_diagonal()))


def test_scalar_reflection_matches_hand_formula():
    # One element: Phi = 1 / (exp(-j theta) - sigma_aa).
    d = make_design([0.6], [0.8])
    theta = 0.7
    phi = effective_reflection(d, RisPhaseConfig(np.array([theta])))
    expected = 1.0 / (np.exp(-1j * theta) - 0.6)
    assert abs(phi[0, 0] - expected) < 1e-12


def test_reflection_satisfies_resolvent_identity():
    d = _mirrored_design(16, seed=5)
    cfg = _phases(16, seed=6)
    phi = effective_reflection(d, cfg)
    ups = cfg.load_diagonal()
    s_aa, _, _ = assemble_scattering(d)
    lhs = (np.diag(ups.conj()) - s_aa) @ phi
    assert np.linalg.norm(lhs - np.eye(16)) < 1e-10


def test_reflection_raises_on_singular_resolvent():
    d = make_design(np.ones(4), np.zeros(4))
    with pytest.raises(SingularResolventError):
        effective_reflection(d, RisPhaseConfig(np.zeros(4)))


def test_reflection_rejects_element_count_mismatch():
    d = make_design(np.zeros(4), np.ones(4))
    with pytest.raises(DimensionError):
        effective_reflection(d, RisPhaseConfig(np.zeros(9)))


# --------------------------------------------------------------------------
# Multiple-bounce partial sums
# --------------------------------------------------------------------------

def test_partial_sum_order_zero_is_the_phase_diagonal():
    d = _mirrored_design(4, seed=7, peak=0.5)
    cfg = _phases(4, seed=8)
    acc = neumann_partial_sum(d, cfg, 0)
    assert np.array_equal(acc, np.diag(cfg.load_diagonal()))


def test_partial_sum_order_one_matches_explicit_double_bounce():
    d = _mirrored_design(4, seed=9, peak=0.5)
    cfg = _phases(4, seed=10)
    ups_mat = np.diag(cfg.load_diagonal())
    s_aa, _, _ = assemble_scattering(d)
    expected = ups_mat + ups_mat @ s_aa @ ups_mat
    assert np.allclose(neumann_partial_sum(d, cfg, 1), expected, atol=1e-12)


def test_partial_sum_converges_to_direct_solve():
    d = _mirrored_design(16, seed=11, peak=0.5)
    cfg = _phases(16, seed=12)
    phi = effective_reflection(d, cfg)
    errs = [np.linalg.norm(phi - neumann_partial_sum(d, cfg, order))
            for order in (2, 8, 40)]
    assert errs[1] < errs[0]
    assert errs[2] < 1e-9


def test_partial_sum_rejects_negative_order():
    d = _mirrored_design(4, seed=13)
    with pytest.raises(DimensionError):
        neumann_partial_sum(d, _phases(4), -1)


# --------------------------------------------------------------------------
# End-to-end channel composition
# --------------------------------------------------------------------------

def _random_channels(m, n, k, seed=20):
    rng = np.random.default_rng(seed)
    shape = dict(h_bs_ris=(m, n), h_ris_users=(m, k))
    draws = {name: (rng.standard_normal(s) + 1j * rng.standard_normal(s))
             / np.sqrt(2.0) for name, s in shape.items()}
    return ChannelSample(**draws)


def test_zero_coupling_reduces_to_cascade_through_phase_diagonal():
    m, n, k = 16, 8, 3
    d = make_design(np.zeros(m), np.ones(m))
    cfg = _phases(m, seed=21)
    ch = _random_channels(m, n, k, seed=22)
    got = effective_channel(d, cfg, ch).matrix
    expected = ch.h_ris_users.conj().T @ np.diag(cfg.load_diagonal()) @ ch.h_bs_ris
    assert np.linalg.norm(got - expected) < 1e-12 * max(1.0, np.linalg.norm(expected))


def test_composition_matches_independent_inverse_grouping():
    m, n, k = 16, 8, 3
    d = _mirrored_design(m, seed=23)
    cfg = _phases(m, seed=24)
    ch = _random_channels(m, n, k, seed=25)
    s_aa, s_ab, _ = assemble_scattering(d)
    ups = cfg.load_diagonal()
    phi = np.linalg.inv(np.diag(ups.conj()) - s_aa)
    # deliberately grouped right-to-left, unlike the library
    expected = ch.h_ris_users.conj().T @ (s_ab.T @ (phi @ (s_ab @ ch.h_bs_ris)))
    got = effective_channel(d, cfg, ch).matrix
    assert np.linalg.norm(got - expected) < 1e-10 * max(1.0, np.linalg.norm(expected))


def test_composition_is_linear_in_each_channel_leg():
    m, n, k = 4, 2, 1
    d = _mirrored_design(m, seed=26)
    cfg = _phases(m, seed=27)
    ch = _random_channels(m, n, k, seed=28)
    base = effective_channel(d, cfg, ch).matrix

    doubled = ChannelSample(h_bs_ris=2.0 * ch.h_bs_ris,
                            h_ris_users=ch.h_ris_users)
    assert np.allclose(effective_channel(d, cfg, doubled).matrix,
                       2.0 * base, atol=1e-12)

    alpha = 2.0 + 1.0j
    scaled = ChannelSample(h_bs_ris=ch.h_bs_ris,
                           h_ris_users=alpha * ch.h_ris_users)
    assert np.allclose(effective_channel(d, cfg, scaled).matrix,
                       np.conj(alpha) * base, atol=1e-12)


def test_scalar_chain_matches_hand_formula():
    # M=1, N=2, K=1: value = conj(h_ru) * sigma_ab^2 * Phi * h_br row.
    sigma_aa, sigma_ab, theta = 0.6, 0.8, 1.1
    d = make_design([sigma_aa], [sigma_ab])
    cfg = RisPhaseConfig(np.array([theta]))
    h_br = np.array([[0.3 - 0.4j, 1.2 + 0.5j]])
    h_ru = np.array([[0.7 + 0.2j]])
    ch = ChannelSample(h_bs_ris=h_br, h_ris_users=h_ru)
    phi = 1.0 / (np.exp(-1j * theta) - sigma_aa)
    expected = np.conj(h_ru[0, 0]) * sigma_ab**2 * phi * h_br
    got = effective_channel(d, cfg, ch).matrix
    assert np.allclose(got, expected, atol=1e-12)


def test_composition_rejects_element_count_mismatch():
    d = make_design(np.zeros(4), np.ones(4))
    ch = _random_channels(16, 8, 3, seed=30)
    with pytest.raises(DimensionError):
        effective_channel(d, _phases(4), ch)


def test_composition_propagates_singular_resolvent():
    m = 4
    d = make_design(np.ones(m), np.zeros(m))
    ch = _random_channels(m, 2, 1, seed=31)
    with pytest.raises(SingularResolventError):
        effective_channel(d, RisPhaseConfig(np.zeros(m)), ch)
