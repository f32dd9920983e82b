"""Scattering-parameter algebra for the mutually coupled surface.

The surface couples its M tunable ports through a port-to-port block S_aa
and exchanges energy with free space through S_ab (and its reciprocal
transpose S_ba). Both blocks share the fixed DFT-Kronecker basis
U = V = D kron D and carry the design only in their real diagonal factors.

The composite reflection seen from space is the resolvent
Phi = (Ydiag^-1 - S_aa)^-1, where Ydiag is the diagonal of unimodular load
entries exp(1j * theta_m). Phi is always computed by a dense solve; the
truncated multiple-bounce expansion sum_l (Ydiag S_aa)^l Ydiag is provided
only as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ChannelSample,
    DimensionError,
    RisPhaseConfig,
    ScatteringDesign,
    SingularResolventError,
    _frozen,
    _isqrt_exact,
)

# Beyond this condition estimate, double precision retains fewer than four
# significant digits and any downstream result would be numerical noise.
CONDITION_LIMIT = 1e12


def build_dft_kronecker(m: int) -> np.ndarray:
    """Return the fixed basis U = D kron D for an m-element surface.

    D is the unitary sqrt(m)-point DFT matrix with entries
    exp(-2j*pi*k*l/sqrt(m)) / m^(1/4), so the Kronecker product is unitary.

    Parameters
    ----------
    m : int
        Number of surface elements; must be a perfect square.

    Raises
    ------
    DimensionError
        If m is not a positive perfect square.
    """
    if m < 1:
        raise DimensionError(f"m must be positive, got {m}")
    r = _isqrt_exact(m)
    k, l = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    d = np.exp(-2j * np.pi * k * l / r) / math.sqrt(r)
    return np.kron(d, d)


def make_design(sigma_aa, sigma_ab, *, skip_circle_check: bool = False) -> ScatteringDesign:
    """Convenience constructor building the DFT-Kronecker basis from len(sigma_aa)."""
    sigma_aa = np.asarray(sigma_aa, dtype=float)
    return ScatteringDesign(
        sigma_aa=sigma_aa,
        sigma_ab=np.asarray(sigma_ab, dtype=float),
        dft_factor=build_dft_kronecker(sigma_aa.shape[0]),
        skip_circle_check=skip_circle_check,
    )


def assemble_scattering(d: ScatteringDesign):
    """Assemble (S_aa, S_ab, S_ba) from a design.

    S_aa = U diag(sigma_aa) V^H, S_ab = U diag(sigma_ab) V^H with U = V, and
    S_ba = S_ab^T by reciprocity. The transpose is kept literally in every
    downstream expression; no symmetry of S_ab is assumed.
    """
    u = d.dft_factor
    uh = u.conj().T
    s_aa = (u * d.sigma_aa) @ uh
    s_ab = (u * d.sigma_ab) @ uh
    return s_aa, s_ab, s_ab.T


def losslessness_residual(d: ScatteringDesign) -> float:
    """|| S_aa S_aa^H + S_ab S_ab^H - I ||_F, zero for an energy-conserving surface."""
    s_aa, s_ab, _ = assemble_scattering(d)
    m = d.n_elements
    gram = s_aa @ s_aa.conj().T + s_ab @ s_ab.conj().T
    return float(np.linalg.norm(gram - np.eye(m)))


def symmetry_residual(d: ScatteringDesign) -> float:
    """Relative port-block symmetry defect ||S_aa - S_aa^T||_F / ||S_aa||_F.

    The mirror pairing of the diagonal factors does not symmetrize S_aa
    exactly in this basis, so the defect is measured and reported rather
    than asserted.
    """
    s_aa, _, _ = assemble_scattering(d)
    scale = np.linalg.norm(s_aa)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(s_aa - s_aa.T) / scale)


def _check_same_m(d: ScatteringDesign, phi_cfg: RisPhaseConfig) -> None:
    if d.n_elements != phi_cfg.n_elements:
        raise DimensionError(
            f"design has {d.n_elements} elements but phases have {phi_cfg.n_elements}")


def effective_reflection(d: ScatteringDesign, phi_cfg: RisPhaseConfig) -> np.ndarray:
    """Composite reflection operator Phi = (Ydiag^-1 - S_aa)^-1, shape (M, M).

    Computed by a dense solve against the identity. With sigma_aa = 0 the
    port block vanishes and Phi reduces exactly to the diagonal of load
    entries (the conventional local surface).

    Raises
    ------
    SingularResolventError
        If the condition estimate of (Ydiag^-1 - S_aa) exceeds 1e12, which
        signals a physically resonant or degenerate configuration.
    """
    _check_same_m(d, phi_cfg)
    ups = phi_cfg.load_diagonal()
    if not np.any(d.sigma_aa):
        # No port coupling: the operator inverts a unimodular diagonal,
        # which is exactly the conjugate diagonal.
        return np.diag(ups)
    s_aa, _, _ = assemble_scattering(d)
    resolvent = np.diag(ups.conj()) - s_aa
    svals = np.linalg.svd(resolvent, compute_uv=False)
    # Both terms of the resolvent have spectral norm at most one, so the
    # operator's natural scale is O(1); measuring the smallest singular
    # value against that scale (rather than the raw condition number)
    # also catches the near-zero-matrix resonance, which is perfectly
    # "conditioned" in the scale-free sense but physically singular.
    scale = max(float(svals[0]), 1.0)
    tiny = float(svals[-1])
    if not np.isfinite(tiny) or tiny * CONDITION_LIMIT <= scale:
        raise SingularResolventError(
            f"port resolvent condition estimate {scale / max(tiny, 1e-300):.3e} "
            f"exceeds {CONDITION_LIMIT:.0e}")
    return np.linalg.solve(resolvent, np.eye(d.n_elements, dtype=complex))


def neumann_partial_sum(d: ScatteringDesign, phi_cfg: RisPhaseConfig, order: int) -> np.ndarray:
    """Truncated multiple-bounce expansion sum_{l=0}^{order} (Ydiag S_aa)^l Ydiag.

    Diagnostic only: it converges to effective_reflection exactly when the
    spectral radius of Ydiag S_aa is below one, and the truncation error
    decays geometrically at that radius. Never used as the computation path.
    """
    if order < 0:
        raise DimensionError(f"order must be nonnegative, got {order}")
    _check_same_m(d, phi_cfg)
    s_aa, _, _ = assemble_scattering(d)
    ups = phi_cfg.load_diagonal()
    bounce = ups[:, None] * s_aa          # Ydiag @ S_aa
    term = np.diag(ups).astype(complex)   # l = 0
    acc = term.copy()
    for _ in range(order):
        term = bounce @ term
        acc += term
    return acc


@dataclass(frozen=True)
class EffectiveChannel:
    """End-to-end downlink channel rows, one per user, shape (K, N)."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix, complex))
        if self.matrix.ndim != 2:
            raise DimensionError("effective channel must be a K x N matrix")
        if not np.all(np.isfinite(self.matrix)):
            raise DimensionError("effective channel entries must be finite")

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_bs_antennas(self) -> int:
        return self.matrix.shape[1]


def effective_channel(d: ScatteringDesign, phi_cfg: RisPhaseConfig,
                      ch: ChannelSample) -> EffectiveChannel:
    """Compose the K x N end-to-end channel through the coupled surface.

    Evaluates h_ris_users^H S_ab^T Phi S_ab h_bs_ris with
    Phi = (Ydiag^-1 - S_aa)^-1. The transpose on the first S_ab factor is
    the reciprocity relation S_ba = S_ab^T kept literally.

    Raises
    ------
    SingularResolventError
        Propagated from the resolvent solve.
    DimensionError
        If the channel sample and the design disagree on M.
    """
    if ch.n_elements != d.n_elements:
        raise DimensionError(
            f"channel has M={ch.n_elements} but design has M={d.n_elements}")
    phi = effective_reflection(d, phi_cfg)
    _, s_ab, s_ba = assemble_scattering(d)
    left = ch.h_ris_users.conj().T @ s_ba          # (K, M)
    right = s_ab @ ch.h_bs_ris                     # (M, N)
    return EffectiveChannel(matrix=left @ phi @ right)
