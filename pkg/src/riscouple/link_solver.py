"""Per-channel joint design of precoder, receive scaling, and surface phases.

For a fixed surface design and one channel realization, alternates between a
closed-form update of the transmit precoder (with its paired receive scaling)
and projected-gradient steps on the surface phase loads, monotonically
decreasing the sum-MSE objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ChannelSample,
    ConfigError,
    DegenerateChannelError,
    DimensionError,
    NoProgressError,
    PHASE_INITS,
    Precoder,
    RisPhaseConfig,
    ScatteringDesign,
    SystemParams,
)
from .metrics import analytic_metrics, mse_objective
from .scattering import EffectiveChannel, assemble_scattering, effective_channel, effective_reflection

# Backtracking gives up after this many step halvings.
MAX_HALVINGS = 30


@dataclass(frozen=True)
class InnerSolverConfig:
    """Settings for the per-channel alternating solver."""

    max_outer_alternations: int = 40
    ris_gradient_steps_per_alternation: int = 4
    ris_step_size: float = 1.0
    rel_tolerance: float = 1e-6
    phase_init: str = "uniform_random"
    phase_seed: int = 0

    def __post_init__(self):
        if self.max_outer_alternations < 1:
            raise ConfigError("max_outer_alternations must be at least 1")
        if self.ris_gradient_steps_per_alternation < 0:
            raise ConfigError("ris_gradient_steps_per_alternation must be >= 0")
        if not (np.isfinite(self.ris_step_size) and self.ris_step_size > 0.0):
            raise ConfigError("ris_step_size must be positive and finite")
        if not (np.isfinite(self.rel_tolerance) and self.rel_tolerance > 0.0):
            raise ConfigError("rel_tolerance must be positive and finite")
        if self.phase_init not in PHASE_INITS:
            raise ConfigError(f"unknown phase_init {self.phase_init!r}")
        if self.phase_seed < 0:
            raise ConfigError("phase_seed must be non-negative")


@dataclass(frozen=True)
class InnerSolution:
    """Result of one per-channel solve."""

    precoder: Precoder
    ris_config: RisPhaseConfig
    mse: float                  # raw objective at the returned point
    sum_rate_bits: float
    iterations: int             # alternations actually executed
    converged: bool             # True when the relative-improvement test fired
    mse_trace: tuple            # objective after each alternation


def initial_phases(cfg: InnerSolverConfig, m: int) -> RisPhaseConfig:
    """Starting phase vector: zeros, or seeded uniform draws on [0, 2pi)."""
    if cfg.phase_init == "zeros":
        return RisPhaseConfig(np.zeros(m))
    rng = np.random.default_rng(np.random.SeedSequence([cfg.phase_seed]))
    return RisPhaseConfig(rng.uniform(0.0, 2.0 * np.pi, m))


def optimal_precoder_given_ris(h_eff: EffectiveChannel,
                               p: SystemParams) -> Precoder:
    """Closed-form minimizer of the objective under the power constraint.

    Solves the regularized system (H H^H + (K sigma_w^2 / P) I) G = H for the
    unnormalized precoder, then splits G into a unit-power-scaled precoder F
    and the receive scaling rho = ||G||_F / sqrt(P). With zero noise the
    regularizer vanishes and the minimum-norm least-squares solution is used.
    """
    if h_eff.n_users != p.n_users or h_eff.n_bs_antennas != p.n_bs_antennas:
        raise DimensionError("effective channel does not match system dimensions")
    ht = h_eff.matrix.conj().T            # (N, K)
    if not np.any(ht):
        raise DegenerateChannelError("effective channel is identically zero")
    p_lin = p.tx_power_watts
    reg = p.n_users * p.noise_variance / p_lin
    if reg > 0.0:
        gram = ht @ ht.conj().T + reg * np.eye(p.n_bs_antennas)
        g = np.linalg.solve(gram, ht)
    else:
        g = np.linalg.pinv(h_eff.matrix)
    rho = float(np.linalg.norm(g)) / np.sqrt(p_lin)
    if not (np.isfinite(rho) and rho > 0.0):
        raise DegenerateChannelError("precoder normalization is degenerate")
    return Precoder(matrix=g / rho, rx_scale=rho)


def ris_phase_gradient(design: ScatteringDesign, phi_cfg: RisPhaseConfig,
                       ch: ChannelSample, sol: Precoder,
                       p: SystemParams) -> np.ndarray:
    """Gradient of the objective with respect to the phase vector.

    Component m is -2 Im{rho conj(u_m) [Phi B F E^H A Phi]_mm} with
    A the user-side link through the surface, B the base-station-side link,
    and E the scaled signal residual. Only the diagonal of the product is
    formed.
    """
    if ch.n_elements != design.n_elements:
        raise DimensionError("channel sample does not match design size")
    phi = effective_reflection(design, phi_cfg)
    _, s_ab, s_ba = assemble_scattering(design)
    a = ch.h_ris_users.conj().T @ s_ba        # (K, M)
    b = s_ab @ ch.h_bs_ris                    # (M, N)
    rho = sol.rx_scale
    bf = b @ sol.matrix                       # (M, K)
    e = rho * (a @ (phi @ bf)) - np.eye(ch.n_users)
    left = phi @ bf                           # (M, K)
    right = (e.conj().T @ a) @ phi            # (K, M)
    diag = np.einsum("mk,km->m", left, right)
    ups = phi_cfg.load_diagonal()
    return -2.0 * np.imag(rho * ups.conj() * diag)


def solve_inner(design: ScatteringDesign, ch: ChannelSample, p: SystemParams,
                cfg: InnerSolverConfig,
                theta0: np.ndarray | None = None) -> InnerSolution:
    """Alternate precoder updates with backtracked phase-gradient steps.

    Each alternation recomputes the closed-form precoder, then takes up to
    the configured number of gradient steps on the phases, each guarded by
    halving the step until the objective does not increase. The step size
    carries over between steps, doubling after an acceptance but never past
    the configured value. Stops early once an alternation improves the
    objective by less than rel_tolerance relative to the previous one.

    theta0 optionally overrides the configured phase initialization, which
    lets a caller warm-start from a previous solution.
    """
    m = design.n_elements
    if theta0 is not None:
        phi_cfg = RisPhaseConfig(np.asarray(theta0, dtype=float))
        if phi_cfg.phases.shape != (m,):
            raise DimensionError("theta0 length does not match design size")
    else:
        phi_cfg = initial_phases(cfg, m)
    h = effective_channel(design, phi_cfg, ch)

    mu = cfg.ris_step_size
    trace = []
    prev = None
    converged = False
    improved_ever = False
    alternations = 0

    for alt in range(cfg.max_outer_alternations):
        alternations = alt + 1
        sol = optimal_precoder_given_ris(h, p)
        cur = mse_objective(h, sol, p)
        if prev is not None and cur < prev:
            improved_ever = True
        for _ in range(cfg.ris_gradient_steps_per_alternation):
            grad = ris_phase_gradient(design, phi_cfg, ch, sol, p)
            accepted = False
            trial = mu
            for _ in range(MAX_HALVINGS + 1):
                cand = RisPhaseConfig(phi_cfg.phases - trial * grad)
                h_cand = effective_channel(design, cand, ch)
                mse_cand = mse_objective(h_cand, sol, p)
                if mse_cand <= cur:
                    if mse_cand < cur:
                        improved_ever = True
                    phi_cfg, h, cur = cand, h_cand, mse_cand
                    mu = min(trial * 2.0, cfg.ris_step_size)
                    accepted = True
                    break
                trial *= 0.5
            if not accepted:
                if alt == 0 and not improved_ever:
                    raise NoProgressError(
                        "no descent step found in the first alternation")
                break
        trace.append(cur)
        if prev is not None:
            rel = (prev - cur) / max(abs(prev), 1e-300)
            if rel < cfg.rel_tolerance:
                converged = True
                prev = cur
                break
        prev = cur

    sol = optimal_precoder_given_ris(h, p)
    final_mse = mse_objective(h, sol, p)
    metrics = analytic_metrics(h, sol, p)
    return InnerSolution(
        precoder=sol,
        ris_config=phi_cfg,
        mse=final_mse,
        sum_rate_bits=metrics.sum_rate_bits,
        iterations=alternations,
        converged=converged,
        mse_trace=tuple(float(v) for v in trace),
    )
