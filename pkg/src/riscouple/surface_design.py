"""Offline training of the surface coupling factors over a channel ensemble.

Starting from a feasible initialization, each iteration solves the
per-channel problem on every training sample, averages the sampled gradients
of the mean objective with respect to the two diagonal coupling vectors,
takes a fixed-size step, and restores feasibility by mirror-pair averaging
followed by per-element projection onto the unit circle. A final measurement
pass evaluates the trained design on the same samples with the same
per-sample solver seeds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import ChannelEnsemble, generate_ensemble
from .core import (
    ChannelSample,
    derive_seed,
    ConfigError,
    DegenerateChannelError,
    DimensionError,
    EmptyBatchError,
    FormatError,
    NoProgressError,
    Precoder,
    RisPhaseConfig,
    ScatteringDesign,
    SingularResolventError,
    SystemParams,
)
from .link_solver import InnerSolution, InnerSolverConfig, solve_inner
from .metrics import mse_objective
from .scattering import (
    EffectiveChannel,
    assemble_scattering,
    effective_reflection,
    make_design,
    symmetry_residual,
)

_FD_STEP = 1e-5
_FD_TOLERANCE = 1e-4
_INCREASE_STREAK = 5
_DESIGN_VERSION = 1


@dataclass(frozen=True)
class OuterSolverConfig:
    """Settings for the ensemble-level training loop."""

    max_iterations: int = 30
    step_size: float = 0.05
    init_sigma_aa: float = 0.0
    fd_check: bool = False
    seed: int = 0
    resample_per_iteration: bool = False
    warm_start_inner: bool = False

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")
        if not (np.isfinite(self.step_size) and self.step_size > 0.0):
            raise ConfigError("step_size must be positive and finite")
        if not (0.0 <= self.init_sigma_aa < 1.0):
            raise ConfigError("init_sigma_aa must lie in [0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class OuterTrace:
    """Per-iteration history of the training loop.

    For iteration t, objective_mean[t] (and std, per_sample_mse) measure the
    design the iteration started from, while circle_residual[t] and
    symmetry_residual[t] describe the updated design it produced. The
    final_* fields come from the measurement pass at the returned design.
    """

    objective_mean: list = field(default_factory=list)
    objective_std: list = field(default_factory=list)
    circle_residual: list = field(default_factory=list)
    symmetry_residual: list = field(default_factory=list)
    per_sample_mse: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    final_objective_mean: float = float("nan")
    final_per_sample_mse: tuple = ()
    final_solutions: tuple = ()

    @property
    def n_iterations(self) -> int:
        return len(self.objective_mean)


def initial_design(m: int, init_sigma_aa: float) -> ScatteringDesign:
    """Feasible constant starting point with the given port-coupling level."""
    if not (0.0 <= init_sigma_aa < 1.0):
        raise ConfigError("init_sigma_aa must lie in [0, 1)")
    aa = np.full(m, float(init_sigma_aa))
    ab = np.full(m, float(np.sqrt(1.0 - init_sigma_aa**2)))
    return make_design(aa, ab)


def grad_sigma_aa_sample(design: ScatteringDesign, ch: ChannelSample,
                         inner: InnerSolution) -> np.ndarray:
    """Sampled objective gradient with respect to sigma_aa (one channel).

    Returns the full complex M x M matrix whose real diagonal drives the
    update; computed by wrapping the reflection-resolvent sensitivity
    2 Phi^T P^T conj(E) R^T Phi^T in the fixed basis factors.
    """
    if ch.n_elements != design.n_elements:
        raise DimensionError("channel sample does not match design size")
    phi = effective_reflection(design, inner.ris_config)
    _, s_ab, s_ba = assemble_scattering(design)
    u = design.dft_factor
    rho = inner.precoder.rx_scale
    f = inner.precoder.matrix
    p_mat = rho * (ch.h_ris_users.conj().T @ s_ba)       # (K, M)
    r_mat = s_ab @ (ch.h_bs_ris @ f)                     # (M, K)
    e = p_mat @ (phi @ r_mat) - np.eye(ch.n_users)
    core = phi.T @ p_mat.T @ e.conj() @ r_mat.T @ phi.T
    return 2.0 * (u.T @ core @ u.conj())


def grad_sigma_ab_sample(design: ScatteringDesign, ch: ChannelSample,
                         inner: InnerSolution) -> np.ndarray:
    """Sampled objective gradient with respect to sigma_ab (one channel).

    Two terms, one per appearance of the port-to-space factor in the
    composite link; returned as the full complex M x M matrix.
    """
    if ch.n_elements != design.n_elements:
        raise DimensionError("channel sample does not match design size")
    phi = effective_reflection(design, inner.ris_config)
    _, s_ab, s_ba = assemble_scattering(design)
    u = design.dft_factor
    rho = inner.precoder.rx_scale
    f = inner.precoder.matrix
    e = rho * (ch.h_ris_users.conj().T @ (s_ba @ (phi @ (s_ab @ (ch.h_bs_ris @ f)))))
    e = e - np.eye(ch.n_users)
    left = (rho * (ch.h_ris_users.conj().T @ u.conj())).T    # (M, K)
    right = (u.conj().T @ (ch.h_bs_ris @ f)).T               # (K, M)
    wrapped = u.T @ phi @ u                                  # (M, M)
    inner_block = left @ e.conj() @ right                    # (M, M)
    term1 = 2.0 * (inner_block * design.sigma_ab[None, :]) @ wrapped.T
    term2 = 2.0 * wrapped.T @ (design.sigma_ab[:, None] * inner_block)
    return term1 + term2


def average_gradients(samples) -> np.ndarray:
    """Mean of per-sample gradient matrices in ascending sample order.

    Accepts either plain matrices (already ordered) or (index, matrix)
    pairs; accumulation always runs in ascending index order so the result
    is bitwise independent of the order the caller produced them in.
    """
    items = list(samples)
    if not items:
        raise EmptyBatchError("no sampled gradients to average")
    if isinstance(items[0], tuple):
        items = sorted(items, key=lambda pair: pair[0])
        mats = [np.asarray(g) for _, g in items]
    else:
        mats = [np.asarray(g) for g in items]
    shape = mats[0].shape
    for g in mats:
        if g.shape != shape:
            raise DimensionError("gradient shapes disagree inside one batch")
    acc = np.zeros(shape, dtype=complex)
    for g in mats:
        acc = acc + g
    return acc / len(mats)


def gradient_step(sigma: np.ndarray, grad: np.ndarray, mu: float) -> np.ndarray:
    """Fixed-step descent update on one coupling vector.

    Only the real part of the gradient diagonal moves the real vector; a
    1-D grad is taken as the diagonal directly.
    """
    sigma = np.asarray(sigma, dtype=float)
    grad = np.asarray(grad)
    if grad.ndim == 2:
        if grad.shape[0] != grad.shape[1] or grad.shape[0] != sigma.shape[0]:
            raise DimensionError("gradient shape does not match the vector")
        diag = np.real(np.diag(grad))
    elif grad.ndim == 1:
        if grad.shape != sigma.shape:
            raise DimensionError("gradient shape does not match the vector")
        diag = np.real(grad)
    else:
        raise DimensionError("gradient must be a vector or square matrix")
    return sigma - mu * diag


def symmetrize(sigma: np.ndarray) -> np.ndarray:
    """Simultaneous mirror-pair averaging: out[i] = (in[i] + in[M-1-i]) / 2."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1:
        raise DimensionError("sigma must be a vector")
    return (sigma + sigma[::-1]) / 2.0


def project_to_circle(sigma_aa: np.ndarray, sigma_ab: np.ndarray):
    """Per-element projection of coupling pairs onto the unit circle.

    Each pair is scaled by its Euclidean norm; a zero pair maps to the pure
    transmission point (0, 1), the nearest-by-convention feasible state.
    """
    a = np.asarray(sigma_aa, dtype=float)
    b = np.asarray(sigma_ab, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError("coupling vectors must be equal-length vectors")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DimensionError("coupling vectors must be finite")
    radius = np.hypot(a, b)
    safe = np.where(radius > 0.0, radius, 1.0)
    out_a = np.where(radius > 0.0, a / safe, 0.0)
    out_b = np.where(radius > 0.0, b / safe, 1.0)
    # One polishing pass keeps the worst-case circle residual a couple of
    # ulps, comfortably inside the feasibility tolerance.
    radius2 = np.hypot(out_a, out_b)
    return out_a / radius2, out_b / radius2


def _objective_at(u: np.ndarray, sigma_aa: np.ndarray, sigma_ab: np.ndarray,
                  phi_cfg: RisPhaseConfig, ch: ChannelSample, sol: Precoder,
                  p: SystemParams) -> float:
    """Objective at raw coupling vectors, bypassing feasibility validation.

    Needed by the finite-difference audit, whose perturbed points are
    slightly off the circle and off the mirror pairing.
    """
    s_aa = (u * sigma_aa) @ u.conj().T
    s_ab = (u * sigma_ab) @ u.conj().T
    ups = phi_cfg.load_diagonal()
    phi = np.linalg.solve(np.diag(ups.conj()) - s_aa,
                          np.eye(u.shape[0]))
    matrix = ch.h_ris_users.conj().T @ s_ab.T @ phi @ s_ab @ ch.h_bs_ris
    return mse_objective(EffectiveChannel(matrix), sol, p)


def _check_gradients_fd(design: ScatteringDesign, samples, inners,
                        p: SystemParams, g_aa: np.ndarray,
                        g_ab: np.ndarray) -> None:
    u = design.dft_factor
    m = design.n_elements

    def mean_objective(aa, ab):
        vals = [
            _objective_at(u, aa, ab, s.ris_config, ch, s.precoder, p)
            for ch, s in zip(samples, inners)
        ]
        return float(np.mean(vals))

    for tag, base_aa, base_ab, grad in (
            ("sigma_aa", True, False, g_aa), ("sigma_ab", False, True, g_ab)):
        fd = np.zeros(m)
        for i in range(m):
            delta = np.zeros(m)
            delta[i] = _FD_STEP
            aa_p = design.sigma_aa + (delta if base_aa else 0.0)
            ab_p = design.sigma_ab + (delta if base_ab else 0.0)
            aa_m = design.sigma_aa - (delta if base_aa else 0.0)
            ab_m = design.sigma_ab - (delta if base_ab else 0.0)
            fd[i] = (mean_objective(aa_p, ab_p)
                     - mean_objective(aa_m, ab_m)) / (2.0 * _FD_STEP)
        analytic = np.real(np.diag(grad))
        denom = max(float(np.linalg.norm(fd)), 1e-300)
        rel = float(np.linalg.norm(fd - analytic)) / denom
        if rel > _FD_TOLERANCE:
            raise AssertionError(
                f"finite-difference audit failed for {tag}: "
                f"relative error {rel:.3e}")


def run_training(ensemble: ChannelEnsemble, p: SystemParams,
                 ocfg: OuterSolverConfig, icfg: InnerSolverConfig):
    """Train the coupling design on the ensemble's training samples.

    Returns (design, trace). With max_iterations == 0 the initialization is
    returned unchanged, measured by the final evaluation pass. Per-sample
    solver seeds depend on the sample index but not the iteration, so
    objective values are comparable across iterations.
    """
    if (ensemble.params.n_bs_antennas != p.n_bs_antennas
            or ensemble.params.n_users != p.n_users
            or ensemble.params.n_ris_elements != p.n_ris_elements):
        raise DimensionError("ensemble dimensions do not match system parameters")
    m = p.n_ris_elements
    design = initial_design(m, ocfg.init_sigma_aa)
    trace = OuterTrace()
    samples = ensemble.training
    warm = {}

    def solve_all(current_design, current_samples):
        solutions = []
        for qi, ch in enumerate(current_samples):
            cfg_q = replace(icfg, phase_seed=derive_seed(ocfg.seed, 2, qi))
            theta0 = warm.get(qi) if ocfg.warm_start_inner else None
            try:
                sol = solve_inner(current_design, ch, p, cfg_q, theta0=theta0)
            except (SingularResolventError, NoProgressError,
                    DegenerateChannelError, DimensionError) as exc:
                raise type(exc)(f"training sample {qi}: {exc}") from exc
            if ocfg.warm_start_inner:
                warm[qi] = sol.ris_config.phases
            solutions.append(sol)
        return solutions

    prev_mean = None
    increase_streak = 0
    for iteration in range(ocfg.max_iterations):
        started = time.perf_counter()
        if ocfg.resample_per_iteration and iteration > 0:
            fresh = generate_ensemble(
                ensemble.params, ensemble.q_train, 0,
                model=ensemble.model_tag,
                seed=derive_seed(ensemble.seed, 5, iteration),
                rician_k_factor=ensemble.rician_k_factor)
            samples = fresh.training

        inners = solve_all(design, samples)
        mses = np.array([s.mse for s in inners])
        mean_obj = float(np.mean(mses))
        trace.objective_mean.append(mean_obj)
        trace.objective_std.append(
            float(np.std(mses, ddof=1)) if len(mses) > 1 else 0.0)
        trace.per_sample_mse.append(tuple(float(v) for v in mses))

        if prev_mean is not None and mean_obj > prev_mean:
            increase_streak += 1
            if increase_streak == _INCREASE_STREAK:
                trace.warnings.append(
                    f"objective increased for {_INCREASE_STREAK} consecutive "
                    f"iterations up to iteration {iteration}")
        else:
            increase_streak = 0
        prev_mean = mean_obj

        g_aa = average_gradients(
            [(qi, grad_sigma_aa_sample(design, samples[qi], inners[qi]))
             for qi in range(len(samples))])
        g_ab = average_gradients(
            [(qi, grad_sigma_ab_sample(design, samples[qi], inners[qi]))
             for qi in range(len(samples))])
        if ocfg.fd_check:
            _check_gradients_fd(design, samples, inners, p, g_aa, g_ab)

        new_aa = symmetrize(gradient_step(design.sigma_aa, g_aa, ocfg.step_size))
        new_ab = symmetrize(gradient_step(design.sigma_ab, g_ab, ocfg.step_size))
        new_aa, new_ab = project_to_circle(new_aa, new_ab)
        design = ScatteringDesign(new_aa, new_ab, design.dft_factor)

        trace.circle_residual.append(design.circle_residual())
        trace.symmetry_residual.append(symmetry_residual(design))
        trace.wall_ms.append((time.perf_counter() - started) * 1e3)

    final = solve_all(design, samples)
    trace.final_per_sample_mse = tuple(float(s.mse) for s in final)
    trace.final_objective_mean = float(np.mean(trace.final_per_sample_mse))
    trace.final_solutions = tuple(final)
    return design, trace


def save_design(design: ScatteringDesign, path, *, seed: int = 0,
                config_digest: str = "") -> None:
    """Write the design as a small reloadable text artifact."""
    lines = [
        f"version = {_DESIGN_VERSION}",
        f"m = {design.n_elements}",
        f"seed = {seed}",
        f"config_hash = {config_digest}",
        "sigma_aa = " + ",".join(f"{v:.17g}" for v in design.sigma_aa),
        "sigma_ab = " + ",".join(f"{v:.17g}" for v in design.sigma_ab),
    ]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_design(path):
    """Read a design artifact; returns (design, metadata dict)."""
    fields = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key in fields:
                raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
            fields[key] = value.strip()
    required = ("version", "m", "seed", "config_hash", "sigma_aa", "sigma_ab")
    for key in required:
        if key not in fields:
            raise FormatError(f"{path}: missing key {key!r}")
    try:
        version = int(fields["version"])
        m = int(fields["m"])
        seed = int(fields["seed"])
        aa = np.array([float(tok) for tok in fields["sigma_aa"].split(",")])
        ab = np.array([float(tok) for tok in fields["sigma_ab"].split(",")])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed field ({exc})") from exc
    if version != _DESIGN_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if aa.shape != (m,) or ab.shape != (m,):
        raise FormatError(f"{path}: coupling vectors do not have length {m}")
    try:
        design = make_design(aa, ab)
    except Exception as exc:
        raise FormatError(f"{path}: invalid design ({exc})") from exc
    return design, {"seed": seed, "config_hash": fields["config_hash"]}


def export_trace_csv(trace: OuterTrace, path) -> None:
    """Write the per-iteration trace as a delimited table."""
    header = ("iteration,objective_mean,objective_std,circle_residual,"
              "symmetry_residual,wall_ms")
    rows = [header]
    for it in range(trace.n_iterations):
        rows.append(",".join([
            str(it),
            f"{trace.objective_mean[it]:.17g}",
            f"{trace.objective_std[it]:.17g}",
            f"{trace.circle_residual[it]:.17g}",
            f"{trace.symmetry_residual[it]:.17g}",
            f"{trace.wall_ms[it]:.17g}",
        ]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
