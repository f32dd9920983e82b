"""Comparative experiment harness: schemes, sweeps, tables, and figures.

Three schemes share one evaluation protocol so their numbers are directly
comparable: the trained coupling design, a fixed feasible coupling level,
and a conventional surface with no port-to-port coupling. Sweeps vary
transmit power or surface size, emit one record per (point, scheme), and
render the records to a delimited table plus a deterministic SVG figure.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channels import ChannelEnsemble, generate_ensemble
from .core import (
    ConfigError,
    EmptyBatchError,
    ExperimentConfig,
    FormatError,
    SCHEME_TAGS,
    ScatteringDesign,
    SystemParams,
    config_hash,
    derive_seed,
)
from .link_solver import InnerSolverConfig, solve_inner
from .scattering import build_dft_kronecker, make_design
from .surface_design import OuterSolverConfig, run_training

_EVAL_SEED_TAG = 3
_ENSEMBLE_SEED_TAG = 4

CSV_HEADER = ("scheme,p_dbm,m,k,n,q,mean_sum_rate_bits,std_err,"
              "n_eval_channels,seed,config_hash")


@dataclass(frozen=True)
class ExperimentRecord:
    """One scheme evaluated at one sweep point."""

    scheme: str
    p_dbm: float
    m: int
    k: int
    n: int
    q: int
    mean_sum_rate_bits: float
    std_err: float
    n_eval_channels: int
    seed: int
    config_hash: str

    def __post_init__(self):
        if self.scheme not in SCHEME_TAGS:
            raise ConfigError(f"unknown scheme tag {self.scheme!r}")
        if self.n_eval_channels < 1:
            raise EmptyBatchError("record needs at least one evaluation channel")


def scheme_design(scheme: str, ensemble: ChannelEnsemble, p: SystemParams,
                  ocfg: OuterSolverConfig, icfg: InnerSolverConfig, *,
                  fixed_coupling: float = 0.5,
                  infeasible_baseline: bool = False):
    """Produce the coupling design one scheme commits to.

    Returns (design, trace) where trace is None for the two baselines,
    which never invoke the training loop. The fixed baseline normally sits
    on the feasible circle; with infeasible_baseline it keeps full
    port-to-space transmission on top of the port coupling, a deliberately
    lossy diagnostic state.
    """
    m = p.n_ris_elements
    if scheme == "proposed_mc_optimized":
        design, trace = run_training(ensemble, p, ocfg, icfg)
        return design, trace
    if scheme == "fixed_mc_baseline":
        c = float(fixed_coupling)
        if not 0.0 <= c < 1.0:
            raise ConfigError("fixed coupling level must lie in [0, 1)")
        if infeasible_baseline:
            design = ScatteringDesign(
                np.full(m, c), np.ones(m),
                build_dft_kronecker(m), skip_circle_check=True)
        else:
            design = make_design(np.full(m, c),
                                 np.full(m, float(np.sqrt(1.0 - c * c))))
        return design, None
    if scheme == "conventional_no_mc":
        return make_design(np.zeros(m), np.ones(m)), None
    raise ConfigError(f"unknown scheme tag {scheme!r}")


def evaluate_design(design: ScatteringDesign, ensemble: ChannelEnsemble,
                    p: SystemParams, icfg: InnerSolverConfig) -> np.ndarray:
    """Per-channel achieved sum rates of a design on the evaluation set.

    The per-sample solver seed depends only on the ensemble seed and the
    sample index, so every scheme faces the identical solver randomness on
    the identical channels.
    """
    if not ensemble.evaluation:
        raise EmptyBatchError("ensemble has no evaluation channels")
    rates = []
    for index, ch in enumerate(ensemble.evaluation):
        cfg = replace(icfg,
                      phase_seed=derive_seed(ensemble.seed, _EVAL_SEED_TAG, index))
        sol = solve_inner(design, ch, p, cfg)
        rates.append(sol.sum_rate_bits)
    return np.array(rates)


def run_scheme(scheme: str, ensemble: ChannelEnsemble, p: SystemParams,
               ocfg: OuterSolverConfig, icfg: InnerSolverConfig, *,
               fixed_coupling: float = 0.5, infeasible_baseline: bool = False,
               config_digest: str = "") -> ExperimentRecord:
    """Design (or pick) the scheme's surface state, then evaluate it."""
    design, _ = scheme_design(
        scheme, ensemble, p, ocfg, icfg,
        fixed_coupling=fixed_coupling, infeasible_baseline=infeasible_baseline)
    rates = evaluate_design(design, ensemble, p, icfg)
    n_eval = rates.size
    std_err = float(np.std(rates, ddof=1) / np.sqrt(n_eval)) if n_eval > 1 else 0.0
    return ExperimentRecord(
        scheme=scheme,
        p_dbm=float(p.tx_power_dbm),
        m=p.n_ris_elements,
        k=p.n_users,
        n=p.n_bs_antennas,
        q=ensemble.q_train,
        mean_sum_rate_bits=float(np.mean(rates)),
        std_err=std_err,
        n_eval_channels=int(n_eval),
        seed=int(ensemble.seed),
        config_hash=config_digest,
    )


def solver_configs(cfg: ExperimentConfig):
    ocfg = OuterSolverConfig(
        max_iterations=cfg.outer_iterations,
        step_size=cfg.outer_step_size,
        init_sigma_aa=cfg.init_sigma_aa,
        fd_check=cfg.fd_check,
        seed=cfg.rng_seed,
        resample_per_iteration=cfg.resample_per_iteration,
        warm_start_inner=cfg.warm_start_inner,
    )
    icfg = InnerSolverConfig(
        max_outer_alternations=cfg.inner_alternations,
        ris_gradient_steps_per_alternation=cfg.ris_gradient_steps,
        ris_step_size=cfg.ris_step_size,
        rel_tolerance=cfg.rel_tolerance,
        phase_init=cfg.phase_init,
    )
    return ocfg, icfg


def sweep(cfg: ExperimentConfig, axis: str, grid=None) -> list:
    """Run every configured scheme across one sweep axis.

    axis "power_dbm" reuses a single channel ensemble across the power
    grid; axis "n_ris_elements" generates one ensemble per surface size
    with a seed derived from the base channel seed and the size. Sweep
    points are independent and run on a thread pool; the returned list is
    always assembled in grid order (schemes in configured order within a
    point), so results do not depend on scheduling.
    """
    ocfg, icfg = solver_configs(cfg)
    digest = config_hash(cfg)
    base = cfg.system_params()

    if axis == "power_dbm":
        grid = tuple(cfg.power_grid_dbm) if grid is None else tuple(grid)
        if not grid:
            raise ConfigError("power grid is empty")
        shared = generate_ensemble(
            base, cfg.q_train, cfg.e_eval, model=cfg.channel_model,
            seed=cfg.channel_seed, rician_k_factor=cfg.rician_k_factor)

        def point_inputs(p_dbm):
            return replace(base, tx_power_dbm=float(p_dbm)), shared
    elif axis == "n_ris_elements":
        grid = tuple(cfg.m_grid) if grid is None else tuple(grid)
        if not grid:
            raise ConfigError("element grid is empty")

        def point_inputs(m):
            p = replace(base, n_ris_elements=int(m))
            ensemble = generate_ensemble(
                p, cfg.q_train, cfg.e_eval, model=cfg.channel_model,
                seed=derive_seed(cfg.channel_seed, _ENSEMBLE_SEED_TAG, int(m)),
                rician_k_factor=cfg.rician_k_factor)
            return p, ensemble
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")

    def run_point(value):
        p, ensemble = point_inputs(value)
        return [
            run_scheme(scheme, ensemble, p, ocfg, icfg,
                       fixed_coupling=cfg.fixed_mc_coupling,
                       infeasible_baseline=cfg.infeasible_baseline,
                       config_digest=digest)
            for scheme in cfg.schemes
        ]

    workers = min(len(grid), os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(run_point, grid))
    else:
        per_point = [run_point(value) for value in grid]
    return [record for point in per_point for record in point]


def emit_csv(records, path) -> None:
    """Write records as a delimited table with stable byte-level layout.

    Floats use repr-exact formatting and rows end with a bare newline, so
    identical records always produce identical bytes.
    """
    records = list(records)
    if not records:
        raise EmptyBatchError("no records to write")
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            r.scheme,
            f"{r.p_dbm:.17g}",
            str(r.m),
            str(r.k),
            str(r.n),
            str(r.q),
            f"{r.mean_sum_rate_bits:.17g}",
            f"{r.std_err:.17g}",
            str(r.n_eval_channels),
            str(r.seed),
            r.config_hash,
        ]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_records(path) -> list:
    """Parse a table written by emit_csv back into records."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise FormatError(f"{path}: missing or unexpected header")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 11:
            raise FormatError(f"{path}:{lineno}: expected 11 fields")
        try:
            records.append(ExperimentRecord(
                scheme=parts[0],
                p_dbm=float(parts[1]),
                m=int(parts[2]),
                k=int(parts[3]),
                n=int(parts[4]),
                q=int(parts[5]),
                mean_sum_rate_bits=float(parts[6]),
                std_err=float(parts[7]),
                n_eval_channels=int(parts[8]),
                seed=int(parts[9]),
                config_hash=parts[10],
            ))
        except (ValueError, ConfigError) as exc:
            raise FormatError(f"{path}:{lineno}: bad record ({exc})") from exc
    return records


def emit_plot(records, path) -> None:
    """Render records as an errorbar figure, one line per scheme.

    The x axis is inferred from the records: transmit power when it
    varies, surface size otherwise. Output is SVG with hashed ids salted
    and the date stripped, so repeated runs produce identical files.
    """
    records = list(records)
    if not records:
        raise EmptyBatchError("no records to plot")
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    powers = sorted({r.p_dbm for r in records})
    sizes = sorted({r.m for r in records})
    if len(powers) > 1 or len(sizes) == 1:
        x_of = lambda r: r.p_dbm
        x_label = "transmit power (dBm)"
    else:
        x_of = lambda r: r.m
        x_label = "surface elements"

    with plt.rc_context({"svg.hashsalt": "riscouple"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for scheme in SCHEME_TAGS:
            points = sorted((x_of(r), r.mean_sum_rate_bits, r.std_err)
                            for r in records if r.scheme == scheme)
            if not points:
                continue
            xs = [pt[0] for pt in points]
            ys = [pt[1] for pt in points]
            es = [pt[2] for pt in points]
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=scheme)
        ax.set_xlabel(x_label)
        ax.set_ylabel("sum rate (bits/s/Hz)")
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
