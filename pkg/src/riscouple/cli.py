"""Command-line front end.

Verbs: gen-channels (draw and store an ensemble), train (run the offline
surface design), eval (score one design or baseline on stored channels),
sweep (comparative experiment over a grid, table plus figure), plot
(re-render a figure from a stored table). Exit code 0 on success, 1 on a
runtime failure (reported as one machine-readable stderr line), 2 on usage
errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .channels import generate_ensemble, load_ensemble, save_ensemble
from .core import (
    ChecksumError,
    ConfigError,
    DegenerateChannelError,
    DimensionError,
    EmptyBatchError,
    ExperimentConfig,
    FormatError,
    GenerationError,
    NoProgressError,
    SCHEME_TAGS,
    SingularResolventError,
    config_hash,
    load_config,
)
from .experiments import (
    ExperimentRecord,
    emit_csv,
    emit_plot,
    evaluate_design,
    read_records,
    scheme_design,
    solver_configs,
    sweep,
)
from .surface_design import export_trace_csv, load_design, run_training, save_design

_RUNTIME_ERRORS = (
    ConfigError,
    DimensionError,
    FormatError,
    ChecksumError,
    GenerationError,
    SingularResolventError,
    DegenerateChannelError,
    NoProgressError,
    EmptyBatchError,
    OSError,
)


def _load_cfg(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    return load_config(args.config)


def _note(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


def _cmd_gen_channels(args) -> int:
    cfg = _load_cfg(args)
    seed = cfg.channel_seed if args.seed is None else args.seed
    ensemble = generate_ensemble(
        cfg.system_params(), cfg.q_train, cfg.e_eval,
        model=cfg.channel_model, seed=seed,
        rician_k_factor=cfg.rician_k_factor)
    save_ensemble(ensemble, args.out)
    _note(args, f"wrote {ensemble.q_train}+{ensemble.e_eval} channels to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    ensemble = load_ensemble(args.channels)
    ocfg, icfg = solver_configs(cfg)
    if args.seed is not None:
        ocfg = replace(ocfg, seed=args.seed)
    p = replace(cfg.system_params(),
                n_ris_elements=ensemble.params.n_ris_elements,
                n_bs_antennas=ensemble.params.n_bs_antennas,
                n_users=ensemble.params.n_users)
    design, trace = run_training(ensemble, p, ocfg, icfg)
    save_design(design, args.out, seed=ocfg.seed, config_digest=config_hash(cfg))
    if args.trace is not None:
        export_trace_csv(trace, args.trace)
    for line in trace.warnings:
        print(f"warning: {line}", file=sys.stderr)
    _note(args, f"trained {trace.n_iterations} iterations, "
                f"final objective {trace.final_objective_mean:.6g}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    ensemble = load_ensemble(args.channels)
    ocfg, icfg = solver_configs(cfg)
    p = replace(cfg.system_params(),
                n_ris_elements=ensemble.params.n_ris_elements,
                n_bs_antennas=ensemble.params.n_bs_antennas,
                n_users=ensemble.params.n_users)
    if args.design is not None:
        design, _meta = load_design(args.design)
        scheme = "proposed_mc_optimized"
        if design.n_elements != p.n_ris_elements:
            raise DimensionError(
                "design size does not match the stored channels")
    else:
        if args.scheme == "proposed_mc_optimized":
            raise ConfigError(
                "evaluating the trained scheme needs --design")
        design, _ = scheme_design(
            args.scheme, ensemble, p, ocfg, icfg,
            fixed_coupling=cfg.fixed_mc_coupling,
            infeasible_baseline=cfg.infeasible_baseline)
        scheme = args.scheme
    rates = evaluate_design(design, ensemble, p, icfg)
    n_eval = rates.size
    std_err = float(np.std(rates, ddof=1) / np.sqrt(n_eval)) if n_eval > 1 else 0.0
    record = ExperimentRecord(
        scheme=scheme, p_dbm=float(p.tx_power_dbm), m=p.n_ris_elements,
        k=p.n_users, n=p.n_bs_antennas, q=ensemble.q_train,
        mean_sum_rate_bits=float(np.mean(rates)), std_err=std_err,
        n_eval_channels=int(n_eval), seed=int(ensemble.seed),
        config_hash=config_hash(cfg))
    emit_csv([record], args.out)
    _note(args, f"mean sum rate {record.mean_sum_rate_bits:.6g} bits")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    grid = None
    if args.grid is not None:
        tokens = [t for t in args.grid.split(",") if t.strip()]
        if not tokens:
            raise ConfigError("empty --grid")
        try:
            if args.axis == "n_ris_elements":
                grid = tuple(int(t) for t in tokens)
            else:
                grid = tuple(float(t) for t in tokens)
        except ValueError:
            raise ConfigError(f"bad --grid value in {args.grid!r}") from None
    records = sweep(cfg, args.axis, grid)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "records.csv"
    svg_path = out_dir / "records.svg"
    emit_csv(records, csv_path)
    emit_plot(records, svg_path)
    _note(args, f"wrote {len(records)} records to {csv_path} and {svg_path}")
    return 0


def _cmd_plot(args) -> int:
    records = read_records(args.records)
    emit_plot(records, args.out)
    _note(args, f"rendered {len(records)} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riscouple",
        description="Mutual-coupling-aware surface design and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="print progress notes to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-channels", help="draw and store a channel ensemble")
    gen.add_argument("--config", help="key=value configuration file")
    gen.add_argument("--seed", type=int, help="override the channel seed")
    gen.add_argument("--out", required=True, help="output ensemble file")
    gen.set_defaults(func=_cmd_gen_channels)

    train = sub.add_parser("train", help="run the offline surface design")
    train.add_argument("--config", help="key=value configuration file")
    train.add_argument("--channels", required=True, help="stored ensemble file")
    train.add_argument("--seed", type=int, help="override the training seed")
    train.add_argument("--out", required=True, help="output design file")
    train.add_argument("--trace", help="optional per-iteration trace table")
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("eval", help="score a design or baseline on stored channels")
    ev.add_argument("--config", help="key=value configuration file")
    ev.add_argument("--channels", required=True, help="stored ensemble file")
    ev.add_argument("--design", help="trained design file to score")
    ev.add_argument("--scheme", choices=SCHEME_TAGS,
                    default="conventional_no_mc",
                    help="baseline scheme when no design is given")
    ev.add_argument("--out", required=True, help="output record table")
    ev.set_defaults(func=_cmd_eval)

    sw = sub.add_parser("sweep", help="comparative sweep with table and figure")
    sw.add_argument("--config", help="key=value configuration file")
    sw.add_argument("--axis", required=True,
                    choices=("power_dbm", "n_ris_elements"),
                    help="sweep axis")
    sw.add_argument("--grid", help="comma-separated grid values (optional)")
    sw.add_argument("--out-dir", required=True,
                    help="directory for records.csv and records.svg")
    sw.set_defaults(func=_cmd_sweep)

    pl = sub.add_parser("plot", help="re-render a figure from a stored table")
    pl.add_argument("--records", required=True, help="record table to render")
    pl.add_argument("--out", required=True, help="output figure file")
    pl.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _RUNTIME_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
