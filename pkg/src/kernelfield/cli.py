"""Command-line front end: field synthesis, runs, hyperparameter-mismatch
sweeps, novelty-threshold tuning, and excitation checks.

Set ``KS_LOG`` (DEBUG/INFO/WARNING/ERROR) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    RunManifest,
    dump_config,
    load_config,
    with_epsilon_bar,
    with_estimator,
    with_seed,
)
from .estimator import DivergenceError
from .field import export_field, field_values, import_field, synthesize_field
from .geometry import lawnmower_path, rotated_axis_order
from .kernels import SingularGramError
from .simulation import SimConfig, SimResult, pe_margin, run_simulation
from .tuning import replay_admissions, tune_epsilon

log = logging.getLogger(__name__)

PAPER_FACTORS = (0.25, 1.0 / 3.0, 0.5, 2.0, 3.0, 4.0)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_run_artifacts(result: SimResult, out: Path, plots: bool = True) -> None:
    """All delimited outputs for one run, plus the report figures."""
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "metrics.csv",
        ["step", "t", "mean_basis_count", "max_fill_distance", "sup_error", "exchanges_cum"],
        [
            [r.step, _fmt(r.t), _fmt(r.mean_basis_count), _fmt(r.max_fill_distance),
             _fmt(r.sup_error), r.exchanges_cum]
            for r in result.records
        ],
    )
    _write_csv(
        out / "exchanges.csv",
        ["step", "agent_i", "agent_j", "payload_centers"],
        [[e.step, e.agent_i, e.agent_j, e.payload_centers] for e in result.exchange_log],
    )
    coord_names = [f"x{k + 1}" for k in range(result.surface_points.shape[1])]
    _write_csv(
        out / "error_surface.csv",
        coord_names + ["abs_error"],
        [
            [*(_fmt(c) for c in point), _fmt(err)]
            for point, err in zip(result.surface_points, result.surface_error)
        ],
    )
    _write_csv(
        out / "agent_steps.csv",
        ["step", "agent_id", *coord_names, "y", "residual", "novelty", "basis_size",
         "enriched", "interp_residual", "jitter"],
        [
            [s.step, s.agent_id, *(_fmt(c) for c in s.position), _fmt(s.y), _fmt(s.residual),
             _fmt(s.novelty), s.basis_size, int(s.enriched),
             "" if np.isnan(s.interp_residual) else _fmt(s.interp_residual), _fmt(s.jitter)]
            for s in result.step_logs
        ],
    )
    for agent in result.agents:
        _write_csv(
            out / f"centers_agent_{agent.id}.csv",
            coord_names + ["alpha", "sample"],
            [
                [*(_fmt(c) for c in center), _fmt(alpha), _fmt(sample)]
                for center, alpha, sample in zip(agent.centers, agent.coefficients, agent.samples)
            ],
        )
    if plots:
        from . import plots as figures

        figures.save_metrics_figure(result.records, out / "metrics.png")
        figures.save_error_surface_figure(result, out / "error_surface.png")


def _print_summary(result: SimResult) -> None:
    last = result.records[-1]
    print(
        f"final record: step={last.step} t={last.t:g} "
        f"mean_basis_count={last.mean_basis_count:g} "
        f"max_fill_distance={last.max_fill_distance:.6g} "
        f"sup_error={last.sup_error:.6g} exchanges_cum={last.exchanges_cum}"
    )
    print(f"total exchanged centers: {result.total_exchanged_centers}")


def _load(args) -> SimConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg


def cmd_synth_field(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = field_values(cfg.field)
    expansion = synthesize_field(cfg.field)
    path = out / "field.txt"
    export_field(path, expansion, values)
    print(f"wrote field artifact: {path} ({len(expansion)} centers)")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.of(args.config, cfg, out)
    (out / "manifest.ini").write_text(manifest.render(), encoding="utf-8")
    field = import_field(args.field)[0] if args.field else None
    try:
        result = run_simulation(cfg, field=field, parallel=args.parallel == "on", progress=True)
    except DivergenceError as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_run_artifacts(result, out, plots=not args.no_plots)
    print(f"run {manifest.run_id} complete; artifacts in {out}")
    _print_summary(result)
    return EXIT_OK


def _parse_factors(raw: str) -> list[float]:
    factors = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        factors.append(float(Fraction(token)) if "/" in token else float(token))
    if not factors:
        raise ValueError("empty factor list")
    return factors


def cmd_sweep(args) -> int:
    cfg = _load(args)
    factors = _parse_factors(args.factors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    field_path = out / "field.txt"
    export_field(field_path, synthesize_field(cfg.field), field_values(cfg.field))
    field = import_field(field_path)[0]
    rows = []
    per_factor_records = {}
    for factor in factors:
        sub_cfg = with_estimator(cfg, cfg.field.kernel.scaled(factor))
        if args.tune_centers:
            tuned = tune_epsilon(
                sub_cfg.estimator, sub_cfg.cover.subdomains, sub_cfg.resolutions,
                target=args.tune_centers, stages=None,
            )
            sub_cfg = with_epsilon_bar(sub_cfg, tuned.epsilon_bar)
            log.info("factor %g: tuned epsilon_bar=%.6g", factor, tuned.epsilon_bar)
        run_dir = out / f"c{factor:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "manifest.ini").write_text(
            RunManifest.of(args.config, sub_cfg, run_dir).render(), encoding="utf-8"
        )
        try:
            result = run_simulation(sub_cfg, field=field, parallel=args.parallel == "on")
        except DivergenceError as exc:
            print(f"factor {factor:g} diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        write_run_artifacts(result, run_dir, plots=not args.no_plots)
        first, last = result.records[0], result.records[-1]
        per_factor_records[factor] = result.records
        rows.append(
            [
                _fmt(factor), str(run_dir.name), _fmt(sub_cfg.stepper.epsilon_bar),
                _fmt(last.mean_basis_count), _fmt(first.sup_error), _fmt(last.sup_error),
                _fmt(last.sup_error / first.sup_error if first.sup_error > 0 else 0.0),
            ]
        )
        print(
            f"factor {factor:g}: first sup_error {first.sup_error:.6g}, "
            f"final {last.sup_error:.6g}"
        )
    _write_csv(
        out / "sweep_summary.csv",
        ["factor", "run_dir", "epsilon_bar", "final_mean_basis_count",
         "first_sup_error", "final_sup_error", "error_ratio"],
        rows,
    )
    if not args.no_plots:
        from . import plots as figures

        figures.save_sweep_figure(per_factor_records, out / "sweep_metrics.png")
    print(f"sweep complete; summary in {out / 'sweep_summary.csv'}")
    return EXIT_OK


def cmd_tune_epsilon(args) -> int:
    cfg = _load(args)
    stages = None if args.stages == 0 else args.stages
    result = tune_epsilon(
        cfg.estimator, cfg.cover.subdomains, cfg.resolutions,
        target=args.target, tol=args.tol, stages=stages,
    )
    print(f"epsilon_bar = {_fmt(result.epsilon_bar)}")
    print(f"admitted centers per agent: {list(result.counts)} (mean {result.mean_count:.1f})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        tuned_cfg = with_epsilon_bar(cfg, result.epsilon_bar)
        (out / "tuned.ini").write_text(dump_config(tuned_cfg), encoding="utf-8")
        print(f"wrote tuned config: {out / 'tuned.ini'}")
    return EXIT_OK


def cmd_pe_check(args) -> int:
    cfg = _load(args)
    rows = []
    print("agent  stage  resolution  centers  pe_margin")
    for i, sub in enumerate(cfg.cover.subdomains):
        seen = np.zeros((0, cfg.estimator.dim))
        for s, resolution in enumerate(cfg.resolutions):
            loop = lawnmower_path(sub, resolution, rotated_axis_order(i, sub.dim))
            seen = np.vstack([seen, loop])
            centers = replay_admissions(cfg.estimator, seen, cfg.stepper.epsilon_bar)
            beta = pe_margin(loop, centers, cfg.estimator, cfg.stepper.h)
            rows.append([i + 1, s + 1, _fmt(resolution), centers.shape[0], _fmt(beta)])
            print(f"{i + 1:5d}  {s + 1:5d}  {resolution:10g}  {centers.shape[0]:7d}  {beta:.6g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "pe_check.csv", ["agent", "stage", "resolution", "centers", "pe_margin"], rows)
        print(f"wrote {out / 'pe_check.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelfield",
        description="Decentralized kernel-expansion estimation of spatial fields",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="path to a sectioned config file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")

    p = sub.add_parser("synth-field", help="synthesize and export the field artifact")
    common(p)
    p.set_defaults(func=cmd_synth_field)

    p = sub.add_parser("run", help="execute one full estimation run")
    common(p)
    p.add_argument("--parallel", choices=("on", "off"), default="off")
    p.add_argument("--field", default=None, help="field artifact to load instead of synthesizing")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run once per hyperparameter scale factor")
    common(p)
    p.add_argument("--factors", default="1/4,1/3,1/2,2,3,4",
                   help="comma-separated scale factors (fractions allowed)")
    p.add_argument("--tune-centers", type=int, default=0,
                   help="tune epsilon_bar per factor toward this center budget (0 = off)")
    p.add_argument("--parallel", choices=("on", "off"), default="off")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune-epsilon", help="bisect the novelty threshold to a center budget")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--target", type=int, required=True, help="center budget per agent")
    p.add_argument("--tol", type=float, default=0.10)
    p.add_argument("--stages", type=int, default=2,
                   help="coarsest stages to replay (0 = full schedule)")
    p.add_argument("--out", default=None, help="write tuned.ini here")
    p.set_defaults(func=cmd_tune_epsilon)

    p = sub.add_parser("pe-check", help="excitation margins of the configured trajectories")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pe_check)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("KS_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularGramError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
