"""Command-line interface.

Exit codes: 0 on success, 1 on a parameter or usage error, 2 on an I/O error.
The default output directory is taken from ``$SIW_OUT_DIR`` (else ``siw-out``).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .batch import write_batch
from .errors import SIWError
from .exact import sample_siw_identity
from .experiments import (
    DESK_GRID,
    FULL_GRID,
    ExperimentConfig,
    psi_from_spec,
    run_convergence_experiment,
    run_ess_table,
    run_moment_validation,
    run_runtime_benchmark,
    summarize_curves,
    write_manifest,
    write_rows,
)
from .params import SIWParams
from .randmat import RandomStream
from .sir import clip_size, sample_siw_sir, sample_siw_sir_clipped, write_weight_diagnostics

OUT_DIR_ENV = "SIW_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (random if omitted; always printed)")
    p.add_argument(
        "--out-dir",
        default=os.environ.get(OUT_DIR_ENV, "siw-out"),
        help=f"output directory (default: ${OUT_DIR_ENV} or ./siw-out)",
    )
    p.add_argument("--threads", type=int, default=1, help="worker threads for sampling (default 1)")


def _psi_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--c", type=float, help="use psi = c * I_K")
    g.add_argument("--psi-file", help="text file with K rows of K whitespace-separated numbers")
    g.add_argument("--case", type=int, choices=(1, 2), help="generate a random Case 1 / Case 2 scale matrix")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="siw", description="Samplers for the Shrinkage Inverse-Wishart distribution (b = 1).")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="exact sampling with psi = c I")
    p.add_argument("--K", type=int, required=True, help="dimension")
    p.add_argument("--nu", type=float, required=True, help="degree of freedom (> 1)")
    p.add_argument("--c", type=float, required=True, help="scale c > 0 of psi = c I")
    p.add_argument("--N", type=int, required=True, help="number of samples")
    _common(p)

    p = sub.add_parser("sample-sir", help="SIR sampling for a general psi, optionally with weight clipping")
    p.add_argument("--K", type=int, help="dimension (inferred from --psi-file)")
    p.add_argument("--nu", type=float, required=True, help="degree of freedom (> 1)")
    _psi_source(p)
    p.add_argument("--M", type=int, required=True, help="number of proposal draws")
    p.add_argument("--N", type=int, help="number of output samples (default 5 * M)")
    p.add_argument("--mt-exponent", type=float, help="clip the ceil(M**e) largest weights")
    _common(p)

    p = sub.add_parser("ess", help="mean ESS table over a grid of M")
    _experiment_flags(p, clip=False)

    p = sub.add_parser("verify-moments", help="moment errors of the exact sampler against closed forms")
    p.add_argument("--config", help="experiment config file (overrides the other flags)")
    p.add_argument("--K", type=int, help="dimension")
    p.add_argument("--nu", type=float, help="degree of freedom")
    p.add_argument("--c", type=float, default=1.0, help="scale c of psi = c I (default 1)")
    p.add_argument("--N", type=int, nargs="+", default=[100, 1100, 2100], help="sample sizes")
    p.add_argument("--reps", type=int, default=1, help="repetitions averaged per cell (default 1)")
    _common(p)

    p = sub.add_parser("convergence", help="e1_SIR curves over a grid of M with N = 5 M")
    _experiment_flags(p, clip=True)

    p = sub.add_parser("runtime", help="wall-clock timings of the exact sampler and the SIR proposal stage")
    p.add_argument("--config", help="experiment config file (overrides the other flags)")
    p.add_argument("--K", type=int, help="dimension")
    p.add_argument("--nu", type=float, help="degree of freedom")
    _psi_source_optional(p)
    p.add_argument("--N", type=int, nargs="+", default=[100, 1100, 2100], help="exact-sampler sizes")
    p.add_argument("--M", type=int, nargs="+", help="proposal sizes (default: desk grid)")
    p.add_argument("--full", action="store_true", help="use the 20-point grid 500..10000")
    p.add_argument("--reps", type=int, default=10, help="repetitions averaged per cell (default 10)")
    _common(p)
    return parser


def _psi_source_optional(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--c", type=float, help="use psi = c * I_K")
    g.add_argument("--psi-file", help="text file with K rows of K whitespace-separated numbers")
    g.add_argument("--case", type=int, choices=(1, 2), help="generate a random Case 1 / Case 2 scale matrix")


def _experiment_flags(p: argparse.ArgumentParser, clip: bool) -> None:
    p.add_argument("--config", help="experiment config file (overrides the other flags)")
    p.add_argument("--K", type=int, help="dimension")
    p.add_argument("--nu", type=float, help="degree of freedom")
    _psi_source_optional(p)
    p.add_argument("--M", type=int, nargs="+", help="proposal sizes (default: desk grid 500 1000 2000 4000 8000)")
    p.add_argument("--full", action="store_true", help="use the 20-point grid 500..10000")
    p.add_argument("--reps", type=int, default=10, help="repetitions per cell (default 10)")
    if clip:
        p.add_argument("--mt-exponent", type=float, help="clip the ceil(M**e) largest weights")
    _common(p)


def _psi_spec(args) -> str:
    if getattr(args, "psi_file", None):
        return f"file:{args.psi_file}"
    if getattr(args, "case", None):
        return f"case{args.case}"
    if getattr(args, "c", None) is not None:
        return f"identity:{args.c!r}"
    raise UsageError("one of --c, --psi-file, --case is required")


def _seed(args) -> int:
    if args.seed is None:
        return int(np.random.SeedSequence().entropy % 2**64)
    return args.seed


def _config(args, kind: str, seed: int) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        print(f"config seed: {cfg.seed}")
        return cfg
    if args.K is None or args.nu is None:
        raise UsageError("--K and --nu are required unless --config is given")
    kw = {"kind": kind, "K": args.K, "nu": args.nu, "seed": seed, "threads": args.threads}
    if kind == "moment-validation":
        kw.update(psi_spec=f"identity:{args.c!r}", N_grid=tuple(args.N), repetitions=args.reps)
    else:
        kw["psi_spec"] = _psi_spec(args)
        kw["repetitions"] = args.reps
        kw["M_grid"] = tuple(args.M) if args.M else (FULL_GRID if args.full else DESK_GRID)
        if kind == "runtime":
            kw["N_grid"] = tuple(args.N)
        if getattr(args, "mt_exponent", None) is not None:
            kw["clip_exponent"] = args.mt_exponent
    return ExperimentConfig(**kw)


def _cmd_sample(args, seed, out: Path) -> dict:
    batch = sample_siw_identity(args.nu, args.c, args.K, args.N, RandomStream(seed), threads=args.threads)
    files = write_batch(batch, out / "batch.csv")
    return {"files": [p.name for p in files]}


def _cmd_sample_sir(args, seed, out: Path) -> dict:
    psi, label = psi_from_spec(_psi_spec(args), args.K, seed, out)
    params = SIWParams(args.nu, psi)
    N = args.N if args.N is not None else 5 * args.M
    rng = RandomStream(seed)
    if args.mt_exponent is None:
        batch = sample_siw_sir(params, args.M, N, rng, threads=args.threads, psi_label=label)
    else:
        M_T = clip_size(args.M, args.mt_exponent)
        batch = sample_siw_sir_clipped(params, args.M, M_T, N, rng, threads=args.threads, psi_label=label)
    files = [*write_batch(batch, out / "batch.csv"), *write_weight_diagnostics(batch.weights, out / "weights.csv")]
    w = batch.weights
    print(f"ESS: {w.ess:.6g} ({w.ess_percent:.2f}% of M = {w.M})" + (f", M_T = {w.clip_threshold_index}" if w.clipped else ""))
    return {"files": [p.name for p in files], "ESS_percent": w.ess_percent}


def _cmd_verify_moments(args, seed, out: Path) -> dict:
    cfg = _config(args, "moment-validation", seed)
    rows = run_moment_validation(cfg)
    write_rows(rows, out / "moments.csv")
    for r in rows:
        val = "unavailable" if r["e_p"] is None else f"{r['e_p']:.6g}"
        print(f"K={r['K']} N={r['N']} p={r['p']:>2}  e_p={val}")
    return {"config": asdict(cfg), "seed": cfg.seed, "files": ["moments.csv"]}


def _cmd_ess(args, seed, out: Path) -> dict:
    cfg = _config(args, "ess-table", seed)
    rows = run_ess_table(cfg, out)
    write_rows(rows, out / "ess.csv")
    for r in rows:
        print(f"M={r['M']:>6}  mean ESS = {r['mean_ess_percent']:.2f}%")
    return {"config": asdict(cfg), "seed": cfg.seed, "files": ["ess.csv"]}


def _cmd_convergence(args, seed, out: Path) -> dict:
    cfg = _config(args, "convergence-curve", seed)
    records = run_convergence_experiment(cfg, out)
    rows = [asdict(r) for r in records]
    write_rows([{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows], out / "curves.csv")
    write_rows([{k: r[k] for k in ("M", "repetition_index", "wall_time_s")} for r in rows], out / "curve_timings.csv")
    summary = summarize_curves(records)
    write_rows(summary, out / "summary.csv")
    for r in summary:
        print(f"M={r['M']:>6}  e1 = {r['e1_mean']:.4g} +/- {r['e1_std']:.2g}  sqrt(M) e1 = {r['sqrtM_e1_mean']:.4g}"
              f"  ESS = {r['ess_percent_mean']:.2f}%")
    return {"config": asdict(cfg), "seed": cfg.seed, "files": ["curves.csv", "curve_timings.csv", "summary.csv"]}


def _cmd_runtime(args, seed, out: Path) -> dict:
    if args.config is None and args.c is None and args.psi_file is None and args.case is None:
        args.c = 1.0
    cfg = _config(args, "runtime", seed)
    rows = run_runtime_benchmark(cfg, out)
    write_rows(rows, out / "runtime.csv")
    for r in rows:
        print(f"{r['algorithm']:>12}  K={r['K']}  size={r['size']:>6}  {r['seconds']:.4f} s")
    return {"config": asdict(cfg), "seed": cfg.seed, "files": ["runtime.csv"]}


COMMANDS = {
    "sample": _cmd_sample,
    "sample-sir": _cmd_sample_sir,
    "ess": _cmd_ess,
    "verify-moments": _cmd_verify_moments,
    "convergence": _cmd_convergence,
    "runtime": _cmd_runtime,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"siw: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        seed = _seed(args)
        print(f"seed: {seed}")
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        info = COMMANDS[args.command](args, seed, out)
        argv_list = sys.argv[1:] if argv is None else list(argv)
        write_manifest(out, {"command": args.command, "argv": argv_list, "seed": seed, **info})
    except UsageError as exc:
        print(f"siw: error: {exc}", file=sys.stderr)
        return 1
    except SIWError as exc:
        print(f"siw: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"siw: I/O error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote results to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
