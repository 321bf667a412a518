"""Declarative reproduction of the moment, ESS, convergence and runtime studies.

Random streams are keyed by content rather than by position, so a cell's
numbers do not change when the grid around it changes:

* scale matrix for ``(K, case)``:      ``RandomStream(seed, 0, (K, case))``
* exact-sampler cell ``(N, rep)``:     ``RandomStream(seed, 1, (N, rep))``
* SIR run ``r`` of cell ``(M, rep)``:  ``RandomStream(seed, 2, (M, rep, r))``

Config files are flat ``key = value`` text, one pair per line, ``#`` starts a
comment, list values are comma separated.  Keys are the field names of
:class:`ExperimentConfig`.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy
from numpy.typing import NDArray
from scipy import stats

from ._version import __version__
from .errors import MomentNonexistenceError, ParameterError
from .estimators import e1_sir, error_ep, moment_estimator, theoretical_moment_identity
from .exact import sample_siw_identity
from .params import SIWParams
from .randmat import RandomStream, sample_haar_orthogonal
from .sir import clip_size, sample_proposals, sample_siw_sir, sample_siw_sir_clipped

__all__ = [
    "KINDS",
    "DESK_GRID",
    "FULL_GRID",
    "ExperimentConfig",
    "CurveRecord",
    "gen_psi_case",
    "read_psi",
    "write_psi",
    "resolve_psi",
    "psi_from_spec",
    "run_moment_validation",
    "run_ess_table",
    "run_convergence_experiment",
    "summarize_curves",
    "loglog_slope",
    "trend_test",
    "run_runtime_benchmark",
    "write_rows",
    "write_manifest",
]

KINDS = ("moment-validation", "ess-table", "convergence-curve", "runtime")
DESK_GRID = (500, 1000, 2000, 4000, 8000)
FULL_GRID = tuple(range(500, 10001, 500))
PSI_SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    K: int
    nu: float
    psi_spec: str = "case1"
    M_grid: tuple[int, ...] = DESK_GRID
    N_rule: int = 5
    clip_exponent: float | None = None
    repetitions: int = 10
    seed: int = 0
    N_grid: tuple[int, ...] = (100, 1100, 2100)
    threads: int = 1

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if int(self.K) < 1:
            raise ParameterError("K must be positive")
        object.__setattr__(self, "M_grid", tuple(int(m) for m in self.M_grid))
        object.__setattr__(self, "N_grid", tuple(int(n) for n in self.N_grid))
        for name in ("M_grid", "N_grid"):
            grid = getattr(self, name)
            if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ParameterError(f"{name} must be a non-empty, strictly increasing list of positive integers")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be >= 1")
        if self.N_rule < 1:
            raise ParameterError("N_rule must be >= 1")
        if self.clip_exponent is not None and not 0.0 < self.clip_exponent <= 1.0:
            raise ParameterError("clip_exponent must lie in (0, 1]")
        _parse_psi_spec(self.psi_spec)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kinds = {f.name for f in fields(cls)}
        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"config line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ParameterError(f"config line {lineno}: unknown key {key!r}")
            try:
                values[key] = _coerce(key, value)
            except ValueError as exc:
                raise ParameterError(f"config line {lineno}: bad value for {key!r} ({exc})") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @property
    def psi_case(self) -> str:
        return _parse_psi_spec(self.psi_spec)[0]


def _coerce(key: str, value: str):
    if key in ("M_grid", "N_grid"):
        return tuple(int(v) for v in value.split(",") if v.strip())
    if key in ("K", "N_rule", "repetitions", "seed", "threads"):
        return int(value)
    if key == "nu":
        return float(value)
    if key == "clip_exponent":
        return None if value.lower() in ("", "none") else float(value)
    return value


def _parse_psi_spec(spec: str) -> tuple[str, Any]:
    if spec in ("case1", "case2"):
        return spec, int(spec[-1])
    if spec.startswith("identity:"):
        try:
            c = float(spec.split(":", 1)[1])
        except ValueError:
            raise ParameterError(f"bad identity scale in psi_spec {spec!r}") from None
        if c <= 0:
            raise ParameterError("identity scale must be positive")
        return "identity", c
    if spec.startswith("file:"):
        return "file", spec.split(":", 1)[1]
    raise ParameterError(f"psi_spec must be identity:<c>, case1, case2 or file:<path>, got {spec!r}")


@dataclass(frozen=True)
class CurveRecord:
    M: int
    repetition_index: int
    e1_sir: float
    sqrtM_e1: float
    ess_percent: float
    wall_time_s: float


def gen_psi_case(K: int, case: int, rng: RandomStream) -> NDArray[np.float64]:
    """Random scale matrix with Haar eigenvectors and the eigenvalue pattern of ``case``.

    Case 1 eigenvalues: ``{2, 1.01}`` plus ``K - 2`` draws of ``1 + U(0.01, 1)``.
    Case 2 eigenvalues: ``{1, 1.01}`` plus ``K - 2`` draws of ``U(0.01, 1)``.
    """
    K = int(K)
    if K < 2:
        raise ParameterError(f"case matrices need K >= 2, got {K}")
    if case not in (1, 2):
        raise ParameterError(f"case must be 1 or 2, got {case}")
    gen = rng.generator
    gamma = sample_haar_orthogonal(K, gen)
    u = gen.uniform(0.01, 1.0, size=K - 2)
    eigs = np.concatenate([[2.0, 1.01], u + 1.0]) if case == 1 else np.concatenate([[1.0, 1.01], u])
    psi = (gamma * eigs) @ gamma.T
    return 0.5 * (psi + psi.T)


def write_psi(psi: NDArray, path: str | Path) -> Path:
    """Write a matrix as K lines of K whitespace-separated decimals."""
    path = Path(path)
    np.savetxt(path, np.asarray(psi), fmt="%.17g", delimiter=" ")
    return path


def read_psi(path: str | Path) -> NDArray[np.float64]:
    """Read a scale matrix file; tiny asymmetries (<= 1e-8) are averaged away with a warning."""
    try:
        psi = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise ParameterError(f"{path}: not a whitespace-separated numeric matrix ({exc})") from None
    if psi.shape[0] != psi.shape[1]:
        raise ParameterError(f"{path}: expected a square matrix, got shape {psi.shape}")
    asym = float(np.max(np.abs(psi - psi.T)))
    if asym > PSI_SYMMETRY_TOL:
        raise ParameterError(f"{path}: matrix is not symmetric (max asymmetry {asym:.3g})")
    if asym > 0.0:
        warnings.warn(f"{path}: symmetrizing matrix (max asymmetry {asym:.3g})", RuntimeWarning, stacklevel=2)
        psi = 0.5 * (psi + psi.T)
    return psi


def psi_from_spec(
    spec: str, K: int | None, seed: int, out_dir: str | Path | None = None
) -> tuple[NDArray[np.float64], str]:
    """Scale matrix and label for a ``psi_spec`` string.

    ``K`` may be ``None`` for ``file:`` specs, where it is read from the file.
    Generated case matrices are saved to ``out_dir`` when one is given.
    """
    kind, arg = _parse_psi_spec(spec)
    if kind == "file":
        psi = read_psi(arg)
        if K is not None and psi.shape[0] != K:
            raise ParameterError(f"{arg}: matrix is {psi.shape[0]} x {psi.shape[0]} but K = {K}")
        return psi, f"file:{Path(arg).name}"
    if K is None:
        raise ParameterError(f"K is required for psi_spec {spec!r}")
    if kind == "identity":
        return arg * np.eye(K), f"identity({arg!r})"
    psi = gen_psi_case(K, arg, RandomStream(seed, 0, (K, arg)))
    if out_dir is not None:
        write_psi(psi, Path(out_dir) / f"psi_K{K}_case{arg}_seed{seed}.txt")
    return psi, kind


def resolve_psi(config: ExperimentConfig, out_dir: str | Path | None = None) -> tuple[NDArray[np.float64], str]:
    """Scale matrix and label for ``config``."""
    return psi_from_spec(config.psi_spec, config.K, config.seed, out_dir)


def _sir_stream(seed: int, M: int, rep: int, run: int) -> RandomStream:
    return RandomStream(seed, 2, (M, rep, run))


def _run_sir_cell(params, M, N, M_T, stream, threads, label):
    if M_T is None:
        return sample_siw_sir(params, M, N, stream, threads=threads, psi_label=label)
    return sample_siw_sir_clipped(params, M, M_T, N, stream, threads=threads, psi_label=label)


def run_moment_validation(config: ExperimentConfig) -> list[dict]:
    """Exact-sampler moment errors ``e_p`` for ``p`` in ``(-1, 1, 2)`` at every N of ``config.N_grid``.

    Each row reports the mean of ``e_p`` over ``config.repetitions`` runs;
    ``e_p`` is ``None`` when the moment does not exist for ``config.nu``.
    """
    kind, c = _parse_psi_spec(config.psi_spec)
    if kind != "identity":
        raise ParameterError("moment validation needs psi_spec = identity:<c>")
    rows = []
    for N in config.N_grid:
        errs: dict[int, list[float]] = {-1: [], 1: [], 2: []}
        for rep in range(config.repetitions):
            batch = sample_siw_identity(
                config.nu, c, config.K, N, RandomStream(config.seed, 1, (N, rep)), threads=config.threads
            )
            for p in errs:
                try:
                    truth = theoretical_moment_identity(config.nu, c, p, config.K)
                except MomentNonexistenceError:
                    continue
                errs[p].append(error_ep(moment_estimator(batch, p), truth))
        for p in (1, 2, -1):
            value = float(np.mean(errs[p])) if errs[p] else None
            rows.append({"nu": config.nu, "c": c, "K": config.K, "N": N, "p": p, "e_p": value})
    return rows


def run_ess_table(config: ExperimentConfig, out_dir: str | Path | None = None) -> list[dict]:
    """Mean ESS (percent of M) over repetitions for every M of ``config.M_grid``.

    Each repetition reuses the proposal stream of the matching convergence
    run, so for a fixed cell ESS is comparable across clip exponents.
    """
    psi, label = resolve_psi(config, out_dir)
    params = SIWParams(config.nu, psi)
    rows = []
    for M in config.M_grid:
        M_T = None if config.clip_exponent is None else clip_size(M, config.clip_exponent)
        values = []
        for rep in range(config.repetitions):
            batch = _run_sir_cell(
                params, M, config.N_rule * M, M_T, _sir_stream(config.seed, M, rep, 0), config.threads, label
            )
            values.append(batch.weights.ess_percent)
        rows.append(
            {
                "K": config.K,
                "nu": config.nu,
                "psi": label,
                "M": M,
                "M_T": M_T,
                "clip_exponent": config.clip_exponent,
                "mean_ess_percent": float(np.mean(values)),
            }
        )
    return rows


def run_convergence_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> list[CurveRecord]:
    """Two independent SIR runs per ``(M, repetition)``; records ``e1_sir`` and diagnostics.

    ``N = N_rule * M``.  ``ess_percent`` is the mean over the two runs and
    ``wall_time_s`` covers both runs plus the error computation.
    """
    psi, label = resolve_psi(config, out_dir)
    params = SIWParams(config.nu, psi)
    records = []
    for M in config.M_grid:
        N = config.N_rule * M
        M_T = None if config.clip_exponent is None else clip_size(M, config.clip_exponent)
        for rep in range(config.repetitions):
            t0 = time.perf_counter()
            a = _run_sir_cell(params, M, N, M_T, _sir_stream(config.seed, M, rep, 0), config.threads, label)
            b = _run_sir_cell(params, M, N, M_T, _sir_stream(config.seed, M, rep, 1), config.threads, label)
            e1 = e1_sir(a, b)
            elapsed = time.perf_counter() - t0
            records.append(
                CurveRecord(
                    M=M,
                    repetition_index=rep,
                    e1_sir=e1,
                    sqrtM_e1=math.sqrt(M) * e1,
                    ess_percent=0.5 * (a.weights.ess_percent + b.weights.ess_percent),
                    wall_time_s=elapsed,
                )
            )
    return records


def summarize_curves(records: Sequence[CurveRecord]) -> list[dict]:
    """Per-M mean and standard deviation across repetitions."""
    out = []
    for M in sorted({r.M for r in records}):
        rs = [r for r in records if r.M == M]
        e1 = np.array([r.e1_sir for r in rs])
        se = np.array([r.sqrtM_e1 for r in rs])
        ddof = 1 if len(rs) > 1 else 0
        out.append(
            {
                "M": M,
                "repetitions": len(rs),
                "e1_mean": float(e1.mean()),
                "e1_std": float(e1.std(ddof=ddof)),
                "sqrtM_e1_mean": float(se.mean()),
                "sqrtM_e1_std": float(se.std(ddof=ddof)),
                "ess_percent_mean": float(np.mean([r.ess_percent for r in rs])),
            }
        )
    return out


def loglog_slope(Ms: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(Ms)``."""
    return float(stats.linregress(np.log(Ms), np.log(values)).slope)


def trend_test(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Slope of ``y`` on ``x`` and the one-sided p-value against a positive slope."""
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    p_two = float(res.pvalue)
    p_pos = p_two / 2.0 if res.slope > 0 else 1.0 - p_two / 2.0
    return float(res.slope), p_pos


def run_runtime_benchmark(config: ExperimentConfig, out_dir: str | Path | None = None) -> list[dict]:
    """Mean wall-clock seconds over repetitions.

    With an identity scale matrix the exact sampler is timed over ``N_grid``.
    The SIR proposal stage (the only timed part of SIR) is timed over
    ``M_grid`` for every scale matrix.
    """
    psi, label = resolve_psi(config, out_dir)
    kind, c = _parse_psi_spec(config.psi_spec)
    rows = []
    if kind == "identity":
        for N in config.N_grid:
            times = []
            for rep in range(config.repetitions):
                t0 = time.perf_counter()
                sample_siw_identity(config.nu, c, config.K, N, RandomStream(config.seed, 1, (N, rep)), config.threads)
                times.append(time.perf_counter() - t0)
            rows.append({"algorithm": "exact", "K": config.K, "nu": config.nu, "psi": label, "size": N,
                         "seconds": float(np.mean(times))})
    params = SIWParams(config.nu, psi)
    for M in config.M_grid:
        times = []
        for rep in range(config.repetitions):
            t0 = time.perf_counter()
            sample_proposals(params, M, _sir_stream(config.seed, M, rep, 0).substream(0), config.threads)
            times.append(time.perf_counter() - t0)
        rows.append({"algorithm": "sir-proposal", "K": config.K, "nu": config.nu, "psi": label, "size": M,
                     "seconds": float(np.mean(times))})
    return rows


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows: Sequence[dict | CurveRecord], path: str | Path) -> Path:
    """Write dict rows (or records) as CSV with a header, floats in round-trip precision."""
    path = Path(path)
    dicts = [asdict(r) if isinstance(r, CurveRecord) else r for r in rows]
    header = list(dicts[0].keys()) if dicts else [f.name for f in fields(CurveRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d in dicts:
            w.writerow([_fmt(d[k]) for k in header])
    return path


def write_manifest(out_dir: str | Path, info: dict) -> Path:
    """Write ``manifest.json`` with ``info`` plus package and library versions."""
    path = Path(out_dir) / "manifest.json"
    payload = dict(info)
    payload["versions"] = {
        "siwsampler": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path
