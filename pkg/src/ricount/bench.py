"""Experiment harness: flat-file configs, deterministic runs, CSV output.

Every estimate is a pure function of (config, master seed): each
(trial, method, epsilon) cell derives its own counter-based RNG stream, and
the per-trial cohort split stream is shared by all methods of a trial so
two-phase methods see the same pilot users. Results are emitted in config
order regardless of execution order or worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baselines import nvp_run, psp_run, rr_index_run
from .core import (
    Category,
    Dataset,
    category_counts,
    category_size,
    derive_generator,
    generate_synthetic,
    load_transactions,
    true_subset_count,
)
from .cri import CriParams, cri_aggregate, cri_sample_reports
from .criad import criad_run

ALL_METHODS = ("CRIAD", "CRI", "RR", "NVP-LM", "NVP-PM", "NVP-SW", "PSP")

# spawn-key tags keeping the dataset, split and cell streams disjoint
_DATA_TAG = 101
_SPLIT_TAG = 102
_CELL_TAG = 103


class ConfigError(Exception):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str  # "synthetic" or a transactions file path
    domain_size: int
    category_lo: int
    category_hi: int
    methods: tuple[str, ...]
    epsilons: tuple[float, ...]
    trials: int
    seed: int
    out: str = "results"
    threads: int = 1
    synthetic_n: int = 100_000
    synthetic_mean_set_size: float = 1.3
    synthetic_shape: str = "zipf"
    synthetic_zipf_a: float = 1.2
    synthetic_seed: int | None = None

    def validate(self) -> None:
        if self.domain_size < 1:
            raise ConfigError("domain_size must be >= 1")
        if not 1 <= self.category_lo <= self.category_hi <= self.domain_size:
            raise ConfigError(
                f"category [{self.category_lo}, {self.category_hi}] must lie "
                f"inside 1..{self.domain_size}"
            )
        if not self.methods:
            raise ConfigError("methods must not be empty")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {ALL_METHODS}")
        if not self.epsilons:
            raise ConfigError("epsilons must not be empty")
        if any(not (e > 0) for e in self.epsilons):
            raise ConfigError("all epsilons must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.dataset == "synthetic":
            if self.synthetic_n < 2:
                raise ConfigError("synthetic_n must be >= 2")
            if self.synthetic_shape not in ("zipf", "uniform"):
                raise ConfigError("synthetic_shape must be zipf or uniform")
        d = self.category_hi - self.category_lo + 1
        if "CRI" in self.methods:
            cost = math.log(d - 1) if d > 1 else 0.0
            bad = [e for e in self.epsilons if e <= cost]
            if bad:
                raise ConfigError(
                    f"method CRI needs epsilon > ln(d - 1) = {cost:.6g} for "
                    f"d = {d}; offending epsilons: {bad}"
                )

    @property
    def category(self) -> Category:
        return Category(self.category_lo, self.category_hi)


_CONFIG_TYPES = {
    "dataset": str,
    "domain_size": int,
    "category_lo": int,
    "category_hi": int,
    "trials": int,
    "seed": int,
    "out": str,
    "threads": int,
    "synthetic_n": int,
    "synthetic_mean_set_size": float,
    "synthetic_shape": str,
    "synthetic_zipf_a": float,
    "synthetic_seed": int,
}

_REQUIRED_KEYS = (
    "dataset",
    "domain_size",
    "category_lo",
    "category_hi",
    "methods",
    "epsilons",
    "trials",
    "seed",
)


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read a flat key = value config file.

    Blank lines and lines starting with # are skipped; methods and epsilons
    are comma-separated lists. Unknown keys are rejected.
    """
    values: dict[str, object] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "methods":
            values[key] = tuple(tok.strip() for tok in val.split(",") if tok.strip())
        elif key == "epsilons":
            try:
                values[key] = tuple(float(tok) for tok in val.split(",") if tok.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad epsilon list {val!r}") from exc
        elif key in _CONFIG_TYPES:
            try:
                values[key] = _CONFIG_TYPES[key](val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    missing = [k for k in _REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing required keys: {', '.join(missing)}")
    cfg = ExperimentConfig(**values)  # type: ignore[arg-type]
    cfg.validate()
    return cfg


def config_template(cfg: ExperimentConfig) -> str:
    """Render a config back to the flat text format."""
    lines = [
        "# experiment configuration",
        f"dataset = {cfg.dataset}",
        f"domain_size = {cfg.domain_size}",
        f"category_lo = {cfg.category_lo}",
        f"category_hi = {cfg.category_hi}",
        f"methods = {','.join(cfg.methods)}",
        f"epsilons = {','.join(repr(e) for e in cfg.epsilons)}",
        f"trials = {cfg.trials}",
        f"seed = {cfg.seed}",
        f"out = {cfg.out}",
        f"threads = {cfg.threads}",
    ]
    if cfg.dataset == "synthetic":
        lines += [
            f"synthetic_n = {cfg.synthetic_n}",
            f"synthetic_mean_set_size = {cfg.synthetic_mean_set_size!r}",
            f"synthetic_shape = {cfg.synthetic_shape}",
            f"synthetic_zipf_a = {cfg.synthetic_zipf_a!r}",
        ]
        if cfg.synthetic_seed is not None:
            lines.append(f"synthetic_seed = {cfg.synthetic_seed}")
    return "\n".join(lines) + "\n"


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    """Materialize the configured dataset (synthetic or from disk)."""
    if cfg.dataset == "synthetic":
        seed = cfg.synthetic_seed if cfg.synthetic_seed is not None else cfg.seed
        return generate_synthetic(
            cfg.synthetic_n,
            cfg.domain_size,
            cfg.synthetic_mean_set_size,
            shape=cfg.synthetic_shape,
            zipf_a=cfg.synthetic_zipf_a,
            rng=derive_generator(seed, _DATA_TAG),
        )
    try:
        return load_transactions(cfg.dataset, cfg.domain_size)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load dataset {cfg.dataset}: {exc}") from exc


@dataclass(frozen=True)
class EstimateRecord:
    method: str
    epsilon: float
    trial: int
    estimate: float
    truth: float
    relative_error: float


def _run_cell(
    dataset: Dataset,
    category: Category,
    method: str,
    epsilon: float,
    rng: np.random.Generator,
    split_rng: np.random.Generator,
) -> float:
    if method == "CRIAD":
        return criad_run(dataset, category, epsilon, rng, split_rng=split_rng).estimate
    if method == "CRI":
        params = CriParams(d=category_size(category), epsilon=epsilon)
        bits, flags = cri_sample_reports(category_counts(dataset, category), params, rng)
        return cri_aggregate(bits, flags, params)
    if method == "RR":
        return rr_index_run(dataset, category, epsilon, rng)
    if method.startswith("NVP-"):
        return nvp_run(dataset, category, epsilon, method[4:], rng)
    if method == "PSP":
        return psp_run(dataset, category, epsilon, rng, split_rng=split_rng).estimate
    raise ConfigError(f"unknown method {method!r}")


_WORKER_STATE: dict = {}


def _worker_init(dataset: Dataset, category: Category, seed: int) -> None:
    _WORKER_STATE["dataset"] = dataset
    _WORKER_STATE["category"] = category
    _WORKER_STATE["seed"] = seed


def _worker_cell(job: tuple[int, str, int, float, int]) -> tuple[tuple[int, int, int], float]:
    mi, method, ei, epsilon, trial = job
    seed = _WORKER_STATE["seed"]
    rng = derive_generator(seed, _CELL_TAG, trial, mi, ei)
    split_rng = derive_generator(seed, _SPLIT_TAG, trial)
    est = _run_cell(
        _WORKER_STATE["dataset"], _WORKER_STATE["category"], method, epsilon, rng, split_rng
    )
    return (mi, ei, trial), est


def run_experiment(
    cfg: ExperimentConfig, dataset: Dataset | None = None
) -> list[EstimateRecord]:
    """Run all (method, epsilon, trial) cells and return ordered records.

    Output order is methods in config order, then epsilons in config order,
    then trials ascending, independent of thread count.
    """
    cfg.validate()
    if dataset is None:
        dataset = load_dataset(cfg)
    category = cfg.category
    category.validate(dataset.domain)
    truth = float(true_subset_count(dataset, category))
    if truth == 0:
        warnings.warn(
            "true count is zero: relative_error columns hold absolute errors"
        )

    jobs = [
        (mi, method, ei, epsilon, trial)
        for mi, method in enumerate(cfg.methods)
        for ei, epsilon in enumerate(cfg.epsilons)
        for trial in range(cfg.trials)
    ]
    estimates: dict[tuple[int, int, int], float] = {}
    if cfg.threads > 1:
        pool = ProcessPoolExecutor(
            max_workers=cfg.threads,
            mp_context=get_context("fork"),
            initializer=_worker_init,
            initargs=(dataset, category, cfg.seed),
        )
        with pool:
            for key, est in pool.map(_worker_cell, jobs, chunksize=16):
                estimates[key] = est
    else:
        _worker_init(dataset, category, cfg.seed)
        for job in jobs:
            key, est = _worker_cell(job)
            estimates[key] = est

    records = []
    for mi, method in enumerate(cfg.methods):
        for ei, epsilon in enumerate(cfg.epsilons):
            for trial in range(cfg.trials):
                est = estimates[(mi, ei, trial)]
                err = abs(est - truth) / truth if truth > 0 else abs(est - truth)
                records.append(
                    EstimateRecord(
                        method=method,
                        epsilon=epsilon,
                        trial=trial,
                        estimate=est,
                        truth=truth,
                        relative_error=err,
                    )
                )
    return records


def mre(errors: Iterable[float]) -> float:
    """Mean relative error over a collection of per-trial errors."""
    errs = list(errors)
    if not errs:
        raise ValueError("mre of an empty collection")
    return float(np.mean(errs))


@dataclass(frozen=True)
class SummaryRow:
    method: str
    epsilon: float
    mre: float
    std: float


def summarize(records: Sequence[EstimateRecord]) -> list[SummaryRow]:
    """Per (method, epsilon) mean and sample std of the relative errors,
    in first-appearance order."""
    order: list[tuple[str, float]] = []
    groups: dict[tuple[str, float], list[float]] = {}
    for rec in records:
        key = (rec.method, rec.epsilon)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec.relative_error)
    rows = []
    for method, epsilon in order:
        errs = np.array(groups[(method, epsilon)])
        std = float(errs.std(ddof=1)) if errs.size > 1 else 0.0
        rows.append(SummaryRow(method=method, epsilon=epsilon, mre=float(errs.mean()), std=std))
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results(records: Sequence[EstimateRecord], out_dir: str | Path) -> tuple[Path, Path]:
    """Write results.csv and summary.csv; returns their paths.

    Rows keep the deterministic record order and floats use shortest
    round-trip formatting, so identical (config, seed) runs produce
    byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    summary_path = out / "summary.csv"
    with open(results_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,epsilon,trial,estimate,truth,relative_error\n")
        for r in records:
            fh.write(
                f"{r.method},{_fmt(r.epsilon)},{r.trial},{_fmt(r.estimate)},"
                f"{_fmt(r.truth)},{_fmt(r.relative_error)}\n"
            )
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,epsilon,mre,std\n")
        for row in summarize(records):
            fh.write(f"{row.method},{_fmt(row.epsilon)},{_fmt(row.mre)},{_fmt(row.std)}\n")
    return results_path, summary_path


def param_study(
    dataset: Dataset,
    category: Category,
    epsilon: float,
    repeats: int,
    seed: int,
    split_fraction: float = 0.1,
    s_max: int = 64,
) -> dict:
    """Tabulate which (m, s, g) the pipeline selects over repeated runs."""
    from .criad import estimate_pi_pipeline, select_params

    d = category_size(category)
    counts: dict = {}
    for rep in range(repeats):
        rng = derive_generator(seed, _CELL_TAG, rep)
        split_rng = derive_generator(seed, _SPLIT_TAG, rep)
        pi_hat, mask = estimate_pi_pipeline(
            dataset, category, epsilon, rng, split_fraction, split_rng
        )
        triple = select_params(pi_hat, d, epsilon, int(mask.sum()), s_max)
        counts[triple] = counts.get(triple, 0) + 1
    return counts
