"""Competitor protocols: value perturbation, padding-and-sampling, and
single-bit randomized response over a sampled index."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Category,
    Dataset,
    category_counts,
    category_positions_by_user,
    category_size,
)
from .mechanisms import (
    OlhConfig,
    SwConfig,
    laplace_count,
    olh_debias,
    olh_estimate,
    olh_report,
    olh_sample_supports,
    piecewise,
    rr_bit,
    sw_report,
    sw_reconstruct,
    sw_support,
)

NVP_VARIANTS = ("LM", "PM", "SW")


def sw_bucket_count(d: int) -> int:
    """Reconstruction grid size for count distributions: d + 1, capped."""
    return d + 1 if d <= 1024 else 1024


def nvp_run(
    dataset: Dataset,
    category: Category | Sequence[int],
    epsilon: float,
    variant: str,
    rng: np.random.Generator,
) -> float:
    """Numerical value perturbation: each user perturbs their in-category
    count with a scalar mechanism, the collector sums.

    LM adds Laplace(d / eps) to the raw count. PM and SW feed the
    normalized count t/d through their mechanism; PM reports are summed and
    rescaled by d, SW reports are aggregated into a reconstructed count
    distribution whose mean is rescaled by n * d.
    """
    if variant not in NVP_VARIANTS:
        raise ValueError(f"unknown NVP variant {variant!r}; expected one of {NVP_VARIANTS}")
    t = category_counts(dataset, category)
    d = category_size(category)
    if variant == "LM":
        return float(laplace_count(t, d, epsilon, rng).sum())
    if variant == "PM":
        return d * float(piecewise(t / d, epsilon, rng).sum())
    cfg = SwConfig(epsilon=epsilon, buckets=sw_bucket_count(d))
    theta = sw_reconstruct(sw_report(t / d, epsilon, rng), cfg)
    return dataset.n * d * float((theta * sw_support(cfg)).sum())


def rr_index_run(
    dataset: Dataset,
    category: Category | Sequence[int],
    epsilon: float,
    rng: np.random.Generator,
) -> float:
    """Randomized response on one uniformly sampled encoded bit per user.

    The sampled bit is 1 with probability t/d, so the debiased mean of the
    perturbed bits rescaled by n * d estimates the query exactly, with no
    special treatment of all-one or all-zero vectors.
    """
    t = category_counts(dataset, category)
    d = category_size(category)
    sampled = (rng.random(dataset.n) < t / d).astype(np.int64)
    reported = rr_bit(sampled, epsilon, rng)
    p = math.exp(epsilon) / (1.0 + math.exp(epsilon))
    f_hat = (float(reported.mean()) - (1.0 - p)) / (2.0 * p - 1.0)
    return dataset.n * d * f_hat


@dataclass(frozen=True)
class PspRunResult:
    estimate: float
    eta: int  # padding length chosen in phase 1


def psp_run(
    dataset: Dataset,
    category: Category | Sequence[int],
    epsilon: float,
    rng: np.random.Generator,
    split_rng: np.random.Generator | None = None,
    split_fraction: float = 0.1,
    percentile: float = 0.9,
    hashed_reports: bool = False,
) -> PspRunResult:
    """Padding-sample-perturb in two phases.

    Phase 1: a pilot fraction reports its in-category count through local
    hashing over {0..d}; the padding length eta is the smallest count whose
    estimated CDF (estimates clipped at zero, then normalized) reaches the
    percentile. Phase 2: the remaining users pad their in-category items
    with position-deterministic dummy symbols up to eta (or truncate to a
    uniform eta-subset), sample one element, and report it through local
    hashing over the d + eta symbols. Per-item count estimates for the d
    real symbols are scaled by eta, summed, and rescaled to the full
    population.

    hashed_reports switches from the exact support-count sampler to the
    report-level hashing pipeline (slower, same distribution).
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    if not 0.0 < percentile <= 1.0:
        raise ValueError("percentile must lie in (0, 1]")
    n = dataset.n
    d = category_size(category)
    t = category_counts(dataset, category)
    cfg = OlhConfig(epsilon)

    chooser = split_rng if split_rng is not None else rng
    pilot_size = max(1, int(round(split_fraction * n)))
    if pilot_size >= n:
        raise ValueError("split leaves no users for the main phase")
    perm = chooser.permutation(n)
    pilot, main = perm[:pilot_size], perm[pilot_size:]

    def olh_counts(values: np.ndarray, k: int) -> np.ndarray:
        if hashed_reports:
            seeds, ys = olh_report(values, k, cfg, rng)
            return olh_estimate(seeds, ys, k, cfg)
        return olh_debias(olh_sample_supports(values, k, cfg, rng), values.size, cfg)

    est1 = np.clip(olh_counts(t[pilot], d + 1), 0.0, None)
    total = est1.sum()
    if total <= 0:
        warnings.warn("padding length fell back to 1: phase 1 estimates were all zero")
        eta = 1
    else:
        cdf = np.cumsum(est1) / total
        eta = int(np.searchsorted(cdf, percentile - 1e-12))
        eta = min(eta, d)
        if eta == 0:
            warnings.warn("padding length resolved to 0; clamping to 1")
            eta = 1

    t_main = t[main]
    u = rng.integers(0, eta, size=main.size)
    indptr, positions = category_positions_by_user(dataset, category)
    # Uniform element of the padded-or-truncated set: users with t >= eta
    # land on a uniformly chosen held item, users with t < eta hit their
    # u-th item when u < t and the (u - t)-th dummy symbol otherwise.
    over = t_main >= eta
    j = u.copy()
    if over.any():
        j[over] = rng.integers(0, t_main[over])
    is_real = (u < t_main) | over
    symbols = np.empty(main.size, dtype=np.int64)
    real_users = main[is_real]
    symbols[is_real] = positions[indptr[real_users] + j[is_real]]
    symbols[~is_real] = d + (u[~is_real] - t_main[~is_real])

    est2 = olh_counts(symbols, d + eta)
    estimate = eta * float(est2[:d].sum()) / (1.0 - split_fraction)
    return PspRunResult(estimate=estimate, eta=eta)
