"""Grouped random-index protocol with dummy padding and suppression.

Users partition the category's d positions into g equal blocks, sample one
block, append m always-one dummy bits, suppress ones down to at least m
zeros when needed, and report s positions sampled without replacement from
the d/g + m augmented bits. The collector rescales the observed ones. The
privacy cost is ln(C(d/g, s) / C(m, s)) because the most and least revealing
inputs differ only in how many ones the sampler can hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Category, Dataset, block_counts, category_counts, category_size
from .mechanisms import SwConfig, sw_report, sw_reconstruct, sw_support


@dataclass(frozen=True)
class ParamTriple:
    """Dummy count m, sample size s and group count g."""

    m: int
    s: int
    g: int

    def __post_init__(self) -> None:
        if self.g < 1 or self.s < 1 or self.m < self.s:
            raise ValueError(f"need 1 <= s <= m and g >= 1, got {self}")


def validate_triple(d: int, triple: ParamTriple) -> int:
    """Check the triple against a category size; returns block length d/g."""
    if d < 1:
        raise ValueError(f"category size must be >= 1, got {d}")
    if d % triple.g:
        raise ValueError(f"group count {triple.g} does not divide d = {d}")
    block = d // triple.g
    if triple.m > block:
        raise ValueError(f"dummy count {triple.m} exceeds block length {block}")
    return block


def implied_epsilon(d: int, triple: ParamTriple) -> float:
    """The exact privacy level ln(C(d/g, s) / C(m, s)), computed in log space."""
    block = validate_triple(d, triple)
    return (
        math.lgamma(block + 1)
        - math.lgamma(triple.s + 1)
        - math.lgamma(block - triple.s + 1)
    ) - (
        math.lgamma(triple.m + 1)
        - math.lgamma(triple.s + 1)
        - math.lgamma(triple.m - triple.s + 1)
    )


def contiguous_partition(d: int, g: int) -> np.ndarray:
    """Position-to-block map assigning runs of d/g adjacent positions."""
    if d % g:
        raise ValueError(f"group count {g} does not divide d = {d}")
    return np.repeat(np.arange(g), d // g)


def shuffled_partition(d: int, g: int, seed: int) -> np.ndarray:
    """A seeded random balanced partition, identical for every user."""
    base = contiguous_partition(d, g)
    return np.random.default_rng(seed).permutation(base)


@dataclass(frozen=True)
class CriadReport:
    bits: np.ndarray  # the s sampled augmented bits, in sampled order


def criad_client(
    vector: np.ndarray,
    triple: ParamTriple,
    rng: np.random.Generator,
    position_to_block: np.ndarray | None = None,
) -> CriadReport:
    """Perturb one user's encoded vector into an s-bit report."""
    v = np.asarray(vector)
    block = validate_triple(v.size, triple)
    r = int(rng.integers(triple.g))
    if position_to_block is None:
        bits = v[r * block : (r + 1) * block]
    else:
        bits = v[np.asarray(position_to_block) == r]
    padded = np.concatenate([bits.astype(np.uint8), np.ones(triple.m, dtype=np.uint8)])
    zeros = padded.size - int(padded.sum())
    if zeros < triple.m:
        ones_at = np.flatnonzero(padded)
        drop = rng.choice(ones_at, size=triple.m - zeros, replace=False)
        padded[drop] = 0
    picked = rng.choice(padded.size, size=triple.s, replace=False)
    return CriadReport(bits=padded[picked])


def criad_sample_ones(
    block_ones: np.ndarray, d: int, triple: ParamTriple, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized client channel: per-user sampled-block ones counts to the
    number of ones among the s reported bits.

    After padding and suppression a user's augmented vector holds exactly
    a = m + min(t, d/g - m) ones, so the reported ones count is
    hypergeometric; sampling it directly is equivalent to materializing the
    report and summing.
    """
    block = validate_triple(d, triple)
    t = np.asarray(block_ones, dtype=np.int64)
    if t.size and (t.min() < 0 or t.max() > block):
        raise ValueError("block ones counts must lie in [0, d/g]")
    good = triple.m + np.minimum(t, block - triple.m)
    return rng.hypergeometric(good, block + triple.m - good, triple.s)


def criad_estimate_from_ones(total_ones: float, n: int, d: int, triple: ParamTriple) -> float:
    """The collector's rescaled estimate from the summed reported ones."""
    validate_triple(d, triple)
    if n < 1:
        raise ValueError("need at least one report")
    scale = (d + triple.g * triple.m) / triple.s
    return scale * float(total_ones) - float(n) * triple.m * triple.g


def criad_aggregate(
    reports: Sequence[CriadReport] | np.ndarray, n: int, d: int, triple: ParamTriple
) -> float:
    """Aggregate client reports (or a stacked (n, s) bit array)."""
    if isinstance(reports, np.ndarray):
        total = int(reports.sum())
    else:
        total = sum(int(r.bits.sum()) for r in reports)
    return criad_estimate_from_ones(total, n, d, triple)


def exact_report_distribution(block_ones: int, d: int, triple: ParamTriple) -> np.ndarray:
    """Exact pmf of the reported ones count for a sampled-block ones count."""
    block = validate_triple(d, triple)
    if not 0 <= block_ones <= block:
        raise ValueError("block ones count out of range")
    good = triple.m + min(block_ones, block - triple.m)
    bad = block + triple.m - good
    denom = math.comb(block + triple.m, triple.s)
    return np.array(
        [
            math.comb(good, k) * math.comb(bad, triple.s - k) / denom
            for k in range(triple.s + 1)
        ]
    )


def expected_bias(pi: np.ndarray, d: int, triple: ParamTriple, n: int) -> float:
    """Expected total undercount caused by suppression.

    Users with t > d - mg ones lose t - (d - mg) expected contribution;
    weighting by the population fractions pi gives the bias of the
    aggregate. Zero whenever pi has no mass above d - mg.
    """
    validate_triple(d, triple)
    pi = np.asarray(pi, dtype=np.float64)
    if pi.size != d + 1:
        raise ValueError(f"pi must have length d + 1 = {d + 1}")
    cut = d - triple.m * triple.g
    t = np.arange(d + 1)
    return float(n) * float((pi * np.clip(t - cut, 0, None)).sum())


def variance_bound(n: int, d: int, triple: ParamTriple) -> float:
    """Worst-case estimator variance n (d + gm)^2 / (4s)."""
    validate_triple(d, triple)
    return n * (d + triple.g * triple.m) ** 2 / (4.0 * triple.s)


def _divisors(d: int) -> list[int]:
    return [g for g in range(1, d + 1) if d % g == 0]


def select_params(
    pi: np.ndarray,
    d: int,
    epsilon: float,
    n: int,
    s_max: int = 64,
    allowed_g=None,
    allowed_s=None,
) -> ParamTriple:
    """Pick (m, s, g) minimizing variance bound plus squared expected bias.

    Exhaustive search over g in the divisors of d, s in 1..min(s_max, d/g)
    and m in s..d/g, keeping triples whose implied privacy level fits the
    budget. allowed_g / allowed_s restrict the searched block counts and
    sample sizes. Ties resolve to the smallest g, then s, then m, so the
    choice is deterministic for a fixed pi.
    """
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    pi = np.asarray(pi, dtype=np.float64)
    if pi.size != d + 1:
        raise ValueError(f"pi must have length d + 1 = {d + 1}")
    pi = np.clip(pi, 0.0, None)
    total = pi.sum()
    if total <= 0:
        raise ValueError("pi has no mass")
    pi = pi / total

    t = np.arange(d + 1, dtype=np.float64)
    # bias(cut) = n * sum_{t > cut} pi_t (t - cut), via suffix sums
    suf_pi = np.concatenate([np.cumsum((pi)[::-1])[::-1], [0.0]])
    suf_tpi = np.concatenate([np.cumsum((pi * t)[::-1])[::-1], [0.0]])
    cuts = np.arange(d + 1, dtype=np.float64)
    bias_at_cut = n * (suf_tpi[1 : d + 2] - cuts * suf_pi[1 : d + 2])

    g_pool = _divisors(d)
    if allowed_g is not None:
        wanted = set(int(v) for v in allowed_g)
        g_pool = [g for g in g_pool if g in wanted]
        if not g_pool:
            raise ValueError("allowed_g contains no divisor of d")
    s_wanted = None if allowed_s is None else set(int(v) for v in allowed_s)

    lgam = np.array([math.lgamma(i + 1) for i in range(d + 1)])
    best_obj = math.inf
    best: ParamTriple | None = None
    for g in g_pool:
        block = d // g
        s_hi = min(s_max, block)
        s = np.arange(1, s_hi + 1)
        if s_wanted is not None:
            s = s[np.isin(s, list(s_wanted))]
            if s.size == 0:
                continue
        m = np.arange(1, block + 1)
        ms = m[:, None] - s[None, :]
        ok = ms >= 0
        ln_c_block = lgam[block] - lgam[s] - lgam[block - s]
        ln_c_m = np.where(ok, lgam[m[:, None]] - lgam[s[None, :]] - lgam[ms.clip(0)], -np.inf)
        feasible = ok & (ln_c_block[None, :] - ln_c_m <= epsilon + 1e-12)
        var = n * (d + g * m[:, None].astype(np.float64)) ** 2 / (4.0 * s[None, :])
        bias = bias_at_cut[d - m * g]
        obj = np.where(feasible, var + (bias**2)[:, None], np.inf)
        flat = obj.T.reshape(-1)  # s-major, m-minor: matches the tie-break
        j = int(np.argmin(flat))
        if flat[j] < best_obj:
            best_obj = float(flat[j])
            best = ParamTriple(m=int(j % block) + 1, s=int(s[j // block]), g=g)
    if best is None:
        raise ValueError(f"no feasible (m, s, g) for d = {d} at epsilon = {epsilon}")
    return best


# ---------- pilot estimation pipeline ----------


def pilot_bucket_count(d: int) -> int:
    """Reconstruction grid size for the pilot phase: d + 1, capped at 1024."""
    return d + 1 if d <= 1024 else 1024


def estimate_pi_distribution(
    ones_counts: np.ndarray, d: int, epsilon: float, rng: np.random.Generator
) -> np.ndarray:
    """Estimate pi over 0..d from pilot users' ones counts via square wave.

    Each pilot reports t/d through the square wave mechanism at the full
    budget; EM reconstruction yields bucket masses that map back to counts.
    """
    t = np.asarray(ones_counts, dtype=np.int64)
    if t.size == 0:
        raise ValueError("need at least one pilot user")
    buckets = pilot_bucket_count(d)
    cfg = SwConfig(epsilon=epsilon, buckets=buckets)
    theta = sw_reconstruct(sw_report(t / d, epsilon, rng), cfg)
    if buckets == d + 1:
        return theta
    # Coarse grid: spread each bucket's mass to the nearest counts.
    pi = np.zeros(d + 1)
    pos = sw_support(cfg) * d
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    np.add.at(pi, lo, theta * (1.0 - frac))
    np.add.at(pi, np.minimum(lo + 1, d), theta * frac)
    return pi


def estimate_pi_pipeline(
    dataset: Dataset,
    category: Category | Sequence[int],
    epsilon: float,
    rng: np.random.Generator,
    split_fraction: float = 0.1,
    split_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Split off a pilot cohort and estimate pi from it.

    Returns (pi_hat, holdout_mask): the estimated count distribution and a
    boolean mask selecting the users left for the main protocol run. The
    pilot and main cohorts are disjoint, so each phase spends the full
    budget on its own users.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    n = dataset.n
    pilot_size = max(1, int(round(split_fraction * n)))
    if pilot_size >= n:
        raise ValueError("split leaves no users for the main phase")
    chooser = split_rng if split_rng is not None else rng
    pilot = chooser.permutation(n)[:pilot_size]
    counts = category_counts(dataset, category)
    d = category_size(category)
    pi_hat = estimate_pi_distribution(counts[pilot], d, epsilon, rng)
    mask = np.ones(n, dtype=bool)
    mask[pilot] = False
    return pi_hat, mask


@dataclass(frozen=True)
class CriadRunResult:
    estimate: float
    params: ParamTriple
    pi_hat: np.ndarray | None


def criad_run(
    dataset: Dataset,
    category: Category | Sequence[int],
    epsilon: float,
    rng: np.random.Generator,
    params: ParamTriple | None = None,
    split_rng: np.random.Generator | None = None,
    split_fraction: float = 0.1,
    s_max: int = 64,
    position_to_block: np.ndarray | None = None,
) -> CriadRunResult:
    """End-to-end run over a dataset.

    Without explicit params this runs the two-phase pipeline: a pilot
    fraction estimates pi, parameters are selected for the remaining users,
    and their aggregate is rescaled back to the full population. With
    params given, every user runs the protocol and no rescaling happens.
    """
    d = category_size(category)
    pi_hat: np.ndarray | None = None
    if params is None:
        pi_hat, mask = estimate_pi_pipeline(
            dataset, category, epsilon, rng, split_fraction, split_rng
        )
        n_main = int(mask.sum())
        params = select_params(pi_hat, d, epsilon, n_main, s_max)
        scale = dataset.n / n_main
    else:
        mask = np.ones(dataset.n, dtype=bool)
        n_main = dataset.n
        scale = 1.0
    tb = block_counts(dataset, category, params.g, position_to_block)[mask]
    groups = rng.integers(0, params.g, size=n_main)
    chosen = tb[np.arange(n_main), groups]
    ones = criad_sample_ones(chosen, d, params, rng)
    estimate = criad_estimate_from_ones(int(ones.sum()), n_main, d, params) * scale
    return CriadRunResult(estimate=estimate, params=params, pi_hat=pi_hat)
