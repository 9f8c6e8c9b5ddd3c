"""Scalar LDP mechanisms shared by the protocols and baselines.

All report functions are array-oriented: they accept scalars or numpy arrays
and perturb every element independently, drawing from the supplied generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _check_epsilon(epsilon: float) -> None:
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")


# ---------- randomized response ----------


def rr_bit(bits, epsilon: float, rng: np.random.Generator):
    """Binary randomized response.

    Keeps each bit with probability e^eps / (1 + e^eps), flips it otherwise.
    """
    _check_epsilon(epsilon)
    bits = np.asarray(bits)
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("rr_bit input must be 0/1")
    p = math.exp(epsilon) / (1.0 + math.exp(epsilon))
    keep = rng.random(bits.shape) < p
    return np.where(keep, bits, 1 - bits)


def krr(values, k: int, epsilon: float, rng: np.random.Generator):
    """k-ary randomized response over symbols 0..k-1.

    Keeps the true symbol with probability e^eps / (k - 1 + e^eps) and
    otherwise reports one of the k-1 other symbols uniformly (realized with
    the usual cyclic offset trick).
    """
    _check_epsilon(epsilon)
    if k < 2:
        raise ValueError(f"need k >= 2 symbols, got {k}")
    values = np.asarray(values)
    if values.size and (values.min() < 0 or values.max() >= k):
        raise ValueError("krr input must lie in [0, k)")
    p = math.exp(epsilon) / (k - 1 + math.exp(epsilon))
    keep = rng.random(values.shape) < p
    offset = rng.integers(1, k, size=values.shape)
    return np.where(keep, values, (values + offset) % k)


def krr_probabilities(k: int, epsilon: float) -> tuple[float, float]:
    """(keep, other) report probabilities of k-ary randomized response."""
    p = math.exp(epsilon) / (k - 1 + math.exp(epsilon))
    return p, (1.0 - p) / (k - 1)


def krr_debias_count(observed: float, n: int, k: int, epsilon: float) -> float:
    """Unbiased true-count estimate for one symbol from its observed count.

    Inverts E[observed] = c * p + (n - c) * q; at a true count of zero the
    expected observation is the uniform noise floor n * q, which maps back
    to zero.
    """
    _check_epsilon(epsilon)
    p, q = krr_probabilities(k, epsilon)
    return (observed - n * q) / (p - q)


# ---------- additive noise ----------


def laplace_count(counts, d: int, epsilon: float, rng: np.random.Generator):
    """Counts in [0, d] with Laplace(d / eps) noise; output is unbounded."""
    _check_epsilon(epsilon)
    counts = np.asarray(counts, dtype=np.float64)
    return counts + rng.laplace(0.0, d / epsilon, size=counts.shape)


# ---------- piecewise mechanism ----------


def piecewise_bound(epsilon: float) -> float:
    """Output range limit C of the piecewise mechanism."""
    half = math.exp(epsilon / 2.0)
    return (half + 1.0) / (half - 1.0)


def piecewise(values, epsilon: float, rng: np.random.Generator):
    """Piecewise mechanism for values in [-1, 1]; unbiased, output in [-C, C].

    With probability e^(eps/2) / (e^(eps/2) + 1) the report is uniform on a
    high-density band [l(x), r(x)] of width C - 1 centered so that the
    overall mean is x; otherwise it is uniform on the remainder of [-C, C].
    """
    _check_epsilon(epsilon)
    x = np.asarray(values, dtype=np.float64)
    if x.size and (x.min() < -1.0 - 1e-12 or x.max() > 1.0 + 1e-12):
        raise ValueError("piecewise input must lie in [-1, 1]")
    x = np.clip(x, -1.0, 1.0)
    half = math.exp(epsilon / 2.0)
    C = (half + 1.0) / (half - 1.0)
    left = (C + 1.0) / 2.0 * x - (C - 1.0) / 2.0
    right = left + C - 1.0
    in_band = rng.random(x.shape) < half / (half + 1.0)
    y_band = left + (C - 1.0) * rng.random(x.shape)
    # Outside mass splits between [-C, l] and [r, C] in proportion to length.
    w = rng.random(x.shape) * (C + 1.0)
    len_left = left + C
    y_out = np.where(w < len_left, -C + w, right + (w - len_left))
    return np.where(in_band, y_band, y_out)


# ---------- square wave mechanism with EM reconstruction ----------


def sw_band(epsilon: float) -> float:
    """Half-width b of the square wave's high-probability band."""
    _check_epsilon(epsilon)
    e = math.exp(epsilon)
    return (epsilon * e - e + 1.0) / (2.0 * e * (e - 1.0 - epsilon))


@dataclass(frozen=True)
class SwConfig:
    """Square wave reporting plus EM-with-smoothing reconstruction settings.

    buckets is the size of the reconstructed support grid over [0, 1];
    ems_smoothing in [0, 1] blends each EM iterate with its [1, 2, 1]/4
    moving average (1 = the standard smoothed variant, 0 = plain EM).
    """

    epsilon: float
    buckets: int
    ems_iterations: int = 1000
    ems_smoothing: float = 0.2
    ems_tolerance: float = 1e-6

    def __post_init__(self) -> None:
        _check_epsilon(self.epsilon)
        if self.buckets < 2:
            raise ValueError("need at least 2 buckets")
        if not 0.0 <= self.ems_smoothing <= 1.0:
            raise ValueError("ems_smoothing must lie in [0, 1]")
        if self.ems_iterations < 1:
            raise ValueError("ems_iterations must be >= 1")


def sw_support(cfg: SwConfig) -> np.ndarray:
    """The reconstruction grid: buckets evenly spaced points spanning [0, 1]."""
    return np.linspace(0.0, 1.0, cfg.buckets)


def sw_report(values, epsilon: float, rng: np.random.Generator):
    """Square wave report for values in [0, 1]; output lies in [-b, 1+b].

    Reports land in the band [v-b, v+b] with density p and elsewhere with
    density q = p / e^eps, where p is normalized over the output range.
    """
    _check_epsilon(epsilon)
    v = np.asarray(values, dtype=np.float64)
    if v.size and (v.min() < -1e-12 or v.max() > 1.0 + 1e-12):
        raise ValueError("sw_report input must lie in [0, 1]")
    v = np.clip(v, 0.0, 1.0)
    b = sw_band(epsilon)
    p = math.exp(epsilon) / (2.0 * b * math.exp(epsilon) + 1.0)
    in_band = rng.random(v.shape) < 2.0 * b * p
    y_band = v + rng.uniform(-b, b, size=v.shape)
    # The outside region has total length 1: [-b, v-b) then (v+b, 1+b].
    w = rng.random(v.shape)
    y_out = np.where(w < v, -b + w, b + w)
    return np.where(in_band, y_band, y_out)


def _sw_transition(cfg: SwConfig, out_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """(edges, M) where M[i, j] = Pr[report in bin i | value = support j]."""
    b = sw_band(cfg.epsilon)
    e = math.exp(cfg.epsilon)
    q = 1.0 / (2.0 * b * e + 1.0)
    p = e * q
    edges = np.linspace(-b, 1.0 + b, out_bins + 1)
    grid = sw_support(cfg)
    lo = np.maximum(edges[:-1, None], grid[None, :] - b)
    hi = np.minimum(edges[1:, None], grid[None, :] + b)
    overlap = np.clip(hi - lo, 0.0, None)
    M = q * (edges[1:] - edges[:-1])[:, None] + (p - q) * overlap
    return edges, M


def sw_reconstruct(reports, cfg: SwConfig, out_bins: int = 256) -> np.ndarray:
    """Estimate the input distribution over the support grid from SW reports.

    Expectation maximization on the binned report histogram, with each
    iterate smoothed by a banded binomial kernel; stops after
    cfg.ems_iterations or when the L1 change drops below cfg.ems_tolerance.
    Returns nonnegative bucket masses summing to 1.
    """
    y = np.asarray(reports, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot reconstruct from zero reports")
    edges, M = _sw_transition(cfg, out_bins)
    hist = np.histogram(y, bins=edges)[0].astype(np.float64)
    total = hist.sum()
    theta = np.full(cfg.buckets, 1.0 / cfg.buckets)
    kernel = np.array([1.0, 2.0, 1.0])
    norm = np.convolve(np.ones(cfg.buckets), kernel, mode="same")
    lam = cfg.ems_smoothing
    for it in range(cfg.ems_iterations):
        mixture = M @ theta
        new = theta * (M.T @ (hist / mixture)) / total
        if lam > 0.0:
            smooth = np.convolve(new, kernel, mode="same") / norm
            new = (1.0 - lam) * new + lam * smooth
        new /= new.sum()
        delta = np.abs(new - theta).sum()
        theta = new
        if delta < cfg.ems_tolerance:
            break
    return theta


# ---------- optimized local hashing ----------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64."""
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@dataclass(frozen=True)
class OlhConfig:
    """Local hashing into g = round(e^eps) + 1 buckets, then k-ary RR."""

    epsilon: float
    hash_range: int = field(init=False)
    keep_prob: float = field(init=False)

    def __post_init__(self) -> None:
        _check_epsilon(self.epsilon)
        g = int(round(math.exp(self.epsilon))) + 1
        object.__setattr__(self, "hash_range", g)
        object.__setattr__(
            self, "keep_prob", math.exp(self.epsilon) / (math.exp(self.epsilon) + g - 1)
        )


def olh_hash(seeds: np.ndarray, values, hash_range: int) -> np.ndarray:
    """Per-seed 64-bit hash of symbol ids into [0, hash_range)."""
    with np.errstate(over="ignore"):  # uint64 wraparound is the hash
        v = (np.asarray(values, dtype=np.uint64) + np.uint64(1)) * _GAMMA
        mixed = _mix64(np.asarray(seeds, dtype=np.uint64) + v)
    return (mixed % np.uint64(hash_range)).astype(np.int64)


def olh_report(values, k: int, cfg: OlhConfig, rng: np.random.Generator):
    """Report (seed, perturbed hashed value) per user.

    Each user hashes their symbol with a fresh 64-bit seed and perturbs the
    hashed bucket by k-ary randomized response over the hash range.
    """
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < 0 or values.max() >= k):
        raise ValueError(f"symbol ids must lie in [0, {k})")
    seeds = rng.integers(0, 2**64, size=values.shape, dtype=np.uint64)
    h = olh_hash(seeds, values, cfg.hash_range)
    g = cfg.hash_range
    keep = rng.random(values.shape) < cfg.keep_prob
    offset = rng.integers(1, g, size=values.shape)
    y = np.where(keep, h, (h + offset) % g)
    return seeds, y


def olh_debias(supports: np.ndarray, n: int, cfg: OlhConfig) -> np.ndarray:
    """Unbiased per-symbol count estimates from support counts."""
    q = 1.0 / cfg.hash_range
    return (np.asarray(supports, dtype=np.float64) - n * q) / (cfg.keep_prob - q)


def olh_estimate(seeds: np.ndarray, reported: np.ndarray, k: int, cfg: OlhConfig) -> np.ndarray:
    """Estimated true counts for symbols 0..k-1 from OLH reports."""
    n = seeds.size
    supports = np.empty(k, dtype=np.int64)
    for v in range(k):
        supports[v] = int((olh_hash(seeds, v, cfg.hash_range) == reported).sum())
    return olh_debias(supports, n, cfg)


def olh_sample_supports(values, k: int, cfg: OlhConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw per-symbol support counts directly from their exact law.

    Under an ideal hash the support of a symbol is a kept-report count from
    its true holders plus Binomial(n - n_v, 1/g) accidental matches,
    independent across symbols. Sampling that law avoids materializing
    per-user hashes and is distributionally identical to aggregating
    olh_report output; the report pipeline remains available where actual
    transcripts are needed.
    """
    values = np.asarray(values, dtype=np.int64)
    n = values.size
    true_counts = np.bincount(values, minlength=k)[:k]
    kept = values[rng.random(n) < cfg.keep_prob]
    base = np.bincount(kept, minlength=k)[:k]
    return base + rng.binomial(n - true_counts, 1.0 / cfg.hash_range)
