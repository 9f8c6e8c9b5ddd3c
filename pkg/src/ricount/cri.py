"""Count-by-random-index protocol: one sampled bit plus a sanitized
extreme-vector flag.

Each user reports a single uniformly sampled bit of their encoded vector.
All-ones and all-zeros vectors are nudged by one flipped bit so the sampled
bit keeps residual uncertainty, and a three-way flag (+1 all ones, -1 all
zeros, 0 otherwise) perturbed by k-ary randomized response lets the collector
undo the systematic part of the nudge. Index sampling consumes ln(d - 1) of
the budget, the flag the remaining epsilon' = epsilon - ln(d - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mechanisms import krr, krr_probabilities


@dataclass(frozen=True)
class CriParams:
    """Validated protocol parameters.

    Raises ValueError when the budget does not cover the index-sampling
    cost, i.e. unless epsilon > ln(d - 1).
    """

    d: int
    epsilon: float
    epsilon_prime: float = field(init=False)

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError(f"vector length must be >= 2, got {self.d}")
        cost = math.log(self.d - 1)
        if not (self.epsilon > cost):
            raise ValueError(
                f"budget {self.epsilon} does not exceed the index sampling "
                f"cost ln(d - 1) = {cost:.6g} for d = {self.d}"
            )
        object.__setattr__(self, "epsilon_prime", self.epsilon - cost)


@dataclass(frozen=True)
class CriReport:
    bit: int
    flag: int  # sanitized value in {-1, 0, +1}


_FLAG_SYMBOLS = np.array([-1, 0, 1])


def cri_client(vector: np.ndarray, params: CriParams, rng: np.random.Generator) -> CriReport:
    """Perturb one user's encoded vector into a (bit, flag) report."""
    v = np.asarray(vector)
    if v.size != params.d:
        raise ValueError(f"vector length {v.size} != d = {params.d}")
    ones = int(v.sum())
    if ones == params.d:
        raw = 1
    elif ones == 0:
        raw = -1
    else:
        raw = 0
    v = v.copy()
    if raw == 1:
        v[rng.integers(params.d)] = 0
    elif raw == -1:
        v[rng.integers(params.d)] = 1
    bit = int(v[rng.integers(params.d)])
    flag = int(_FLAG_SYMBOLS[krr(raw + 1, 3, params.epsilon_prime, rng)])
    return CriReport(bit=bit, flag=flag)


def cri_sample_reports(
    ones_counts: np.ndarray, params: CriParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized client channel: per-user ones counts to (bits, flags).

    The sampled bit depends on the vector only through its ones count (the
    index is uniform), so whole populations can be perturbed at once.
    """
    t = np.asarray(ones_counts, dtype=np.int64)
    if t.size and (t.min() < 0 or t.max() > params.d):
        raise ValueError("ones counts must lie in [0, d]")
    raw = np.where(t == params.d, 1, np.where(t == 0, -1, 0))
    effective = np.where(t == params.d, params.d - 1, np.where(t == 0, 1, t))
    bits = (rng.random(t.shape) < effective / params.d).astype(np.int64)
    flags = _FLAG_SYMBOLS[krr(raw + 1, 3, params.epsilon_prime, rng)]
    return bits, flags


def cri_aggregate(bits: np.ndarray, flags: np.ndarray, params: CriParams) -> float:
    """Combine all reports into the query estimate.

    The bit sum scales to the raw count; the flag sum estimates the net
    fraction of all-ones minus all-zeros users, whose nudges the raw count
    over- and under-shoots by exactly one each.
    """
    bits = np.asarray(bits)
    flags = np.asarray(flags)
    n = bits.size
    if n == 0 or flags.size != n:
        raise ValueError("need equally many bits and flags, at least one report")
    theta = params.d * float(bits.sum())
    e = math.exp(params.epsilon_prime)
    delta_pi = (2.0 + e) * float(flags.sum()) / (n * (e - 1.0))
    return theta + n * delta_pi


def cri_variance_bound(n: int, params: CriParams) -> float:
    """Reference variance bound: (1/4)nd^2 + 2n(e^eps' + 2)/(e^eps' - 1)^2.

    The second term equals the flag-perturbation variance when no vector is
    all-ones or all-zeros; each extreme vector adds 3/(e^eps' - 1) beyond it,
    which the d^2/4 sampling slack absorbs unless d is very small and
    extreme vectors dominate. Callers comparing empirical variance against
    this bound should stay in that regime.
    """
    e = math.exp(params.epsilon_prime)
    return 0.25 * n * params.d**2 + 2.0 * n * (e + 2.0) / (e - 1.0) ** 2


def cri_exact_distribution(ones: int, params: CriParams) -> dict[tuple[int, int], float]:
    """Exact joint law of (bit, flag) for a vector with the given ones count."""
    if not 0 <= ones <= params.d:
        raise ValueError("ones count out of range")
    d = params.d
    raw = 1 if ones == d else (-1 if ones == 0 else 0)
    effective = d - 1 if ones == d else (1 if ones == 0 else ones)
    p_one = effective / d
    keep, other = krr_probabilities(3, params.epsilon_prime)
    out: dict[tuple[int, int], float] = {}
    for flag in (-1, 0, 1):
        pf = keep if flag == raw else other
        out[(1, flag)] = p_one * pf
        out[(0, flag)] = (1.0 - p_one) * pf
    return out
