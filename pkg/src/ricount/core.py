"""Item domains, categories, bit-vector encoding, datasets and RNG streams.

Conventions used throughout the package:

- item ids are integers 1..domain_size (inclusive, 1-based),
- a user record is a sorted, duplicate-free int64 array of item ids,
- an encoded vector is a uint8 array of length d where position l (0-based)
  is 1 iff the user holds the l-th item of the category.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class ItemDomain:
    """The universe of item ids 1..size."""

    size: int

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"domain size must be >= 1, got {self.size}")


@dataclass(frozen=True)
class Category:
    """A contiguous id range [lo, hi] defining a subset counting query.

    Arbitrary (non-contiguous) categories are supported by the encoding and
    counting helpers via an explicit id sequence; the contiguous range is the
    common case and keeps the fast paths simple.
    """

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 1 or self.hi < self.lo:
            raise ValueError(f"need 1 <= lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def d(self) -> int:
        return self.hi - self.lo + 1

    def validate(self, domain: ItemDomain) -> None:
        if self.hi > domain.size:
            raise ValueError(
                f"category [{self.lo}, {self.hi}] exceeds domain of size {domain.size}"
            )


# A user's item set: sorted, duplicate-free, int64.
UserItemSet = np.ndarray
# A category-encoded bit vector: uint8, length d.
EncodedVector = np.ndarray


def normalize_itemset(items: Iterable[int], domain: ItemDomain | None = None) -> UserItemSet:
    """Sort, deduplicate and validate a raw item id collection."""
    arr = np.unique(np.asarray(list(items), dtype=np.int64))
    if arr.size and arr[0] < 1:
        raise ValueError(f"item ids must be >= 1, got {arr[0]}")
    if domain is not None and arr.size and arr[-1] > domain.size:
        raise ValueError(f"item id {arr[-1]} outside domain of size {domain.size}")
    return arr


class Dataset:
    """n user records over a common item domain, stored in flat CSR form."""

    def __init__(self, domain: ItemDomain, indptr: np.ndarray, items: np.ndarray):
        self.domain = domain
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        if self.indptr.ndim != 1 or self.indptr[0] != 0 or self.indptr[-1] != self.items.size:
            raise ValueError("malformed index pointer array")
        self._user_ids: np.ndarray | None = None

    @classmethod
    def from_records(cls, records: Sequence[Iterable[int]], domain: ItemDomain) -> "Dataset":
        normalized = [normalize_itemset(r, domain) for r in records]
        lengths = np.array([r.size for r in normalized], dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        items = np.concatenate(normalized) if normalized else np.empty(0, dtype=np.int64)
        return cls(domain, indptr, items)

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    def __len__(self) -> int:
        return self.n

    def record(self, i: int) -> UserItemSet:
        return self.items[self.indptr[i] : self.indptr[i + 1]]

    @property
    def records(self) -> Iterator[UserItemSet]:
        for i in range(self.n):
            yield self.record(i)

    def user_ids(self) -> np.ndarray:
        """User index of every flat item entry (cached)."""
        if self._user_ids is None:
            lengths = np.diff(self.indptr)
            self._user_ids = np.repeat(np.arange(self.n, dtype=np.int64), lengths)
        return self._user_ids


def _category_positions(category: Category | Sequence[int], items: np.ndarray):
    """Map flat item entries to 0-based category positions; -1 if outside."""
    if isinstance(category, Category):
        pos = items - category.lo
        pos[(items < category.lo) | (items > category.hi)] = -1
        return pos, category.d
    ids = np.asarray(sorted(set(int(i) for i in category)), dtype=np.int64)
    if ids.size == 0:
        raise ValueError("explicit category must contain at least one id")
    idx = np.searchsorted(ids, items)
    idx[idx == ids.size] = 0
    pos = np.where(ids[idx] == items, idx, -1)
    return pos, ids.size


def category_size(category: Category | Sequence[int]) -> int:
    """Number of item positions d the category spans."""
    if isinstance(category, Category):
        return category.d
    return len(set(int(i) for i in category))


def filter_and_encode(record: Iterable[int], category: Category | Sequence[int]) -> EncodedVector:
    """Encode one record as the d-length membership bit vector of a category."""
    items = np.asarray(list(record), dtype=np.int64)
    pos, d = _category_positions(category, items)
    vec = np.zeros(d, dtype=np.uint8)
    vec[pos[pos >= 0]] = 1
    return vec


def category_counts(dataset: Dataset, category: Category | Sequence[int]) -> np.ndarray:
    """Per-user in-category item counts, shape (n,)."""
    pos, _ = _category_positions(category, dataset.items)
    mask = pos >= 0
    return np.bincount(dataset.user_ids()[mask], minlength=dataset.n)


def category_positions_by_user(
    dataset: Dataset, category: Category | Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Each user's in-category item positions, flattened user-major.

    Returns (indptr, positions): user i holds positions[indptr[i]:indptr[i+1]],
    0-based within the category and ascending per user.
    """
    pos, _ = _category_positions(category, dataset.items)
    mask = pos >= 0
    users = dataset.user_ids()[mask]
    counts = np.bincount(users, minlength=dataset.n)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return indptr, pos[mask]


def true_subset_count(dataset: Dataset, category: Category | Sequence[int]) -> int:
    """The exact query answer: total in-category items summed over users."""
    return int(category_counts(dataset, category).sum())


def pi_distribution(dataset: Dataset, category: Category | Sequence[int]) -> np.ndarray:
    """Fraction of users holding exactly t category items, for t = 0..d.

    The returned vector has length d+1 and sums to 1; the query answer
    satisfies Q = n * sum(t * pi[t]).
    """
    t = category_counts(dataset, category)
    _, d = _category_positions(category, dataset.items[:0])
    return np.bincount(t, minlength=d + 1) / dataset.n


def block_counts(
    dataset: Dataset,
    category: Category | Sequence[int],
    g: int,
    position_to_block: np.ndarray | None = None,
) -> np.ndarray:
    """Per-user ones count inside each of g category blocks, shape (n, g).

    Blocks are contiguous runs of d/g category positions unless an explicit
    position_to_block map is given. d must be divisible by g.
    """
    pos, d = _category_positions(category, dataset.items)
    if d % g:
        raise ValueError(f"category size {d} not divisible by {g} groups")
    mask = pos >= 0
    if position_to_block is None:
        blk = pos[mask] // (d // g)
    else:
        blk = position_to_block[pos[mask]]
    flat = dataset.user_ids()[mask] * g + blk
    return np.bincount(flat, minlength=dataset.n * g).reshape(dataset.n, g)


# ---------- persistence ----------


def save_transactions(dataset: Dataset, path: str | Path) -> None:
    """Write one user per line, space-separated sorted item ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            fh.write(" ".join(str(int(v)) for v in rec))
            fh.write("\n")


def load_transactions(path: str | Path, domain: ItemDomain | int) -> Dataset:
    """Read a transactions file written by save_transactions.

    Blank lines are users with empty item sets. Ids are validated against
    the domain; duplicates within a line are dropped.
    """
    if isinstance(domain, int):
        domain = ItemDomain(domain)
    records: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            try:
                records.append([int(tok) for tok in line.split()] if line else [])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed item id") from exc
    return Dataset.from_records(records, domain)


# ---------- synthetic data ----------


def generate_synthetic(
    n: int,
    domain_size: int,
    mean_set_size: float,
    shape: str = "zipf",
    zipf_a: float = 1.2,
    rng: np.random.Generator | int | None = None,
) -> Dataset:
    """Draw n synthetic user records.

    Set sizes are Poisson(mean_set_size) capped at domain_size; items are
    drawn without replacement from a zipf(zipf_a) or uniform popularity
    distribution over ids 1..domain_size. Sampling without replacement is
    realized by redrawing until the requested number of distinct items is
    collected, which matches successive renormalized draws exactly.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0 <= mean_set_size <= domain_size:
        raise ValueError("mean_set_size must lie in [0, domain_size]")
    if shape not in ("zipf", "uniform"):
        raise ValueError(f"unknown shape {shape!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    domain = ItemDomain(domain_size)

    if shape == "zipf":
        weights = np.arange(1, domain_size + 1, dtype=np.float64) ** (-zipf_a)
        weights /= weights.sum()
    else:
        weights = None

    sizes = np.minimum(rng.poisson(mean_set_size, size=n), domain_size)
    out_users: list[np.ndarray] = []
    out_items: list[np.ndarray] = []

    # Large requests go through exact weighted reservoir keys instead of
    # rejection, which would degenerate into coupon collecting.
    big = np.flatnonzero(sizes > max(8, domain_size // 8))
    for user in big:
        if weights is None:
            picked = rng.permutation(domain_size)[: sizes[user]] + 1
        else:
            keys = np.log(weights) + rng.gumbel(size=domain_size)
            picked = np.argpartition(-keys, sizes[user] - 1)[: sizes[user]] + 1
        out_users.append(np.full(sizes[user], user, dtype=np.int64))
        out_items.append(picked.astype(np.int64))

    pending = np.setdiff1d(np.flatnonzero(sizes > 0), big)
    batch = int(sizes[pending].max()) * 2 + 4 if pending.size else 0
    while pending.size:
        need = sizes[pending]
        draws = rng.choice(domain_size, size=(pending.size, batch), p=weights) + 1
        order = np.argsort(draws, axis=1, kind="stable")
        sv = np.take_along_axis(draws, order, axis=1)
        dup = np.zeros(draws.shape, dtype=bool)
        np.put_along_axis(dup, order[:, 1:], sv[:, 1:] == sv[:, :-1], axis=1)
        rank = np.cumsum(~dup, axis=1)
        complete = rank[:, -1] >= need
        keep = ~dup & (rank <= need[:, None]) & complete[:, None]
        out_items.append(draws[keep])
        out_users.append(np.repeat(pending[complete], need[complete]))
        pending = pending[~complete]
        batch *= 2

    if out_users:
        users = np.concatenate(out_users)
        vals = np.concatenate(out_items).astype(np.int64)
        order = np.lexsort((vals, users))
        users, vals = users[order], vals[order]
        counts = np.bincount(users, minlength=n)
    else:
        vals = np.empty(0, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return Dataset(domain, indptr, vals)


# ---------- reproducible randomness ----------


@dataclass(frozen=True)
class RngStream:
    """Names one deterministic randomness stream.

    Streams with equal (master_seed, trial, user_index) yield identical draw
    sequences; any difference in the triple gives an independent stream. The
    underlying bit generator is counter-based, so streams are cheap to create
    and safe to use concurrently.
    """

    master_seed: int
    trial: int = 0
    user_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.trial, self.user_index)
        )
        return np.random.Generator(np.random.Philox(seq))


def derive_generator(master_seed: int, *key: int) -> np.random.Generator:
    """A deterministic generator for an arbitrary integer key path."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(seq))
