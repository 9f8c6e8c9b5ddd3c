import numpy as np
import pytest

from ricount.core import Dataset, ItemDomain


def make_rng(*key: int) -> np.random.Generator:
    """Independent test stream; large fixed tag keeps it off library streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(
        entropy=0xC0FFEE, spawn_key=tuple(key))))


def dataset_from_lists(records, domain_size) -> Dataset:
    return Dataset.from_records(records, ItemDomain(domain_size))


def dataset_with_counts(counts, d, domain_size=None, offset=0) -> Dataset:
    """One user per entry of `counts`, holding the first t category items.

    Category is assumed to be [offset+1, offset+d]; items outside stay empty.
    """
    domain_size = domain_size or (offset + d)
    recs = [list(range(offset + 1, offset + 1 + int(t))) for t in counts]
    return Dataset.from_records(recs, ItemDomain(domain_size))


def chi2_sf(stat: float, dof: int) -> float:
    from scipy.stats import chi2

    return float(chi2.sf(stat, dof))


def chi2_test(observed, expected_probs, alpha=1e-4, label=""):
    """Pearson goodness-of-fit; pools cells with expectation < 5."""
    observed = np.asarray(observed, dtype=float)
    n = observed.sum()
    expected = n * np.asarray(expected_probs, dtype=float)
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] == 0:
        assert obs[-1] == 0, f"{label}: mass on zero-probability cells"
        obs, exp = obs[:-1], exp[:-1]
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(obs) - 1
    p = chi2_sf(stat, dof)
    assert p > alpha, f"{label}: chi2={stat:.2f} dof={dof} p={p:.3e}"
    return p


def assert_within_se(estimates, truth, k=3.0, label=""):
    """Monte-Carlo mean within k standard errors of truth."""
    est = np.asarray(estimates, dtype=float)
    se = est.std(ddof=1) / np.sqrt(est.size)
    gap = abs(est.mean() - truth)
    assert gap <= k * se, (
        f"{label}: mean {est.mean():.4f} vs truth {truth:.4f}, "
        f"|gap| = {gap:.4f} > {k} x SE = {k * se:.4f}"
    )


@pytest.fixture
def rng():
    return make_rng(0)
