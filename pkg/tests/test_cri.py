import math

import numpy as np
import pytest

from ricount.core import category_counts, pi_distribution
from ricount.cri import (
    CriParams,
    cri_aggregate,
    cri_client,
    cri_exact_distribution,
    cri_sample_reports,
    cri_variance_bound,
)

from conftest import assert_within_se, chi2_test, dataset_with_counts, make_rng


class TestParams:
    def test_budget_split(self):
        p = CriParams(d=5, epsilon=2.0)
        assert abs(p.epsilon_prime - (2.0 - math.log(4))) < 1e-12
        assert abs(p.epsilon_prime - 0.6137) < 1e-4

    def test_d2_uses_whole_budget_for_flag(self):
        p = CriParams(d=2, epsilon=0.5)
        assert abs(p.epsilon_prime - 0.5) < 1e-12

    def test_insufficient_budget_rejected(self):
        with pytest.raises(ValueError):
            CriParams(d=5, epsilon=math.log(4))
        with pytest.raises(ValueError):
            CriParams(d=100, epsilon=2.0)
        with pytest.raises(ValueError):
            CriParams(d=1, epsilon=1.0)


class TestExactBitLaw:
    def test_single_one_bit_probability(self):
        # one held item out of d=4: the sampled bit is 1 w.p. exactly 1/4
        params = CriParams(d=4, epsilon=math.log(3) + 1.0)
        dist = cri_exact_distribution(1, params)
        pr_bit_one = sum(p for (bit, _), p in dist.items() if bit == 1)
        assert abs(pr_bit_one - 1 / 4) < 1e-12

    def test_all_ones_flips_one_bit(self):
        # all-ones input flips one bit to 0 before sampling: Pr[bit=1] = 3/4
        params = CriParams(d=4, epsilon=math.log(3) + 1.0)
        dist = cri_exact_distribution(4, params)
        pr_bit_one = sum(p for (bit, _), p in dist.items() if bit == 1)
        assert abs(pr_bit_one - 3 / 4) < 1e-12

    def test_all_zeros_flips_one_bit(self):
        params = CriParams(d=4, epsilon=math.log(3) + 1.0)
        dist = cri_exact_distribution(0, params)
        pr_bit_one = sum(p for (bit, _), p in dist.items() if bit == 1)
        assert abs(pr_bit_one - 1 / 4) < 1e-12

    def test_distributions_normalize(self):
        params = CriParams(d=6, epsilon=math.log(5) + 0.5)
        for ones in range(7):
            dist = cri_exact_distribution(ones, params)
            assert abs(sum(dist.values()) - 1.0) < 1e-12


class TestClient:
    def test_client_matches_exact_law(self):
        params = CriParams(d=4, epsilon=math.log(3) + 0.8)
        rng = make_rng(40)
        for ones in (0, 1, 3, 4):
            vec = np.zeros(4, dtype=np.uint8)
            vec[:ones] = 1
            outcomes = {(b, f): i for i, (b, f) in enumerate(
                (b, f) for b in (0, 1) for f in (-1, 0, 1))}
            counts = np.zeros(len(outcomes), dtype=np.int64)
            for _ in range(30_000):
                rep = cri_client(vec, params, rng)
                counts[outcomes[(rep.bit, rep.flag)]] += 1
            exact = cri_exact_distribution(ones, params)
            probs = [exact.get(key, 0.0) for key in outcomes]
            chi2_test(counts, probs, label=f"cri client ones={ones}")

    def test_client_validates_length(self):
        params = CriParams(d=4, epsilon=math.log(3) + 0.8)
        with pytest.raises(ValueError):
            cri_client(np.zeros(5, dtype=np.uint8), params, make_rng(41))

    def test_sampler_matches_exact_law(self):
        # the vectorized report sampler follows the same per-user law
        params = CriParams(d=5, epsilon=math.log(4) + 0.6)
        rng = make_rng(42)
        ones = np.full(40_000, 2)
        bits, flags = cri_sample_reports(ones, params, rng)
        exact = cri_exact_distribution(2, params)
        keys = [(b, f) for b in (0, 1) for f in (-1, 0, 1)]
        observed = [
            int(((bits == b) & (flags == f)).sum()) for b, f in keys
        ]
        chi2_test(observed, [exact.get(kf, 0.0) for kf in keys], label="cri sampler")


class TestAggregate:
    def test_flag_free_example(self):
        params = CriParams(d=4, epsilon=math.log(3) + 1.0)
        bits = np.array([1, 0, 0, 1])
        flags = np.zeros(4, dtype=np.int64)
        assert cri_aggregate(bits, flags, params) == pytest.approx(8.0)

    def test_noiseless_flag_limit(self):
        # with a huge flag budget, all-plus flags push the correction to +n
        params = CriParams(d=4, epsilon=math.log(3) + 20.0)
        n = 50
        bits = np.zeros(n, dtype=np.int64)
        flags = np.ones(n, dtype=np.int64)
        est = cri_aggregate(bits, flags, params)
        assert est == pytest.approx(n, rel=1e-6)

    def test_unbiased_with_extreme_mass(self):
        # dataset mixing all-zero, interior, and all-one vectors
        d = 4
        counts = [0] * 300 + [1] * 200 + [2] * 150 + [4] * 350
        ds = dataset_with_counts(counts, d)
        from ricount.core import Category

        cat = Category(1, d)
        t = category_counts(ds, cat)
        truth = float(t.sum())
        params = CriParams(d=d, epsilon=math.log(3) + 1.0)
        estimates = []
        for trial in range(600):
            rng = make_rng(43, trial)
            bits, flags = cri_sample_reports(t, params, rng)
            estimates.append(cri_aggregate(bits, flags, params))
        assert_within_se(estimates, truth, k=3.0, label="cri unbiasedness")

    def test_variance_within_bound(self):
        # the flag term of the bound is exact for interior vectors and each
        # extreme vector adds 3/(e^eps' - 1) beyond it, so keep extreme mass
        # modest: all three configs have true variance <= 0.83 x bound,
        # leaving > 4 sigma of headroom for the 500-trial noise
        from ricount.core import Category

        configs = [
            (4, math.log(3) + 1.5, [1] * 360 + [0] * 20 + [4] * 20),
            (5, math.log(4) + 1.2, [1] * 340 + [2] * 40 + [5] * 20),
            (6, math.log(5) + 1.0, [1] * 320 + [3] * 48 + [0] * 16 + [6] * 16),
        ]
        for d, eps, counts in configs:
            ds = dataset_with_counts(counts, d)
            cat = Category(1, d)
            t = category_counts(ds, cat)
            params = CriParams(d=d, epsilon=eps)
            estimates = []
            for trial in range(500):
                rng = make_rng(44, d, trial)
                bits, flags = cri_sample_reports(t, params, rng)
                estimates.append(cri_aggregate(bits, flags, params))
            bound = cri_variance_bound(len(counts), params)
            var = float(np.var(estimates, ddof=1))
            assert var <= 1.05 * bound, f"d={d}: var {var:.1f} > 1.05 x {bound:.1f}"
