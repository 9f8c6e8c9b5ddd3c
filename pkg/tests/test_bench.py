import math
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from ricount.bench import (
    ALL_METHODS,
    ConfigError,
    EstimateRecord,
    ExperimentConfig,
    config_template,
    load_dataset,
    mre,
    param_study,
    parse_config,
    run_experiment,
    summarize,
    write_results,
)
from ricount.core import Category, true_subset_count

from conftest import dataset_from_lists, dataset_with_counts


def small_config(**overrides) -> ExperimentConfig:
    base = dict(
        dataset="synthetic",
        domain_size=12,
        category_lo=1,
        category_hi=4,
        methods=("RR", "NVP-LM"),
        epsilons=(1.0,),
        trials=2,
        seed=7,
        synthetic_n=80,
        synthetic_mean_set_size=1.0,
        synthetic_shape="uniform",
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfig:
    def test_template_round_trip(self, tmp_path):
        cfg = small_config(epsilons=(0.5, 1.0), out="resdir", synthetic_seed=11)
        path = tmp_path / "exp.conf"
        path.write_text(config_template(cfg), encoding="utf-8")
        assert parse_config(path) == cfg

    def test_parse_tolerates_comments_and_spacing(self, tmp_path):
        path = tmp_path / "exp.conf"
        path.write_text(
            "# comment\n\ndataset = synthetic\ndomain_size=12\n"
            "category_lo = 1\ncategory_hi = 4\n"
            "methods = RR , NVP-LM\nepsilons = 1.0, 2.0\n"
            "  trials   =   3  \nseed = 1\nsynthetic_n = 80\n",
            encoding="utf-8",
        )
        cfg = parse_config(path)
        assert cfg.methods == ("RR", "NVP-LM")
        assert cfg.epsilons == (1.0, 2.0)
        assert cfg.trials == 3

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "exp.conf"
        path.write_text("dataset = synthetic\nbogus_key = 3\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r":2: unknown key 'bogus_key'"):
            parse_config(path)
        path.write_text("dataset = synthetic\ntrials = abc\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r":2: bad value for trials"):
            parse_config(path)
        path.write_text("just a line\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r":1: expected key = value"):
            parse_config(path)

    def test_parse_missing_keys(self, tmp_path):
        path = tmp_path / "exp.conf"
        path.write_text("dataset = synthetic\ndomain_size = 12\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="missing required keys"):
            parse_config(path)

    def test_parse_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            parse_config(tmp_path / "nope.conf")

    def test_validate_rejects_bad_fields(self):
        with pytest.raises(ConfigError, match="category"):
            small_config(category_lo=5, category_hi=4).validate()
        with pytest.raises(ConfigError, match="unknown method"):
            small_config(methods=("RR", "XXX")).validate()
        with pytest.raises(ConfigError, match="positive"):
            small_config(epsilons=(1.0, -0.5)).validate()
        with pytest.raises(ConfigError, match="trials"):
            small_config(trials=0).validate()
        with pytest.raises(ConfigError, match="threads"):
            small_config(threads=0).validate()
        with pytest.raises(ConfigError, match="shape"):
            small_config(synthetic_shape="spiky").validate()

    def test_validate_rejects_infeasible_cri_budget(self):
        # d = 100 needs epsilon above ln 99 for the flag channel
        cfg = small_config(category_hi=100, domain_size=200, methods=("CRI",))
        with pytest.raises(ConfigError, match="CRI needs epsilon"):
            cfg.validate()
        ok = replace(cfg, epsilons=(math.log(99) + 0.5,))
        ok.validate()

    def test_method_catalog(self):
        assert set(small_config().methods) <= set(ALL_METHODS)


class TestRunExperiment:
    def test_records_follow_config_order(self):
        cfg = small_config(methods=("RR", "NVP-LM"), epsilons=(2.0, 1.0), trials=2)
        records = run_experiment(cfg)
        assert len(records) == 2 * 2 * 2
        keys = [(r.method, r.epsilon, r.trial) for r in records]
        assert keys == [
            (m, e, t) for m in ("RR", "NVP-LM") for e in (2.0, 1.0) for t in (0, 1)
        ]

    def test_deterministic_and_thread_invariant(self):
        cfg = small_config()
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        c = run_experiment(replace(cfg, threads=2))
        assert a == b
        assert a == c

    def test_relative_error_definition(self):
        records = run_experiment(small_config(trials=1))
        for r in records:
            assert r.relative_error == abs(r.estimate - r.truth) / r.truth

    def test_zero_truth_falls_back_to_absolute_error(self):
        ds = dataset_from_lists([[3], [4], [3, 4]], 4)
        cfg = small_config(domain_size=4, category_hi=2, methods=("RR",), trials=1)
        with pytest.warns(UserWarning, match="true count is zero"):
            records = run_experiment(cfg, dataset=ds)
        assert records[0].truth == 0.0
        assert records[0].relative_error == abs(records[0].estimate)

    def test_two_phase_methods_share_split_stream(self):
        # per-trial split streams are derived from (seed, trial) only, so
        # CRIAD and PSP see the same pilot cohort within a trial
        from ricount.bench import _SPLIT_TAG
        from ricount.core import derive_generator

        cfg = small_config()
        a = derive_generator(cfg.seed, _SPLIT_TAG, 0).permutation(10)
        b = derive_generator(cfg.seed, _SPLIT_TAG, 0).permutation(10)
        assert np.array_equal(a, b)


class TestSummaries:
    def test_summarize_hand_check(self):
        recs = [
            EstimateRecord("A", 1.0, 0, 110.0, 100.0, 0.1),
            EstimateRecord("A", 1.0, 1, 70.0, 100.0, 0.3),
            EstimateRecord("B", 1.0, 0, 95.0, 100.0, 0.05),
        ]
        rows = summarize(recs)
        assert [(r.method, r.epsilon) for r in rows] == [("A", 1.0), ("B", 1.0)]
        assert rows[0].mre == pytest.approx(0.2)
        assert rows[0].std == pytest.approx(float(np.std([0.1, 0.3], ddof=1)))
        assert rows[1].std == 0.0

    def test_mre_rejects_empty(self):
        with pytest.raises(ValueError):
            mre([])
        assert mre([0.25, 0.75]) == pytest.approx(0.5)

    def test_write_results_format_and_determinism(self, tmp_path):
        cfg = small_config()
        records = run_experiment(cfg)
        p1, s1 = write_results(records, tmp_path / "one")
        p2, s2 = write_results(records, tmp_path / "two")
        assert p1.read_bytes() == p2.read_bytes()
        assert s1.read_bytes() == s2.read_bytes()
        lines = p1.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "method,epsilon,trial,estimate,truth,relative_error"
        first = lines[1].split(",")
        assert first[0] == "RR" and first[1] == "1.0"
        # shortest-repr floats survive a text round trip exactly
        assert float(first[3]) == records[0].estimate
        assert s1.read_text(encoding="utf-8").splitlines()[0] == "method,epsilon,mre,std"


class TestDatasets:
    def test_synthetic_loading_is_deterministic(self):
        cfg = small_config()
        a, b = load_dataset(cfg), load_dataset(cfg)
        assert np.array_equal(a.items, b.items)
        assert np.array_equal(a.indptr, b.indptr)

    def test_synthetic_seed_decouples_data_from_protocol_seed(self):
        cfg = small_config(synthetic_seed=5)
        other = replace(cfg, seed=99)
        a, b = load_dataset(cfg), load_dataset(other)
        assert np.array_equal(a.items, b.items)

    def test_missing_transactions_file_is_config_error(self):
        cfg = small_config(dataset="/nonexistent/path.txt")
        with pytest.raises(ConfigError, match="cannot load dataset"):
            load_dataset(cfg)


class TestParamStudy:
    def test_counts_cover_repeats_and_are_deterministic(self):
        ds = dataset_with_counts([0] * 150 + [1] * 200 + [2] * 50, 6)
        a = param_study(ds, Category(1, 6), 1.0, repeats=3, seed=4)
        b = param_study(ds, Category(1, 6), 1.0, repeats=3, seed=4)
        assert a == b
        assert sum(a.values()) == 3
        from ricount.criad import implied_epsilon

        for triple in a:
            assert implied_epsilon(6, triple) <= 1.0 + 1e-9


def cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "ricount", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        timeout=120,
    )


CONFIG_TEXT = """\
dataset = synthetic
domain_size = 12
category_lo = 1
category_hi = 4
methods = RR,NVP-LM
epsilons = 1.0
trials = 2
seed = 7
synthetic_n = 80
synthetic_mean_set_size = 1.0
synthetic_shape = uniform
"""


class TestCli:
    def test_gen_then_run_from_file(self, tmp_path):
        data = tmp_path / "tx.txt"
        gen = cli("gen", "--out", str(data), "--n", "50", "--domain-size", "20", "--seed", "3")
        assert gen.returncode == 0, gen.stderr
        assert "wrote 50 users" in gen.stdout
        conf = tmp_path / "exp.conf"
        conf.write_text(
            f"dataset = {data}\ndomain_size = 20\ncategory_lo = 1\n"
            "category_hi = 5\nmethods = RR\nepsilons = 1.0\ntrials = 1\nseed = 2\n"
            f"out = {tmp_path / 'res'}\n",
            encoding="utf-8",
        )
        run = cli("run", "--config", str(conf))
        assert run.returncode == 0, run.stderr
        assert (tmp_path / "res" / "results.csv").exists()
        assert (tmp_path / "res" / "summary.csv").exists()

    def test_gen_rejects_bad_parameters(self, tmp_path):
        res = cli("gen", "--out", str(tmp_path / "x.txt"), "--n", "10",
                  "--domain-size", "20", "--mean-set-size", "30")
        assert res.returncode == 2
        assert "error:" in res.stderr

    def test_run_is_byte_deterministic(self, tmp_path):
        conf = tmp_path / "exp.conf"
        conf.write_text(CONFIG_TEXT, encoding="utf-8")
        r1 = cli("run", "--config", str(conf), "--out", str(tmp_path / "r1"))
        r2 = cli("run", "--config", str(conf), "--out", str(tmp_path / "r2"))
        assert r1.returncode == 0 and r2.returncode == 0
        assert (tmp_path / "r1" / "results.csv").read_bytes() == (
            tmp_path / "r2" / "results.csv"
        ).read_bytes()

    def test_run_bad_config_exits_2(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("dataset = synthetic\nwhat = 1\n", encoding="utf-8")
        res = cli("run", "--config", str(conf))
        assert res.returncode == 2
        assert "error:" in res.stderr

    def test_audit_battery_passes(self):
        res = cli("audit")
        assert res.returncode == 0, res.stdout
        assert "ok" in res.stdout and "VIOLATION" not in res.stdout

    def test_audit_single_protocol(self):
        res = cli("audit", "--protocol", "CRIAD", "--d", "4", "--m", "1", "--s", "1", "--g", "1")
        assert res.returncode == 0
        assert "CRIAD(d=4" in res.stdout

    def test_audit_missing_arguments_exit_2(self):
        res = cli("audit", "--protocol", "CRIAD", "--d", "4")
        assert res.returncode == 2
        assert "needs --d --m --s --g" in res.stderr

    def test_select_params_reports_choices(self, tmp_path):
        conf = tmp_path / "exp.conf"
        conf.write_text(CONFIG_TEXT, encoding="utf-8")
        res = cli("select-params", "--config", str(conf), "--epsilon", "1.0", "--repeats", "2")
        assert res.returncode == 0, res.stderr
        assert "picked" in res.stdout
