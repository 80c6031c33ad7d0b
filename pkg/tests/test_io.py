import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxent_smc.config import ExperimentConfig, seed_streams, true_parameters
from maxent_smc.exceptions import ConfigurationError
from maxent_smc.io import (ObservationFile, dump_json, load_json, read_csv, read_moments,
                           read_observations, write_csv, write_observations)

bit_arrays = st.tuples(st.integers(1, 70), st.integers(1, 30), st.integers(0, 2 ** 32 - 1)).map(
    lambda t: (np.random.default_rng(t[2]).random((t[1], t[0])) < 0.5).astype(np.uint8))


class TestObservations:
    @given(bit_arrays, st.booleans())
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, tmp_path_factory, states, packed):
        path = tmp_path_factory.mktemp("obs") / "obs"
        lam = np.linspace(-1, 1, 3)
        write_observations(ObservationFile(states, 3, lam, "exact", "abc", "0.1.0"), path, packed)
        back = read_observations(path)
        np.testing.assert_array_equal(back.states, states)
        assert back.states.dtype == np.uint8
        np.testing.assert_array_equal(back.lam, lam)
        assert (back.seed, back.sampler, back.config_hash) == (3, "exact", "abc")

    def test_text_layout(self, tmp_path):
        path = tmp_path / "o.txt"
        states = np.array([[0, 1, 1], [1, 0, 0]], dtype=np.uint8)
        write_observations(ObservationFile(states, None, None), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# maxent-smc observations v1"
        assert lines[-2:] == ["011", "100"]
        assert "# lambda=null" in lines

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# d=3\n010\n01\n")
        with pytest.raises(ConfigurationError, match="exactly d=3"):
            read_observations(path)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# M=3\n010\n011\n")
        with pytest.raises(ConfigurationError, match="M=3"):
            read_observations(path)

    def test_non_bits(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("012\n")
        with pytest.raises(ConfigurationError):
            read_observations(path)

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            read_observations(tmp_path / "nope.txt")


class TestMoments:
    def test_formats(self, tmp_path):
        (tmp_path / "a.json").write_text("[0.5, 0.25, 0.5]")
        (tmp_path / "b.json").write_text('{"moments": [0.5, 0.25, 0.5]}')
        (tmp_path / "c.txt").write_text("# moments\n0.5 0.25\n0.5\n")
        for name in ("a.json", "b.json", "c.txt"):
            np.testing.assert_array_equal(read_moments(tmp_path / name), [0.5, 0.25, 0.5])


class TestCSV:
    def test_full_precision(self, tmp_path):
        rows = [[1, np.pi, -1e-300], [2, 1 / 3, 2.0 ** 0.5]]
        write_csv(tmp_path / "t.csv", ["n", "a", "b"], rows, {"seed": 1, "version": "0.1.0"})
        prov, header, data = read_csv(tmp_path / "t.csv")
        assert prov == {"seed": "1", "version": "0.1.0"}
        assert header == ["n", "a", "b"]
        np.testing.assert_array_equal(data, np.array(rows, dtype=float))
        assert "\n1,3.1415926535897931," in (tmp_path / "t.csv").read_text()

    def test_json_numpy(self, tmp_path):
        dump_json({"a": np.arange(3), "b": np.float64(0.1)}, tmp_path / "x.json")
        assert load_json(tmp_path / "x.json") == {"a": [0, 1, 2], "b": 0.1}


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            ExperimentConfig.from_dict({"dd": 3})

    def test_lambda_alias(self):
        cfg = ExperimentConfig.from_dict({"lambda": [1.0]})
        assert cfg.lam == [1.0]
        assert cfg.to_dict()["lambda"] == [1.0]

    def test_hash_ignores_paths(self):
        a = ExperimentConfig(out_dir="x", observations="o1")
        b = ExperimentConfig(out_dir="y", observations="o2")
        assert a.hash() == b.hash()
        assert a.hash() != ExperimentConfig(seed=1).hash()
        assert a.hash({"observations_sha256": "1"}) != a.hash({"observations_sha256": "2"})

    def test_out_dir_env(self, monkeypatch):
        monkeypatch.setenv("MAXENT_SMC_OUT_DIR", "/tmp/elsewhere")
        assert ExperimentConfig().resolve_out_dir() == "/tmp/elsewhere"
        assert ExperimentConfig(out_dir="here").resolve_out_dir() == "here"

    def test_relative_paths_follow_config(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"mode": "mle", "observations": "obs.txt"}))
        cfg = ExperimentConfig.load(tmp_path / "c.json")
        assert cfg.observations == str(tmp_path / "obs.txt")

    @pytest.mark.parametrize("bad", [{"mode": "fit"}, {"d": 0}, {"K": 0}, {"mode": "mle"},
                                     {"lam": "ones"}, {"burn_in": 1.0}, {"replicates": 0}])
    def test_validate(self, bad):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**bad).validate()

    def test_streams_independent_and_reproducible(self):
        a = [g.random() for g in seed_streams(4, 3)]
        b = [g.random() for g in seed_streams(4, 3)]
        assert a == b and len(set(a)) == 3

    def test_negate(self):
        cfg = ExperimentConfig(lam=[1.0, -2.0, 0.5], negate=True)
        np.testing.assert_array_equal(true_parameters(cfg, 3, None), [-1.0, 2.0, -0.5])
        with pytest.raises(ConfigurationError):
            true_parameters(cfg, 6, None)
