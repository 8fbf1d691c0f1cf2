"""Dataset generation: determinism, clipping, domain margins, file IO."""

import numpy as np
import pytest

from matfun import datagen
from matfun.errors import DatasetError
from matfun.oracles import eigenvalues


class TestSampleMatrix:
    def test_deterministic_across_runs(self):
        a = datagen.sample_matrix(3, datagen.sample_rng(42, "exp", 3, 0))
        b = datagen.sample_matrix(3, datagen.sample_rng(42, "exp", 3, 0))
        np.testing.assert_array_equal(a, b)

    def test_distinct_streams(self):
        a = datagen.sample_matrix(3, datagen.sample_rng(42, "exp", 3, 0))
        b = datagen.sample_matrix(3, datagen.sample_rng(42, "exp", 3, 1))
        assert not np.array_equal(a, b)

    def test_clipping(self):
        rng = datagen.sample_rng(0, "exp", 4, 0)
        for _ in range(50):
            a = datagen.sample_matrix(4, rng, sigma=10.0, clip=5.0)
            assert np.all(np.abs(a) <= 5.0)

    def test_empirical_mean_near_zero(self):
        rng = datagen.sample_rng(7, "exp", 1, 0)
        draws = np.array([datagen.sample_matrix(1, rng)[0, 0] for _ in range(100_000)])
        # clipped standard normal, se ~ 1/sqrt(N)
        assert abs(draws.mean()) <= 3.0 / np.sqrt(draws.size)


class TestMakeSample:
    def test_exp_never_rejects(self):
        counts = {}
        rng = datagen.sample_rng(1, "exp", 3, 0)
        datagen.make_sample(3, "exp", rng, rejection_counts=counts)
        assert counts == {}

    def test_injected_sign_target(self):
        target = datagen.target_for("sign", np.diag([2.0, -3.0]))
        np.testing.assert_allclose(target, np.diag([1.0, -1.0]), atol=1e-12)

    def test_log_rejection_rate_stable(self):
        rates = []
        for seed in (11, 12):
            counts = {}
            accepted = 0
            for i in range(300):
                rng = datagen.sample_rng(seed, "log", 3, i)
                datagen.make_sample(3, "log", rng, seed_index=i, rejection_counts=counts)
                accepted += 1
            total = accepted + counts.get("domain", 0)
            rates.append(counts.get("domain", 0) / total)
        assert abs(rates[0] - rates[1]) <= 0.1
        assert 0.0 < rates[0] < 0.95

    def test_sign_domain_margin_holds(self):
        for i in range(50):
            rng = datagen.sample_rng(3, "sign", 2, i)
            s = datagen.make_sample(2, "sign", rng, seed_index=i)
            spec = eigenvalues(s.input)
            assert spec.min_real_abs > 1e-6
            assert np.linalg.norm(s.target @ s.target - np.eye(2)) <= 1e-6


class TestDatasetFiles:
    def test_write_read_bitexact(self, tmp_path):
        manifest, samples = datagen.generate("exp", 2, 100, master_seed=5)
        path = tmp_path / "d.jsonl"
        datagen.write_dataset(path, manifest, samples)
        back_manifest, back = datagen.read_dataset(path)
        assert back_manifest.count == 100
        assert back_manifest.master_seed == 5
        for s, t in zip(samples, back):
            np.testing.assert_array_equal(s.input, t.input)
            np.testing.assert_array_equal(s.target, t.target)

    def test_same_seed_same_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        datagen.generate_to_file(p1, "sign", 2, 50, master_seed=9)
        datagen.generate_to_file(p2, "sign", 2, 50, master_seed=9)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seed_different_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        datagen.generate_to_file(p1, "exp", 1, 20, master_seed=1)
        datagen.generate_to_file(p2, "exp", 1, 20, master_seed=2)
        assert p1.read_bytes() != p2.read_bytes()

    def test_manifest_count_mismatch(self, tmp_path):
        manifest, samples = datagen.generate("exp", 1, 10, master_seed=0)
        manifest.count = 11
        with pytest.raises(DatasetError):
            datagen.write_dataset(tmp_path / "bad.jsonl", manifest, samples)

    def test_corrupt_record_detected(self, tmp_path):
        manifest, samples = datagen.generate("exp", 1, 5, master_seed=0)
        path = tmp_path / "d.jsonl"
        datagen.write_dataset(path, manifest, samples)
        lines = path.read_text().splitlines()
        lines[3] = "{not json"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError):
            datagen.read_dataset(path)

    def test_missing_manifest_detected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"seed_index": 0}\n')
        with pytest.raises(DatasetError):
            datagen.read_dataset(path)
