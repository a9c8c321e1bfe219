import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from blockscan.blocks import build_blocks
from blockscan.errors import ValidationError
from blockscan.simulate import (SimulationConfig, check_correlation, founder_block, hadamard_power,
                                metabolite_correlation, pve_bound, sample_genotypes, select_causal_snp,
                                simulate_dataset, simulate_genome, source_matrix, subgroup_config,
                                trait_groups, vldl_correlation, whole_profile_affected, whole_profile_config,
                                write_truth)


@pytest.fixture(scope="module")
def source():
    return founder_block(12, 0.9, n_individuals=300, seed=5)


class TestCorrelationFixtures:
    def test_metabolite_matrix_valid(self):
        C = metabolite_correlation()
        assert C.shape == (137, 137)
        check_correlation(C)
        assert sum(len(v) for v in trait_groups().values()) == 137

    def test_vldl_block_is_strongly_correlated(self):
        V = vldl_correlation()
        off = V[~np.eye(31, dtype=bool)]
        assert V.shape == (31, 31) and off.min() > 0.5

    def test_hadamard_arithmetic(self):
        C = np.array([[1.0, 0.9], [0.9, 1.0]])
        assert hadamard_power(C, 10)[0, 1] == pytest.approx(0.9**10) == pytest.approx(0.3487, abs=1e-4)
        assert_array_equal(hadamard_power(C, 1), C)

    @pytest.mark.parametrize("k", [10, 20, 40, 80])
    def test_hadamard_psd(self, k):
        for C in (vldl_correlation(), metabolite_correlation()):
            assert np.linalg.eigvalsh(hadamard_power(C, k))[0] >= -1e-10

    @pytest.mark.parametrize("k", [0.5, 2.5, 0, -1, True])
    def test_hadamard_rejects_non_positive_integers(self, k):
        with pytest.raises(ValidationError):
            hadamard_power(np.eye(2), k)

    def test_hadamard_monotone(self):
        V = vldl_correlation()
        off = ~np.eye(31, dtype=bool)
        prev = np.abs(V[off])
        for k in (2, 10, 20, 40, 80):
            cur = np.abs(hadamard_power(V, k)[off])
            assert np.all(cur <= prev + 1e-15)
            prev = cur

    def test_check_correlation_errors(self):
        with pytest.raises(ValidationError):
            check_correlation(np.array([[1.0, 0.5], [0.4, 1.0]]))
        with pytest.raises(ValidationError):
            check_correlation(np.array([[2.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(ValidationError):
            check_correlation(np.array([[1.0, 0.99, -0.99], [0.99, 1.0, 0.99], [-0.99, 0.99, 1.0]]))


class TestPve:
    def test_examples(self):
        assert pve_bound(1.0, 0.5) == pytest.approx(1 / 3)
        assert pve_bound(0.0, 0.3) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-4, 0.3), st.floats(0.0, 0.5))
    def test_small_effect_bound(self, b, v):
        assert pve_bound(b, v) <= 0.5 * b**2 + 1e-15

    def test_negative(self):
        with pytest.raises(ValidationError):
            pve_bound(-1.0, 0.5)


class TestGenotypes:
    def test_rows_come_from_source(self, source):
        src = source_matrix(source)
        G = sample_genotypes(src, 50, 1)
        rows = {tuple(r) for r in src.values}
        assert all(tuple(r) in rows for r in G.values)

    def test_allele_frequencies(self, source):
        src = source_matrix(source)
        G = sample_genotypes(src, 10 * src.n_samples, 2)
        assert np.all(np.abs(G.values.mean(0) / 2 - src.values.mean(0) / 2) < 0.05)

    def test_deterministic(self, source):
        src = source_matrix(source)
        assert_array_equal(sample_genotypes(src, 40, 3).values, sample_genotypes(src, 40, 3).values)

    def test_founder_block_hits_target(self, source):
        assert source.genotypes.shape == (300, 12)
        assert abs(source.rho - 0.9) < 0.02
        G = source.genotypes.astype(float)
        r = np.corrcoef(G, rowvar=False)[source.causal]
        assert abs(r[source.tag]) == pytest.approx(source.rho, abs=1e-12)

    def test_select_causal_snp(self):
        g = np.random.default_rng(0)
        base = g.integers(0, 3, 400).astype(float)
        G = np.column_stack([base, np.where(g.random(400) < 0.1, 2 - base, base), g.integers(0, 3, 400)])
        rho = abs(np.corrcoef(G[:, 0], G[:, 1])[0, 1])
        assert select_causal_snp(G, rho) in (0, 1)
        assert select_causal_snp(G, 0.0) == 2


class TestDataset:
    def test_whole_profile_dimensions(self):
        ds = simulate_dataset(whole_profile_config(0.3, seed=1))
        assert ds.X.n_snps == 21 and ds.Y.n_traits == 137 and ds.Y.n_samples == 500
        aff = whole_profile_affected()
        assert len(aff) == 23
        assert sorted({s for _, s in aff}) == [-1, 1]
        assert sum(s == -1 for _, s in aff) == 7
        e = ds.truth.effects[0]
        for k, s in aff:
            assert 0.225 <= s * e[k] <= 0.3
        assert np.count_nonzero(e) == 23
        assert ds.truth.removed_snp_ids[0] not in ds.X.snp_ids
        assert 0.97 < ds.truth.rho[0] <= 1.0

    def test_null_dataset_has_no_effects(self):
        ds = simulate_dataset(whole_profile_config(0.0, seed=2))
        assert not np.any(ds.truth.effects[0])

    def test_same_seed_same_data(self):
        a = simulate_dataset(subgroup_config(0.2, 1, seed=9))
        b = simulate_dataset(subgroup_config(0.2, 1, seed=9))
        assert_array_equal(a.Y.values, b.Y.values)
        assert_array_equal(a.X.values, b.X.values)

    def test_causal_out_of_range(self, source):
        cfg = SimulationConfig(source_matrix(source), 50, ((99, True),), 0.2, ((0, 1),), np.eye(3))
        with pytest.raises(ValidationError):
            simulate_dataset(cfg)

    def test_config_validation(self, source):
        src = source_matrix(source)
        with pytest.raises(ValidationError):
            SimulationConfig(src, 50, ((0, True),), 0.2, (), np.eye(3))
        with pytest.raises(ValidationError):
            SimulationConfig(src, 50, ((0, True),), 0.2, ((5, 1),), np.eye(3))
        with pytest.raises(ValidationError):
            SimulationConfig(src, 50, ((0, True),), 0.2, ((0, 1),), np.eye(3), corr_power=1.5)

    def test_noise_fidelity(self):
        target = hadamard_power(vldl_correlation(), 10)
        cfg = SimulationConfig(source_matrix(founder_block(6, 0.9, seed=1)), 10_000, ((0, True),), 0.0, (),
                               vldl_correlation(), corr_power=10, seed=3)
        Y = simulate_dataset(cfg).Y.values
        assert np.abs(np.corrcoef(Y, rowvar=False) - target).max() < 0.05

    def test_removal_lowers_best_snp_correlation(self, source):
        src = source_matrix(source)
        kept = SimulationConfig(src, 2000, ((source.causal, False),), 0.5, ((0, 1), (1, 1)), np.eye(4), seed=4)
        removed = SimulationConfig(src, 2000, ((source.causal, True),), 0.5, ((0, 1), (1, 1)), np.eye(4), seed=4)

        def best(ds):
            X, Y = ds.X.values, ds.Y.values[:, :2]
            R = np.corrcoef(np.column_stack([X, Y]), rowvar=False)[: X.shape[1], X.shape[1]:]
            return np.nanmax(np.abs(R))

        with np.errstate(invalid="ignore", divide="ignore"):
            assert best(simulate_dataset(removed)) < best(simulate_dataset(kept))

    def test_two_causal_snps_kept(self, source):
        cfg = SimulationConfig(source_matrix(source), 100, ((0, False), (3, False)), 0.4, ((0, 1),), np.eye(2))
        ds = simulate_dataset(cfg)
        assert ds.X.n_snps == 12 and len(ds.truth.effects) == 2 and ds.truth.removed_snp_ids == ()


class TestGenome:
    def test_layout_and_truth(self, tmp_path):
        gm = simulate_genome(12, 80, seed=1, causal_block=4, beta_max=0.3, affected_traits=((0, 1), (2, -1)))
        part = build_blocks(gm.X.snps)
        assert len(part) == 12
        assert [b.n_snps for b in part] == [s - (i == 4) for i, s in enumerate(gm.block_sizes)]
        assert gm.truth.block_ids == (4,)
        write_truth(gm.truth, tmp_path / "truth.tsv")
        lines = (tmp_path / "truth.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["causal_block_id", "removed_snp_ids", "realized_rho", "affected_traits",
                                        "effects"]
        fields = lines[1].split("\t")
        assert fields[0] == "4" and fields[3] == "0,2"
        e = [float(x) for x in fields[4].split(",")]
        assert e[0] > 0 > e[1]

    def test_null_truth_file(self, tmp_path):
        write_truth(None, tmp_path / "t.tsv")
        assert len((tmp_path / "t.tsv").read_text().splitlines()) == 1

    def test_deterministic(self):
        a = simulate_genome(5, 50, seed=7)
        b = simulate_genome(5, 50, seed=7)
        assert_array_equal(a.X.values, b.X.values)
        assert_allclose(a.Y.values, b.Y.values)
