import numpy as np
import pytest
from hypothesis import given, strategies as st

from repmult.errors import AlignmentError, DegenerateInputError, ShapeError
from repmult.linalg import pearson
from repmult.svcca import (
    ActivationMatrix,
    CcaSpectrum,
    center_rows,
    svcca,
    svcca_correlations,
    svcca_similarity,
)


def act(values, fp="fp"):
    return ActivationMatrix("fc1", values, fp)


def random_invertible(rng, m):
    q1, _ = np.linalg.qr(rng.standard_normal((m, m)))
    q2, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return q1 @ np.diag(rng.uniform(0.5, 2.0, m)) @ q2


class TestActivationMatrix:
    def test_shape_properties(self):
        z = act(np.zeros((3, 5)))
        assert (z.neurons, z.samples) == (3, 5)

    def test_needs_two_samples(self):
        with pytest.raises(ShapeError):
            act(np.zeros((3, 1)))

    def test_subset_changes_fingerprint(self):
        z = act(np.arange(12.0).reshape(2, 6))
        s = z.subset([0, 2])
        np.testing.assert_array_equal(s.values, [[0.0, 2.0], [6.0, 8.0]])
        assert s.fingerprint != z.fingerprint
        assert s.fingerprint == z.subset([0, 2]).fingerprint


class TestCenterRows:
    def test_constant_row(self):
        np.testing.assert_array_equal(center_rows(act([[1.0, 1.0, 1.0]])).values, [[0.0, 0.0, 0.0]])

    def test_two_values(self):
        np.testing.assert_array_equal(center_rows(act([[0.0, 2.0]])).values, [[-1.0, 1.0]])

    def test_random_means(self, rng):
        z = act(rng.standard_normal((4, 50)) + 3.0, "abc")
        c = center_rows(z)
        assert np.all(np.abs(c.values.mean(axis=1)) < 1e-12)
        assert (c.layer_name, c.fingerprint) == ("fc1", "abc")


class TestCorrelations:
    def test_identical(self, rng):
        z = act(rng.standard_normal((6, 300)))
        spec = svcca_correlations(z, z)
        np.testing.assert_allclose(spec.correlations, 1.0, atol=1e-8)
        assert len(spec.correlations) == min(spec.k1, spec.k2)

    def test_affine_copy(self, rng):
        v = rng.standard_normal((8, 500))
        q = random_invertible(rng, 8)
        spec = svcca_correlations(act(v), act(q @ v + rng.standard_normal((8, 1))), 1.0)
        np.testing.assert_allclose(spec.correlations, 1.0, atol=1e-6)

    def test_single_neuron_matches_pearson(self, rng):
        x = rng.standard_normal(200)
        y = 0.3 * x + rng.standard_normal(200)
        spec = svcca_correlations(act(x[None]), act(y[None]))
        assert spec.correlations.shape == (1,)
        assert abs(spec.correlations[0] - abs(pearson(x, y))) < 1e-10

    def test_alignment_sample_count(self, rng):
        with pytest.raises(AlignmentError, match="sample alignment violated"):
            svcca_correlations(act(rng.standard_normal((2, 10))), act(rng.standard_normal((2, 11))))

    def test_alignment_fingerprint(self, rng):
        with pytest.raises(AlignmentError, match="sample alignment violated"):
            svcca_correlations(act(rng.standard_normal((2, 10)), "a"), act(rng.standard_normal((2, 10)), "b"))

    def test_rank_deficient_warning(self, rng):
        spec = svcca_correlations(act(rng.standard_normal((20, 10))), act(rng.standard_normal((20, 10))))
        assert spec.warnings and "rank-deficient" in spec.warnings[0]

    def test_duplicate_neurons_well_defined(self, rng):
        v = rng.standard_normal((3, 400))
        dup = np.vstack([v, v[:1]])
        spec = svcca_correlations(act(dup), act(v), 1.0)
        np.testing.assert_allclose(spec.correlations, 1.0, atol=1e-8)

    def test_symmetry(self, rng):
        a = act(rng.standard_normal((7, 400)))
        b = act(rng.standard_normal((5, 400)) + 0.5 * a.values[:5])
        np.testing.assert_allclose(svcca_correlations(a, b).correlations,
                                   svcca_correlations(b, a).correlations, atol=1e-8)

    def test_permutation_invariance(self, rng):
        a = rng.standard_normal((6, 300))
        b = rng.standard_normal((6, 300)) + a
        perm = rng.permutation(6)
        np.testing.assert_allclose(svcca_correlations(act(a), act(b)).correlations,
                                   svcca_correlations(act(a[perm]), act(b)).correlations, atol=1e-10)

    def test_independent_random_weakly_correlated(self):
        rng = np.random.default_rng(7)
        means = []
        for _ in range(20):
            spec = svcca_correlations(act(rng.standard_normal((10, 2000))), act(rng.standard_normal((10, 2000))))
            means.append(spec.correlations.mean())
        assert np.mean(means) < 0.3

    @given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 6))
    def test_correlations_in_unit_interval(self, seed, m1, m2):
        g = np.random.default_rng(seed)
        spec = svcca_correlations(act(g.standard_normal((m1, 40))), act(g.standard_normal((m2, 40))))
        rho = spec.correlations
        assert np.all((rho >= 0) & (rho <= 1))
        assert np.all(np.diff(rho) <= 1e-12)

    @given(st.integers(0, 2**31))
    def test_affine_invariance_either_side(self, seed):
        g = np.random.default_rng(seed)
        a = g.standard_normal((4, 120))
        b = g.standard_normal((5, 120)) + 0.5 * np.vstack([a, a[:1]])
        base = svcca_correlations(act(a), act(b), 1.0).correlations
        q = random_invertible(g, 5)
        moved = svcca_correlations(act(a), act(q @ b + g.standard_normal((5, 1))), 1.0).correlations
        np.testing.assert_allclose(moved, base, atol=1e-6)


class TestSimilarity:
    @pytest.mark.parametrize("rho, t, expected", [
        ([1.0, 1.0, 1.0], 20, 1.0),
        ([0.9, 0.5, 0.1], 2, 0.7),
        ([0.8], 20, 0.8),
    ])
    def test_examples(self, rho, t, expected):
        spec = CcaSpectrum(np.array(rho), len(rho), len(rho))
        assert svcca_similarity(spec, t) == pytest.approx(expected, abs=1e-15)

    def test_empty(self):
        with pytest.raises(DegenerateInputError):
            svcca_similarity(CcaSpectrum(np.array([]), 0, 0))

    def test_bad_top_t(self):
        with pytest.raises(ValueError):
            svcca_similarity(CcaSpectrum(np.array([0.5]), 1, 1), 0)

    def test_wrapper(self, rng):
        z = act(rng.standard_normal((5, 100)))
        assert svcca(z, z) == pytest.approx(1.0, abs=1e-8)
