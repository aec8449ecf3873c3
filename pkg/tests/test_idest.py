import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svlab.errors import ContractError
from svlab.idest import dof_round, knn, mle_id, prepare_cloud
from svlab.rng import Rng


def uniform_cloud(seed, n, d):
    return Rng(seed).uniform(size=(n, d))


class TestKnn:
    def test_collinear_example(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
        assert np.allclose(knn(pts, 1, 2), [1.0, 2.0])

    def test_matches_full_sort_oracle(self):
        pts = uniform_cloud(5, 200, 4)
        for qi in (0, 17, 199):
            d = np.linalg.norm(pts - pts[qi], axis=1)
            expect = np.sort(np.delete(d, qi))[:10]
            assert np.allclose(knn(pts, qi, 10), expect)

    def test_k_too_large(self):
        with pytest.raises(ContractError):
            knn(uniform_cloud(1, 5, 2), 0, 5)

    def test_duplicates_positive_after_jitter(self):
        base = uniform_cloud(7, 50, 3)
        dup = np.vstack([base, base[:10]])
        cleaned, flagged = prepare_cloud(dup)
        assert flagged
        assert np.all(knn(cleaned, 0, 5) > 0)


class TestMleId:
    def test_line_segment(self):
        t = Rng(0).uniform(size=1000)
        line = np.stack([t, 2 * t, -t], axis=1)
        est = mle_id(line, 10, 20)
        assert 0.9 <= est.value <= 1.1
        assert len(est.per_k) == 11

    def test_sphere_surface(self):
        u = Rng(1).normal(size=(2000, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        assert 1.8 <= mle_id(u, 10, 20).value <= 2.2

    def test_three_cube(self):
        assert 2.6 <= mle_id(uniform_cloud(2, 2000, 3), 10, 20).value <= 3.4

    def test_scaling_invariance_exact_cancellation(self):
        c = uniform_cloud(3, 2000, 3)
        base = mle_id(c, 10, 20).value
        scaled = mle_id(c * 37.5, 10, 20).value
        assert abs(scaled - base) / base < 1e-9

    def test_rotation_and_translation_invariance(self):
        c = uniform_cloud(4, 2000, 3)
        base = mle_id(c, 10, 20).value
        q, _ = np.linalg.qr(Rng(9).normal(size=(3, 3)))
        rotated = mle_id(c @ q + 11.0, 10, 20).value
        assert abs(rotated - base) / base < 1e-9

    def test_monotone_in_dimension(self):
        vals = [mle_id(uniform_cloud(10 + d, 2000, d), 10, 20).value
                for d in (1, 2, 3, 5)]
        assert vals == sorted(vals)

    def test_k_range_contract(self):
        with pytest.raises(ContractError):
            mle_id(uniform_cloud(5, 30, 2), 1, 10)
        with pytest.raises(ContractError):
            mle_id(uniform_cloud(5, 30, 2), 10, 40)


class TestDofRound:
    @pytest.mark.parametrize("value,expected", [
        (2.16, 2), (2.05, 2), (4.71, 4), (4.89, 4), (5.34, 6), (2.0, 2),
        (1.0, 2), (0.4, 0 + 2 * 0),  # 0.4 -> round(0.2) = 0
    ])
    def test_reported_roundings(self, value, expected):
        if value == 0.4:
            assert dof_round(value) == 0
        else:
            assert dof_round(value) == expected

    def test_half_away_from_zero(self):
        assert dof_round(3.0) == 4  # 1.5 rounds away from zero
        assert dof_round(1.0) == 2

    def test_non_positive_rejected(self):
        with pytest.raises(ContractError):
            dof_round(0.0)
        with pytest.raises(ContractError):
            dof_round(-1.0)

    @given(st.floats(min_value=0.01, max_value=50.0))
    @settings(max_examples=200, deadline=None)
    def test_always_even_nonnegative(self, x):
        out = dof_round(x)
        assert out % 2 == 0
        assert out >= 0
        assert abs(out - x) <= 1.0 + 1e-9
