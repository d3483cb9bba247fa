import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_instance, random_instance
from oracles import coal_reference, indiral_reference, roal_reference
from pooldecode.decoders import (DecoderConfig, RecoveredSet, coal_scores, decode_coal,
                                 decode_indiral, decode_na1by1, decode_roal,
                                 default_psi_cb, psi0, psi0_prime, roal_scores,
                                 select_top_L)
from pooldecode.model import (ChannelStats, NoiseParams, Instance, TestDesign,
                              channel_stats, design_p, gen_singleton_design,
                              simulate_outcomes)


def stats(gamma0, Gamma):
    return ChannelStats(Gamma, gamma0, gamma0 * Gamma, 0.0, 0.0)


class TestScores:
    def test_roal_hand(self):
        inst = make_instance([[1, 1, 0], [0, 1, 1]], [0, 1])
        assert roal_scores(inst).scores.tolist() == [1, 1, 0]

    def test_roal_all_positive(self):
        inst = make_instance([[1, 1, 0], [0, 1, 1]], [1, 1])
        assert roal_scores(inst).scores.tolist() == [0, 0, 0]

    def test_coal_hand(self):
        inst = make_instance([[1, 0], [1, 1]], [0, 1])
        assert coal_scores(inst, 0.5).scores.tolist() == [0.5, -0.5]

    def test_coal_all_negative_is_column_weight(self):
        inst = make_instance([[1, 0, 1], [1, 1, 1]], [0, 0])
        assert coal_scores(inst, 0.7).scores.tolist() == [2, 1, 2]

    def test_coal_zero_psi_equals_roal(self):
        inst = random_instance(30, 3, 40, 0.1, 0.1, seed=4)
        assert np.array_equal(coal_scores(inst, 0.0).scores, roal_scores(inst).scores)

    def test_negative_psi(self):
        with pytest.raises(ValueError):
            coal_scores(make_instance([[1]], [0]), -0.1)

    @given(st.integers(0, 2**32), st.floats(0, 3))
    @settings(max_examples=40, deadline=None)
    def test_score_identity(self, seed, psi):
        inst = random_instance(25, 3, 30, 0.2, 0.1, seed=seed % 10_000)
        z = roal_scores(inst).scores
        w = inst.design.column_weights()
        assert ((z >= 0) & (z <= inst.design.M)).all()
        T = coal_scores(inst, psi).scores
        assert np.allclose(T, z - psi * (w - z))

    @given(st.integers(0, 2**32))
    @settings(max_examples=40, deadline=None)
    def test_label_equivariance(self, seed):
        inst = random_instance(20, 3, 25, 0.1, 0.1, seed=seed % 10_000)
        perm = np.random.default_rng(seed).permutation(20)
        X2 = inst.design.X[:, perm]
        S2 = np.flatnonzero(np.isin(perm, inst.defective_set))
        inst2 = Instance(TestDesign(X2, inst.design.p), S2, inst.noise, inst.y)
        assert np.array_equal(roal_scores(inst2).scores, roal_scores(inst).scores[perm])
        assert np.allclose(coal_scores(inst2, 0.3).scores, coal_scores(inst, 0.3).scores[perm])

    @given(st.integers(0, 2**32), st.floats(0, 2))
    @settings(max_examples=40, deadline=None)
    def test_noiseless_zero_score_law(self, seed, psi):
        inst = random_instance(30, 4, 30, seed=seed % 10_000)
        S = inst.defective_set
        z = roal_scores(inst).scores
        T = coal_scores(inst, psi).scores
        assert (z[S] == 0).all()
        assert (T[S] <= 0).all()
        if psi > 0:
            untested = inst.design.column_weights()[S] == 0
            assert np.array_equal(T[S] == 0, untested)


class TestPsi:
    def test_psi0_zero_dilution(self):
        assert psi0(stats(0.0, 0.3)) == 0.0

    def test_psi0_value(self):
        assert psi0(stats(0.2, 0.5)) == pytest.approx(0.1 / 0.9, rel=1e-14)

    def test_psi0_prime_zero(self):
        assert psi0_prime(stats(0.0, 0.3)) == 0.0

    def test_psi0_prime_first_branch(self):
        assert psi0_prime(stats(0.2, 0.5)) == pytest.approx(0.1111111111, abs=1e-9)

    def test_psi0_prime_second_branch(self):
        assert psi0_prime(stats(0.9, 0.4)) == pytest.approx(1 / 3, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            psi0(stats(1.0, 1.0))
        with pytest.raises(ValueError):
            psi0_prime(stats(0.0, 1.0))

    @given(st.integers(2, 400), st.floats(0, 0.49), st.floats(0, 0.49))
    @settings(max_examples=200, deadline=None)
    def test_psi0_below_one(self, K, u, q):
        assert psi0(channel_stats(design_p(K, u), K, NoiseParams(u, q))) < 1.0


class TestSelect:
    def test_hand(self):
        assert select_top_L(np.array([3, 1, 2]), 2).items.tolist() == [0, 2]

    def test_full(self):
        assert select_top_L(np.array([5, -1, 2, 0]), 4).items.tolist() == [0, 1, 2, 3]

    def test_lowest_index_ties(self):
        out = select_top_L(np.zeros(4), 2, "lowest-index")
        assert out.items.tolist() == [0, 1] and "tie_at_cut" in out.flags

    def test_bad_l(self):
        with pytest.raises(ValueError):
            select_top_L(np.zeros(3), 4)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            select_top_L(np.array([1.0, np.nan]), 1)

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            select_top_L(np.zeros(3), 1, "first")

    def test_random_ties_are_uniform(self):
        counts = np.zeros(5)
        for s in range(2000):
            counts[select_top_L(np.zeros(5), 1, "random", s).items[0]] += 1
        # each item expected 400 times, sd about 18
        assert (np.abs(counts - 400) < 80).all()

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=30), st.data(),
           st.floats(0.1, 10), st.floats(-10, 10), st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_positive_affine_invariance(self, vals, data, a, b, seed):
        s = np.array(vals, dtype=float)
        L = data.draw(st.integers(1, len(vals)))
        for rule in ("random", "lowest-index"):
            x = select_top_L(s, L, rule, seed).items
            y = select_top_L(a * s + b, L, rule, seed).items
            assert np.array_equal(x, y)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.data(),
           st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_selected_dominate_rest(self, vals, data, seed):
        s = np.array(vals)
        L = data.draw(st.integers(0, len(vals)))
        out = select_top_L(s, L, "random", seed).items
        assert len(out) == L and np.all(np.diff(out) > 0)
        rest = np.setdiff1d(np.arange(len(s)), out)
        if L and rest.size:
            assert s[out].min() >= s[rest].max()


class TestDecoderConfig:
    @pytest.mark.parametrize("kw", [dict(L=0), dict(L=2, psi_cb=-1.0), dict(L=2, tie_rule="x")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            DecoderConfig(**kw)


class TestRoAlCoAl:
    def test_noiseless_success(self):
        inst = random_instance(40, 3, 200, seed=1)
        assert (roal_scores(inst).scores[np.setdiff1d(np.arange(40), inst.defective_set)] > 0).all()
        assert decode_roal(inst, DecoderConfig(20)).success_against(inst.defective_set)
        assert decode_coal(inst, DecoderConfig(20)).success_against(inst.defective_set)

    @pytest.mark.parametrize("seed", range(5))
    def test_against_reference(self, seed):
        inst = random_instance(16, 2, 40, 0.05, 0.1, seed=seed)
        X, y = inst.design.X.tolist(), inst.y.tolist()
        psi = default_psi_cb(inst)
        for rule, key in (("lowest-index", list(range(16))),
                          ("random", np.random.default_rng(seed + 50).permutation(16).tolist())):
            cfg_r = DecoderConfig(4, None, rule, seed + 50)
            cfg_c = DecoderConfig(4, psi, rule, seed + 50)
            assert decode_roal(inst, cfg_r).items.tolist() == roal_reference(X, y, 4, key)
            assert decode_coal(inst, cfg_c).items.tolist() == coal_reference(X, y, 4, psi, key)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_coal_zero_psi_is_roal(self, seed):
        inst = random_instance(30, 3, 25, 0.1, 0.1, seed=seed)
        a = decode_coal(inst, DecoderConfig(10, 0.0, "random", seed))
        b = decode_roal(inst, DecoderConfig(10, None, "random", seed))
        assert np.array_equal(a.items, b.items)

    def test_default_psi(self):
        inst = random_instance(30, 3, 25, 0.1, 0.1, seed=2)
        assert default_psi_cb(inst) == psi0(channel_stats(inst.design.p, 3, inst.noise))


def singleton_instance(N, K, M, u=0.0, q=0.0, seed=0):
    rng = np.random.default_rng(seed)
    S = rng.choice(N, K, replace=False)
    return simulate_outcomes(gen_singleton_design(M, N, seed), S, NoiseParams(u, q),
                             seed + 1, seed + 2)


class TestNA1by1:
    def test_each_item_once_noiseless(self):
        X = np.eye(8, dtype=np.uint8)
        S = [2, 5]
        inst = simulate_outcomes(TestDesign(X, 1 / 8), S, NoiseParams(), 0, 0)
        out = decode_na1by1(inst, 6)
        assert out.success_against(S) and sorted(out.items) == [0, 1, 3, 4, 6, 7]

    def test_untested_item_scores_zero_and_flags(self):
        X = np.zeros((3, 5), dtype=np.uint8)
        X[[0, 1, 2], [0, 1, 1]] = 1
        inst = make_instance(X, [0, 0, 0])
        out = decode_na1by1(inst, 3, "lowest-index")
        assert out.items.tolist() == [0, 1, 2] and "tie_fallback" in out.flags

    def test_hand_count(self):
        # tests: item 0 neg, item 3 neg, item 3 neg, item 5 pos, item 7 neg, item 0 pos
        rows = [0, 3, 3, 5, 7, 0]
        X = np.zeros((6, 8), dtype=np.uint8)
        X[np.arange(6), rows] = 1
        inst = make_instance(X, [0, 0, 0, 1, 0, 1])
        out = decode_na1by1(inst, 2, "lowest-index")
        assert out.items.tolist() == [0, 3]  # counts: 3 -> 2; 0 and 7 -> 1
        assert decode_na1by1(inst, 3, "lowest-index").items.tolist() == [0, 3, 7]

    def test_rejects_pooled_design(self):
        with pytest.raises(ValueError):
            decode_na1by1(random_instance(10, 1, 10, seed=1), 2)

    def test_random_instance_success_with_many_tests(self):
        inst = singleton_instance(32, 3, 600, seed=4)
        assert decode_na1by1(inst, 10).success_against(inst.defective_set)


class TestInDirAl:
    def test_noiseless_abundant(self):
        inst = random_instance(40, 3, 400, seed=3)
        T = coal_scores(inst, 0.5).scores
        assert set(np.argsort(T, kind="stable")[:3]) == set(inst.defective_set)
        assert decode_indiral(inst, 20, 3, seed=1, psi_cb=0.5).success_against(inst.defective_set)

    @pytest.mark.parametrize("seed", range(4))
    def test_against_reference(self, seed):
        inst = random_instance(8, 1, 12, 0.05, 0.1, seed=seed)
        psi = default_psi_cb(inst, 1)
        out = decode_indiral(inst, 3, 1, seed=seed + 9)
        ref = indiral_reference(inst.design.X.tolist(), inst.y.tolist(), 3, 1, psi, seed + 9)
        assert out.items.tolist() == ref

    def test_full_complement(self):
        inst = random_instance(10, 2, 30, seed=2)
        out = decode_indiral(inst, 8, 2, seed=0, psi_cb=0.1)
        T = coal_scores(inst, 0.1).scores
        assert len(out) == 8 and not np.isin(np.argsort(T)[:1], out).any()

    def test_errors(self):
        inst = random_instance(10, 2, 30, seed=2)
        with pytest.raises(ValueError):
            decode_indiral(inst, 9, 2, seed=0)
        with pytest.raises(ValueError):
            decode_indiral(inst, 3, 0, seed=0)


def test_recovered_set_success():
    r = RecoveredSet(np.array([1, 4]))
    assert r.success_against([0, 2]) and not r.success_against([4])
