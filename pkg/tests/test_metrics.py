import math
import random

import numpy as np
import pytest

from discoref.corpus_io import Clustering
from discoref.metrics import (
    PRF, EvalReport, avg_f1, b_cubed, ceaf_e, ceaf_m, evaluate, muc, t_test_one_tailed,
)

from oracles import brute_ceaf_e, direct_b3, direct_muc, f1, set_partitions, t_upper_tail, welch_t

GOLD = [[0, 1, 2]]
PRED = [[0, 1], [2]]


def test_muc_worked_example():
    r = muc(GOLD, PRED)
    assert (r.precision, r.recall) == (1.0, 0.5)
    assert r.f1 == pytest.approx(2 / 3, abs=1e-12)


def test_b_cubed_worked_example():
    r = b_cubed(GOLD, PRED)
    assert r.precision == 1.0
    assert r.recall == pytest.approx(5 / 9, abs=1e-12)
    assert r.f1 == pytest.approx(5 / 7, abs=1e-12)


def test_ceaf_e_worked_example():
    r = ceaf_e(GOLD, PRED)
    assert r.precision == pytest.approx(0.4, abs=1e-12)
    assert r.recall == pytest.approx(0.8, abs=1e-12)
    assert r.f1 == pytest.approx(8 / 15, abs=1e-12)


def test_avg_f1_examples():
    ones, zeros = PRF(1, 1, 1), PRF(0, 0, 0)
    assert avg_f1(ones, ones, ones) == 1.0
    assert avg_f1(zeros, zeros, zeros) == 0.0
    parts = [PRF(1, 1, 2 / 3), PRF(1, 1, 5 / 7), PRF(1, 1, 8 / 15)]
    assert avg_f1(*parts) == pytest.approx(0.638095, abs=1e-6)


def test_muc_all_singletons_is_zero():
    r = muc([[0], [1], [2]], [[0], [1], [2]])
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)


def test_b_cubed_giant_cluster_limit():
    n = 7
    r = b_cubed([[k] for k in range(n)], [list(range(n))])
    assert r.recall == 1.0 and r.precision == pytest.approx(1 / n)


def test_missing_pred_mentions_become_singletons():
    assert muc([[0, 1], [2]], [[0, 1]]) == muc([[0, 1], [2]], [[0, 1], [2]])
    assert ceaf_e([[0, 1], [2]], [[0, 1]]) == ceaf_e([[0, 1], [2]], [[0, 1], [2]])


def test_extra_pred_mention_rejected():
    with pytest.raises(ValueError):
        muc([[0, 1]], [[0, 1, 5]])


def test_accepts_clustering_objects():
    assert muc(Clustering.from_sets(GOLD), Clustering.from_sets(PRED)) == muc(GOLD, PRED)


def _parts(n):
    return [[list(c) for c in p] for p in set_partitions(range(n))]


def test_against_oracles_small_partitions():
    for n in range(1, 5):
        parts = _parts(n)
        for g in parts:
            for p in parts:
                m, b, c = muc(g, p), b_cubed(g, p), ceaf_e(g, p)
                assert m.recall == pytest.approx(direct_muc(g, p), abs=1e-9)
                assert m.precision == pytest.approx(direct_muc(p, g), abs=1e-9)
                assert b.recall == pytest.approx(direct_b3(g, p), abs=1e-9)
                assert b.precision == pytest.approx(direct_b3(p, g), abs=1e-9)
                cp, cr = brute_ceaf_e(g, p)
                assert (c.precision, c.recall) == pytest.approx((cp, cr), abs=1e-9)
                assert c.f1 == pytest.approx(f1(cp, cr), abs=1e-9)


def _random_partition(rng, n):
    labels = [rng.randrange(rng.randint(1, n)) for _ in range(n)]
    return [[k for k in range(n) if labels[k] == lab] for lab in set(labels)]


def test_symmetry_and_bounds():
    rng = random.Random(1)
    for _ in range(300):
        n = rng.randint(1, 15)
        g, p = _random_partition(rng, n), _random_partition(rng, n)
        for fn in (muc, b_cubed, ceaf_e):
            a, b = fn(g, p), fn(p, g)
            assert a.precision == pytest.approx(b.recall, abs=1e-12)
            assert a.recall == pytest.approx(b.precision, abs=1e-12)
            assert 0 <= a.precision <= 1 and 0 <= a.recall <= 1 and 0 <= a.f1 <= 1
        rep = EvalReport(muc(g, p), b_cubed(g, p), ceaf_e(g, p), ceaf_m(g, p))
        fs = [rep.muc.f1, rep.b_cubed.f1, rep.ceaf_e.f1]
        assert min(fs) - 1e-12 <= rep.avg_f1 <= max(fs) + 1e-12


def test_identity_gives_perfect_scores():
    rng = random.Random(2)
    for _ in range(200):
        g = _random_partition(rng, rng.randint(1, 12))
        for fn in (b_cubed, ceaf_e, ceaf_m):
            assert fn(g, g) == PRF(1.0, 1.0, 1.0)
        if any(len(c) > 1 for c in g):
            assert muc(g, g) == PRF(1.0, 1.0, 1.0)


def test_perfect_only_when_equal():
    # for the partitions of 4 mentions, B3 and CEAFe reach (1,1,1) only on identity
    parts = _parts(4)
    for g in parts:
        for p in parts:
            same = Clustering.from_sets(g) == Clustering.from_sets(p)
            assert (b_cubed(g, p) == PRF(1.0, 1.0, 1.0)) == same
            assert (ceaf_e(g, p) == PRF(1.0, 1.0, 1.0)) == same


def test_ceaf_m_worked_example():
    r = ceaf_m(GOLD, PRED)
    assert r.precision == r.recall == pytest.approx(2 / 3)


def test_evaluate_sums_counts_across_documents():
    rep = evaluate([(GOLD, PRED), ([[0, 1]], [[0, 1]])])
    # MUC: recall (1 + 1) / (2 + 1), precision (1 + 1) / (1 + 1)
    assert rep.muc.recall == pytest.approx(2 / 3)
    assert rep.muc.precision == 1.0
    lines = rep.lines()
    assert lines[0].startswith("MUC P=1.0000 R=0.6667")
    assert lines[-1].startswith("AVG_F1=")


def test_t_test_identical_samples():
    assert t_test_one_tailed([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 0.5)
    assert t_test_one_tailed([1.0, 1.0], [1.0, 1.0]) == (0.0, 0.5)


def test_t_test_separated_samples():
    b = np.array([1.0, 1.01, 0.99, 1.0, 1.02])
    t, p = t_test_one_tailed(b + 10, b)
    assert t > 0 and p < 0.01
    _, p_rev = t_test_one_tailed(b, b + 10)
    assert p_rev > 0.99


def test_t_test_against_quadrature_oracle():
    a = [86.5, 86.6, 86.4, 86.5, 86.6]
    b = [85.8, 85.7, 85.9, 85.8, 85.8]
    t, p = t_test_one_tailed(a, b)
    t_ref, df = welch_t(a, b)
    assert t == pytest.approx(t_ref, rel=1e-12)
    assert p == pytest.approx(t_upper_tail(t_ref, df), rel=1e-6, abs=1e-15)
    assert p < 0.01


def test_t_test_oracle_random_samples():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.normal(0.3, 1.0, 5)
        b = rng.normal(0.0, 2.0, 6)
        t, p = t_test_one_tailed(a, b)
        t_ref, df = welch_t(a, b)
        assert p == pytest.approx(t_upper_tail(t_ref, df), rel=1e-6, abs=1e-12)


def test_t_test_paired():
    a = [1.0, 2.0, 3.0, 4.0]
    b = [0.5, 1.4, 2.6, 3.5]
    t, p = t_test_one_tailed(a, b, paired=True)
    d = np.subtract(a, b)
    t_ref = d.mean() / (d.std(ddof=1) / math.sqrt(len(d)))
    assert t == pytest.approx(t_ref)
    assert p == pytest.approx(t_upper_tail(t_ref, len(d) - 1), rel=1e-6)
    with pytest.raises(ValueError):
        t_test_one_tailed([1, 2], [1, 2, 3], paired=True)


def test_t_test_small_sample_rejected():
    with pytest.raises(ValueError):
        t_test_one_tailed([1.0], [1.0, 2.0])


def test_t_test_zero_variance_unequal_means():
    t, p = t_test_one_tailed([2.0, 2.0], [1.0, 1.0])
    assert math.isinf(t) and p == 0.0
