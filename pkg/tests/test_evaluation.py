import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from keyforge.data import CharSequenceSample
from keyforge.evaluation import (
    ConfusionMatrix,
    EVAL_SET_SIZE,
    LabeledPair,
    build_test_pairs,
    metrics,
    render_table,
    report_to_dict,
    run_tests,
    sample_other_sequences,
)
from keyforge.nn import LayerSpec, NetworkParams
from keyforge.verifier import DIFFERENT_USER, SAME_USER, VerifierBundle

counts = st.integers(min_value=0, max_value=1000)


def oracle_metrics(tp, tn, fp, fn):
    """Independent re-implementation straight from the five formulas.

    Rational metrics go through Fraction, so equality with the float pipeline
    is exact (both are the correctly rounded double of the same rational).
    """
    total = tp + tn + fp + fn
    acc = float(Fraction(tp + tn, total))
    rec = float(Fraction(tp, fn + tp)) if fn + tp else 0.0
    pre = float(Fraction(tp, tp + fp)) if tp + fp else 0.0
    f1 = float(Fraction(2 * tp, 2 * tp + fn + fp)) if 2 * tp + fn + fp else 0.0
    den = (tn + fn) * (fp + tp) * (tn + fp) * (fn + tp)
    mcc = (tn * tp - fp * fn) / math.sqrt(den) if den else 0.0
    return acc, rec, pre, f1, mcc


def test_perfect_classifier():
    m = metrics(ConfusionMatrix(tp=10, tn=10, fp=0, fn=0))
    assert (m.accuracy, m.recall, m.precision, m.f1, m.mcc) == (1.0, 1.0, 1.0, 1.0, 1.0)
    assert m.flags == ()


def test_fully_wrong_classifier():
    m = metrics(ConfusionMatrix(tp=0, tn=0, fp=10, fn=10))
    assert m.accuracy == 0.0
    assert m.mcc == -1.0
    assert m.recall == 0.0
    assert m.precision == 0.0  # denominator tp+fp = 10, defined
    assert m.f1 == 0.0
    assert m.flags == ()


def test_zero_denominators_flagged():
    m = metrics(ConfusionMatrix(tp=0, tn=5, fp=0, fn=0))
    assert m.accuracy == 1.0
    assert set(m.flags) == {
        "recall_undefined", "precision_undefined", "f1_undefined", "mcc_undefined",
    }
    assert m.recall == m.precision == m.f1 == m.mcc == 0.0


def test_all_zero_matrix_is_error():
    with pytest.raises(ValueError):
        metrics(ConfusionMatrix(tp=0, tn=0, fp=0, fn=0))


def test_negative_count_rejected():
    with pytest.raises(ValueError):
        ConfusionMatrix(tp=-1, tn=0, fp=0, fn=0)


@given(counts, counts, counts, counts)
def test_metrics_match_brute_force_oracle(tp, tn, fp, fn):
    if tp + tn + fp + fn == 0:
        return
    m = metrics(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn))
    acc, rec, pre, f1, mcc = oracle_metrics(tp, tn, fp, fn)
    assert m.accuracy == acc
    assert m.recall == rec
    assert m.precision == pre
    assert m.f1 == f1
    assert m.mcc == mcc


@given(counts, counts, counts, counts)
def test_mcc_invariant_under_class_relabel(tp, tn, fp, fn):
    if tp + tn + fp + fn == 0:
        return
    a = metrics(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn))
    b = metrics(ConfusionMatrix(tp=tn, tn=tp, fp=fn, fn=fp))
    assert a.mcc == b.mcc


def test_table_one_resolution_is_representable():
    # 400 cross-product pairs make three-decimal accuracies like 0.945 exact
    assert 0.945 == 378 / 400
    assert 0.975 == 390 / 400


# ---------------------------------------------------------------------------
# pair building
# ---------------------------------------------------------------------------


def seq(value, user="u", source="real"):
    m = np.zeros((15, 5))
    m[:, 0] = value
    return CharSequenceSample(matrix=m, source=source, user_id=user)


def seq_set(value, n=EVAL_SET_SIZE, user="u", source="real"):
    return [seq(value + 1e-6 * i, user=user, source=source) for i in range(n)]


def test_build_test_pairs_cross_product():
    real = seq_set(0.0, user="alice")
    fake = seq_set(0.01, user="attacker", source="synthetic")
    fake_b = seq_set(0.02, user="attacker", source="synthetic")
    others = seq_set(0.5, user="bob")
    for test_id, expected in ((1, SAME_USER), (2, SAME_USER), (3, DIFFERENT_USER)):
        pairs = build_test_pairs(test_id, real, fake, fake_b, others)
        assert len(pairs) == 400
        assert all(p.expected == expected for p in pairs)
        assert len({(id(p.a), id(p.b)) for p in pairs}) == 400


def test_build_test_pairs_validates_sizes():
    real = seq_set(0.0)
    fake = seq_set(0.01)
    with pytest.raises(ValueError, match="real_others"):
        build_test_pairs(3, real, fake, fake, seq_set(0.5, n=19))
    # test 1 does not reference fake_b, so a wrong-size fake_b is fine there
    pairs = build_test_pairs(1, real, fake, seq_set(0.02, n=3), seq_set(0.5, n=7))
    assert len(pairs) == 400
    with pytest.raises(ValueError):
        build_test_pairs(4, real, fake, fake, seq_set(0.5))


def test_sample_other_sequences_excludes_target(rng):
    by_user = {
        "alice": seq_set(0.0, n=5, user="alice"),
        "bob": seq_set(0.1, n=5, user="bob"),
        "carol": seq_set(0.2, n=5, user="carol"),
    }
    drawn = sample_other_sequences(by_user, "alice", 40, rng)
    assert len(drawn) == 40
    users = {s.user_id for s in drawn}
    assert "alice" not in users
    assert users == {"bob", "carol"}


def test_sample_other_sequences_requires_other_users(rng):
    with pytest.raises(ValueError):
        sample_other_sequences({"alice": seq_set(0.0, n=3)}, "alice", 5, rng)


# ---------------------------------------------------------------------------
# running tests against a verifier
# ---------------------------------------------------------------------------


def identity_bundle(tau):
    w = np.zeros((64, 75))
    w[:, :64] = np.eye(64)
    net = NetworkParams(specs=[LayerSpec(75, 64, "identity")], weights=[w], biases=[np.zeros(64)])
    return VerifierBundle(network=net, tau=tau)


def oracle_pairs():
    """Sets whose cell distances make every expected decision correct at tau=1."""
    real = seq_set(0.00, user="alice")
    fake = seq_set(0.01, user="attacker", source="synthetic")
    fake_b = seq_set(0.02, user="attacker", source="synthetic")
    others = seq_set(5.0, user="bob")
    return {
        test_id: build_test_pairs(test_id, real, fake, fake_b, others)
        for test_id in (1, 2, 3)
    }


def test_run_tests_oracle_verifier_scores_one():
    bundle = identity_bundle(tau=1.0)
    report = run_tests(bundle, {"ordered": oracle_pairs()}, {"seed": 1})
    for test_id in (1, 2, 3):
        assert report.results["ordered"][test_id].accuracy == 1.0
    assert report.metadata == {"seed": 1}


def test_run_tests_coin_flip_verifier_is_near_chance():
    rng = np.random.default_rng(11)
    # 13 of the first 64 flattened cells carry the random value; the median of
    # |U - U'| for independent uniforms is 1 - sqrt(1/2), making decisions 50/50
    bundle = identity_bundle(tau=float(np.sqrt(13) * (1.0 - math.sqrt(0.5))))

    def noisy_set(user, source="real"):
        out = []
        for _ in range(EVAL_SET_SIZE):
            m = np.zeros((15, 5))
            m[:, 0] = rng.uniform(0.0, 1.0)
            out.append(CharSequenceSample(matrix=m, source=source, user_id=user))
        return out

    pairs = {
        test_id: build_test_pairs(
            test_id, noisy_set("alice"), noisy_set("attacker", "synthetic"),
            noisy_set("attacker", "synthetic"), noisy_set("bob"),
        )
        for test_id in (1, 2, 3)
    }
    report = run_tests(bundle, {"ordered": pairs})
    for test_id in (1, 2, 3):
        acc = report.results["ordered"][test_id].accuracy
        assert 0.35 < acc < 0.65  # 400 draws, ~4 sigma around 0.5


def test_run_tests_accuracy_matches_hand_counter():
    bundle = identity_bundle(tau=1.0)
    pairs = oracle_pairs()
    report = run_tests(bundle, {"ordered": pairs})
    for test_id, test_pairs in pairs.items():
        hand = 0
        for p in test_pairs:
            d = np.linalg.norm((p.a.matrix - p.b.matrix).reshape(-1)[:64])
            decision = SAME_USER if d <= 1.0 else DIFFERENT_USER
            hand += decision == p.expected
        assert report.results["ordered"][test_id].matches == hand


def test_confusion_accumulation_sides():
    bundle = identity_bundle(tau=1.0)
    report = run_tests(bundle, {"ordered": oracle_pairs()})
    r1 = report.results["ordered"][1]
    assert (r1.confusion.tp, r1.confusion.fn) == (400, 0)
    assert (r1.confusion.fp, r1.confusion.tn) == (0, 0)
    r3 = report.results["ordered"][3]
    assert (r3.confusion.tn, r3.confusion.fp) == (400, 0)
    assert (r3.confusion.tp, r3.confusion.fn) == (0, 0)


def test_report_rendering_and_dict():
    bundle = identity_bundle(tau=1.0)
    pairs = oracle_pairs()
    report = run_tests(
        bundle,
        {"ordered": pairs, "random": pairs},
        {"seeds": {"eval": 3}, "tau": 1.0, "checkpoints": {"verifier": "abc"}},
    )
    doc = report_to_dict(report)
    assert set(doc["conditions"]) == {"ordered", "random"}
    assert set(doc["conditions"]["ordered"]) == {"test1", "test2", "test3"}
    t1 = doc["conditions"]["ordered"]["test1"]
    assert t1["attack_acceptance_rate"] == 1.0
    assert t1["verifier_correct_rate"] == 0.0
    assert doc["metadata"]["seeds"] == {"eval": 3}
    table = render_table(report)
    lines = table.splitlines()
    assert "test 1" in lines[0] and "test 2" in lines[0] and "test 3" in lines[0]
    assert any(line.startswith("ordered") for line in lines)
    assert any(line.startswith("random") for line in lines)


def test_run_tests_requires_calibrated_bundle():
    bundle = identity_bundle(tau=None)
    with pytest.raises(ValueError):
        run_tests(bundle, {"ordered": oracle_pairs()})
