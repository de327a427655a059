import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squashlab.attack import inject_targeted, inject_untargeted
from squashlab.circuit import Circuit, Tag, h, parse, ry, serialize, stats, swap, x
from squashlab.detector import DetectorError, Verdict, compare, detect, fingerprint
from squashlab.hqnn import init_model, inference_circuits

from helpers import fig2_base, random_circuit


def test_identical_circuits_share_a_fingerprint():
    assert fingerprint(fig2_base()) == fingerprint(fig2_base())


def test_one_extra_swap_changes_hash_and_count():
    base = Circuit.empty(3).append(h(0), x(1))
    more = base.append(swap(1, 2))
    a, b = fingerprint(base), fingerprint(more)
    assert a.digest != b.digest
    assert b.stats.swap_count - a.stats.swap_count == 1


def test_targeted_circuit_has_more_swap_family_gates():
    base = fig2_base()
    hit = inject_targeted(base, 0.8)
    assert fingerprint(hit).stats.swap_count > fingerprint(base).stats.swap_count
    assert fingerprint(hit).stats.total_gates > fingerprint(base).stats.total_gates


def test_fingerprint_ignores_tags_and_labels():
    base = Circuit.empty(2).append(swap(0, 1))
    tagged = Circuit.empty(2, label="x").append(swap(0, 1, Tag.INJECTED))
    assert fingerprint(base).digest == fingerprint(tagged).digest


def test_fingerprint_survives_round_trip():
    c = inject_untargeted(fig2_base(), 2, seed=4)
    assert fingerprint(parse(serialize(c))) == fingerprint(c)


def test_self_comparison_is_clean():
    rep = detect(fig2_base(), fig2_base())
    assert rep.verdict is Verdict.CLEAN
    assert rep.unknown_gate_positions == ()


def test_untargeted_block_is_tampered():
    base = fig2_base()
    rep = detect(base, inject_untargeted(base, 1, seed=0))
    assert rep.verdict is Verdict.TAMPERED
    assert rep.swap_delta == 2
    assert len(rep.unknown_gate_positions) == 2


def test_reordering_disjoint_gates_is_suspicious():
    base = Circuit.empty(3).append(h(0), ry(0.3, 1), x(2))
    moved = Circuit.empty(3).append(x(2), h(0), ry(0.3, 1))
    rep = detect(base, moved)
    assert rep.verdict is Verdict.SUSPICIOUS
    assert rep.swap_delta == 0


def test_depth_drift_beyond_threshold_is_suspicious():
    base = Circuit.empty(1).append(h(0))
    deeper = base.append(x(0), x(0), x(0))
    assert detect(base, deeper).verdict is Verdict.SUSPICIOUS
    assert detect(base, deeper, depth_threshold=5).verdict is Verdict.SUSPICIOUS  # digest still differs
    assert "depth grew" in detect(base, deeper).rationale


def test_qubit_count_mismatch_raises():
    with pytest.raises(DetectorError):
        compare(fingerprint(Circuit.empty(2)), fingerprint(Circuit.empty(3)))


def test_report_text_lists_every_field():
    text = detect(fig2_base(), inject_untargeted(fig2_base(), 1)).as_text()
    for key in ("verdict: tampered", "swap_delta: 2", "depth_delta:", "unknown_gate_positions:", "rationale:"):
        assert key in text


@settings(max_examples=60, deadline=None)
@given(k=st.integers(1, 6), seed=st.integers(0, 2**31 - 1))
def test_every_untargeted_attack_is_caught(k, seed):
    circuit = inference_circuits(init_model(4, 2, seed=seed % 100)).classes[0][0]
    assert detect(circuit, inject_untargeted(circuit, k, seed)).verdict is Verdict.TAMPERED


@settings(max_examples=40, deadline=None)
@given(angle=st.floats(-10, 10, allow_nan=False))
def test_every_targeted_attack_is_caught(angle):
    circuit = inference_circuits(init_model(4, 2)).classes[1][0]
    assert detect(circuit, inject_targeted(circuit, angle)).verdict is Verdict.TAMPERED


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), n_gates=st.integers(0, 25))
def test_no_false_positive_on_identity(seed, n, n_gates):
    c = random_circuit(np.random.default_rng(seed), n, n_gates)
    f = fingerprint(c)
    assert compare(f, f).verdict is Verdict.CLEAN


def test_tampered_verdict_always_has_evidence():
    base = fig2_base()
    for seed in range(10):
        rep = detect(base, inject_untargeted(base, 1 + seed % 3, seed))
        assert rep.swap_delta > 0 or rep.unknown_gate_positions
        assert stats(inject_untargeted(base, 1, seed)).swap_count > stats(base).swap_count
