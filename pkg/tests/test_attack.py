import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squashlab.attack import (
    AttackConfig,
    AttackError,
    AttackMode,
    Perturbation,
    attack_success,
    config_to_text,
    inject_targeted,
    inject_untargeted,
    injected_count,
    insertion_window,
    load_config,
    optimize_perturbation,
    perturbation_gradient,
    perturbed_fidelity,
    run_attack,
    save_config,
    stats_delta,
)
from squashlab.circuit import Circuit, GateKind, Role, cswap, h, measure, stats
from squashlab.hqnn import Readout, forward, inference_circuits, init_model
from squashlab.simulator import ancilla_zero_prob, basis_state, dense_unitary, fidelity, swap_test_readings, swap_tests

from helpers import fig2_base, random_state

PLUS = np.array([1, 1]) / np.sqrt(2)
MINUS = np.array([1, -1]) / np.sqrt(2)
TARGETED = AttackConfig(AttackMode.TARGETED, max_iters=200)

# Ancilla reading shift of three seed-5 blocks on the base circuit, from the
# dense-matrix oracle (attacked minus clean).
THREE_BLOCK_GAP = 0.019276408630994002


def _plus_plus_test() -> Circuit:
    """Data and reference both prepared in |+>, compared by one SWAP test."""
    c = Circuit.empty(3, ancilla=0, reference=[2])
    return c.with_gates([h(1), h(2), h(0), cswap(0, 1, 2), h(0), measure(0)])


def _dense_reading(c: Circuit) -> float:
    final = dense_unitary(c)[:, 0]
    return float(np.sum(np.abs(final[::2]) ** 2))


# --- untargeted injection -----------------------------------------------------


def test_zero_blocks_rejected():
    with pytest.raises(AttackError):
        inject_untargeted(fig2_base(), 0)
    with pytest.raises(AttackError):
        AttackConfig(swap_blocks=0)


def test_one_block_adds_two_swap_family_gates():
    base = fig2_base()
    assert stats(inject_untargeted(base, 1, seed=0)).swap_count == stats(base).swap_count + 2


def test_three_blocks_shift_the_reading_reproducibly():
    base = fig2_base()
    first = inject_untargeted(base, 3, seed=5)
    again = inject_untargeted(base, 3, seed=5)
    assert first == again
    gap = ancilla_zero_prob(first) - ancilla_zero_prob(base)
    assert gap == pytest.approx(THREE_BLOCK_GAP, abs=1e-12)
    assert gap == pytest.approx(_dense_reading(first) - _dense_reading(base), abs=1e-12)


def test_blocks_sit_inside_the_legitimate_test():
    base = fig2_base()
    lo, hi = insertion_window(base)
    hit = inject_untargeted(base, 2, seed=1)
    injected = [i for i, g in enumerate(hit.gates) if g.injected]
    assert len(injected) == 4
    assert min(injected) >= lo and max(injected) < hi + 4
    assert swap_tests(hit) == [(2, hi + 4)]


def test_block_structure_and_tags():
    hit = inject_untargeted(fig2_base(), 1, seed=3)
    injected = [g for g in hit.gates if g.injected]
    assert [g.kind for g in injected] == [GateKind.CSWAP, GateKind.SWAP]
    assert injected[0].qubits[0] == 0 and 0 in injected[1].qubits
    assert hit.without_injected() == fig2_base()


def test_fixed_insertion_sites():
    hit = inject_untargeted(fig2_base(), 2, seed=0, sites=(0, 0))
    assert [g.injected for g in hit.gates[4:8]] == [True] * 4
    with pytest.raises(AttackError):
        inject_untargeted(fig2_base(), 1, sites=(9,))


def test_injection_needs_two_spare_qubits():
    c = Circuit.empty(2, ancilla=0).with_gates([h(0), h(0)])
    with pytest.raises(AttackError):
        inject_untargeted(c, 1)


def test_injection_needs_a_swap_test():
    with pytest.raises(AttackError):
        inject_untargeted(Circuit.empty(3, ancilla=0).append(h(1)), 1)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_injection_keeps_register_and_accounts_for_gates(k, seed):
    base = fig2_base()
    hit = inject_untargeted(base, k, seed)
    assert (hit.n_qubits, hit.roles) == (base.n_qubits, base.roles)
    assert injected_count(hit) == 2 * k
    assert stats_delta(base, hit)["total_gates"] == injected_count(hit)


# --- targeted tampering -------------------------------------------------------


def test_zero_noise_leaves_reading_unchanged():
    before, after = swap_test_readings(inject_targeted(fig2_base(), 0.0))
    assert abs(after - before) < 1e-10


def test_tampered_circuit_holds_two_tests():
    hit = inject_targeted(fig2_base(), 1.0)
    assert len(swap_tests(hit)) == 2
    s = stats(hit)
    assert s.count(GateKind.CSWAP) == 2 and s.swap_count == 2


def test_pi_noise_turns_plus_reference_into_minus():
    before, after = swap_test_readings(inject_targeted(_plus_plus_test(), np.pi))
    # readings are (1 + F)/2, so F drops from 1 to 0
    assert 2 * before - 1 == pytest.approx(1.0, abs=1e-12)
    assert 2 * after - 1 == pytest.approx(0.0, abs=1e-12)


def test_noise_lands_on_reference_qubits_only():
    hit = inject_targeted(fig2_base(), 0.5)
    rz = [g for g in hit.gates if g.kind is GateKind.RZ]
    assert [g.qubits for g in rz] == [(2,)] and all(g.injected for g in rz)
    assert hit.qubits_with_role(Role.REFERENCE) == (2,)


def test_targeted_needs_exactly_one_test():
    with pytest.raises(AttackError):
        inject_targeted(Circuit.empty(3, ancilla=0).append(h(1)), 1.0)
    with pytest.raises(AttackError):
        inject_targeted(inject_targeted(fig2_base(), 1.0), 1.0)


def test_default_noise_angle_is_seeded_and_in_range():
    angles = {AttackConfig(AttackMode.TARGETED, seed=s).resolved_noise_angle() for s in range(20)}
    assert all(np.pi / 4 <= a <= np.pi for a in angles)
    assert AttackConfig(seed=3).resolved_noise_angle() == AttackConfig(seed=3).resolved_noise_angle()


# --- perturbation optimizer ---------------------------------------------------


def test_already_satisfied_takes_no_steps():
    pert, rep = optimize_perturbation(PLUS, PLUS, basis_state(1, 1), TARGETED)
    assert rep.iterations == 0 and rep.success
    assert np.array_equal(pert.delta, [0.0, 0.0])


def test_minus_is_steered_towards_plus():
    pert, rep = optimize_perturbation(MINUS, PLUS, basis_state(1, 0), TARGETED)
    assert rep.success and rep.converged
    assert rep.f_t_after > rep.f_c_after
    assert attack_success(rep.f_t_after, rep.f_c_after)
    assert fidelity(PLUS, Perturbation(np.array([0.0, np.pi])).apply(MINUS)) == pytest.approx(1, abs=1e-12)


def test_basis_references_cannot_be_reached():
    cfg = AttackConfig(AttackMode.TARGETED, max_iters=50)
    pert, rep = optimize_perturbation(PLUS, basis_state(1, 0), basis_state(1, 1), cfg)
    assert not rep.success and not rep.converged
    assert rep.iterations == 50
    assert rep.f_t_after == pytest.approx(0.5) and rep.f_c_after == pytest.approx(0.5)


def test_optimizer_rejects_mismatched_states():
    with pytest.raises(AttackError):
        optimize_perturbation(PLUS, basis_state(2, 0), PLUS, TARGETED)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_phases_preserve_norm(seed, n):
    rng = np.random.default_rng(seed)
    x = random_state(rng, n)
    out = Perturbation(rng.uniform(-10, 10, 1 << n)).apply(x)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), data=st.data())
def test_basis_fidelity_is_phase_invariant(seed, n, data):
    rng = np.random.default_rng(seed)
    x = random_state(rng, n)
    b = basis_state(n, data.draw(st.integers(0, (1 << n) - 1)))
    delta = rng.uniform(-10, 10, 1 << n)
    assert abs(perturbed_fidelity(delta, x, b) - fidelity(b, x)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
def test_perturbation_gradient_matches_finite_differences(seed, n):
    rng = np.random.default_rng(seed)
    x, psi = random_state(rng, n), random_state(rng, n)
    delta = rng.uniform(-3, 3, 1 << n)
    g = perturbation_gradient(delta, x, psi)
    step = 1e-5
    for j in range(delta.size):
        e = np.zeros_like(delta)
        e[j] = step
        fd = (perturbed_fidelity(delta + e, x, psi) - perturbed_fidelity(delta - e, x, psi)) / (2 * step)
        assert abs(g[j] - fd) <= 1e-4 * max(abs(fd), 1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_success_flag_agrees_with_strict_condition(seed):
    rng = np.random.default_rng(seed)
    x, t, c = (random_state(rng, 2) for _ in range(3))
    _, rep = optimize_perturbation(x, t, c, AttackConfig(AttackMode.TARGETED, max_iters=100, seed=seed))
    assert rep.success == attack_success(rep.f_t_after, rep.f_c_after)
    if rep.converged:
        assert rep.f_t_after > rep.f_c_after


def test_perturbation_validation():
    with pytest.raises(AttackError):
        Perturbation(np.array([0.0, 0.0, 0.0]))
    with pytest.raises(AttackError):
        Perturbation(np.array([0.0, np.inf]))


# --- success condition --------------------------------------------------------


def test_attack_success_examples():
    assert attack_success(0.8, 0.3) is True
    assert attack_success(0.5, 0.5) is False


def test_attack_success_rejects_out_of_range():
    with pytest.raises(AttackError):
        attack_success(1.2, 0.3)
    with pytest.raises(AttackError):
        attack_success(0.2, -0.1)


# --- configuration files ------------------------------------------------------


@pytest.mark.parametrize(
    "cfg",
    [
        AttackConfig(),
        AttackConfig(swap_blocks=3, seed=9, insertion_sites=(0, 1, 2)),
        AttackConfig(AttackMode.TARGETED, target_class=1, eta=0.25, max_iters=40, noise_angle=1.25),
    ],
)
def test_config_file_round_trip(tmp_path, cfg):
    save_config(cfg, tmp_path / "attack.ini")
    assert load_config(tmp_path / "attack.ini") == cfg
    assert config_to_text(cfg).startswith("[attack]")


def test_config_rejects_bad_values(tmp_path):
    with pytest.raises(AttackError):
        AttackConfig(eta=0.0)
    with pytest.raises(AttackError):
        AttackConfig(swap_blocks=2, insertion_sites=(0,))
    (tmp_path / "bad.ini").write_text("[attack]\nmode = sideways\n")
    with pytest.raises(AttackError):
        load_config(tmp_path / "bad.ini")


# --- end to end on a trained model -------------------------------------------


def test_untargeted_run_tampers_every_circuit(trained_blobs, blob_splits):
    model, _ = trained_blobs
    out = run_attack(model, blob_splits[1], AttackConfig(swap_blocks=2, seed=1))
    assert all(injected_count(c) == 4 for c in out.circuits.all())
    assert all(injected_count(c) == 0 for c in out.clean_circuits.all())
    assert out.report.stats_delta["swap_count"] == 4


def test_attack_runs_are_deterministic(trained_blobs, blob_splits):
    model, _ = trained_blobs
    for cfg in (AttackConfig(swap_blocks=3, seed=2), AttackConfig(AttackMode.TARGETED, seed=2)):
        a = run_attack(model, blob_splits[1], cfg)
        b = run_attack(model, blob_splits[1], cfg)
        assert a.attacked.as_dict() == b.attacked.as_dict()
        assert np.array_equal(a.probabilities, b.probabilities)


def test_targeted_run_only_touches_target_samples(blob_splits):
    model = init_model(2, 2, Readout.SIMILARITY, hidden=8, seed=0)
    data = blob_splits[1]
    out = run_attack(model, data, AttackConfig(AttackMode.TARGETED, target_class=1, seed=0))
    others = data.labels != 1
    baseline = run_attack(model, data, AttackConfig(swap_blocks=1)).clean
    assert out.clean.as_dict() == baseline.as_dict()
    assert len(out.reports) == int(np.sum(~others))
    assert out.circuits.classes[0] == inference_circuits(model).classes[0]
    assert len(swap_tests(out.circuits.classes[1][0])) == 2
    # non-target samples keep their clean probabilities
    assert np.allclose(out.probabilities[others], forward(model, data.features[others]), atol=1e-12)


def test_targeted_rejects_unknown_class(trained_blobs, blob_splits):
    model, _ = trained_blobs
    with pytest.raises(AttackError):
        run_attack(model, blob_splits[1], AttackConfig(AttackMode.TARGETED, target_class=5))
