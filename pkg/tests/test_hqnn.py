import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from squashlab.circuit import GateKind, stats
from squashlab.hqnn import (
    Dataset,
    DenseLayer,
    DivergenceError,
    HybridModel,
    ModelError,
    Readout,
    ansatz,
    batch_loss,
    class_circuit,
    data_state,
    encode,
    encoded_state,
    evaluate,
    extract,
    forward,
    grad,
    inference_circuits,
    init_model,
    load_model,
    loss_report,
    nll,
    nll_dataset,
    probabilities,
    readout,
    reference_states,
    save_model,
    similarity,
    simulate_features,
    train,
)
from squashlab.simulator import basis_state, fidelity, run, zero_state


def _zero_model(n_features=3, mode=Readout.SIMILARITY, references=None):
    """Extractor and ansatz that send every input to |00>."""
    layer = DenseLayer(np.zeros((n_features, 2)), np.zeros(2), "linear")
    refs = np.zeros((2, 1, 8)) if references is None else references
    return HybridModel([layer], np.zeros(8), refs, np.zeros((4, 2)), np.zeros(2), mode=mode)


def _flip_first_qubit():
    """Reference parameters whose ansatz maps |00> to a basis state other than |00>."""
    p = np.zeros(8)
    p[0] = np.pi  # RY(pi) on qubit 0 in the first layer
    return p


def finite_difference(model, x, y, name, index, step=1e-4):
    params = model.parameters()
    plus, minus = params[name].copy(), params[name].copy()
    plus[index] += step
    minus[index] -= step
    f_plus = batch_loss(model.with_parameters({name: plus}), x, y)
    f_minus = batch_loss(model.with_parameters({name: minus}), x, y)
    return (f_plus - f_minus) / (2 * step)


def assert_grad_matches_fd(model, x, y, rel=1e-4, floor=1e-6):
    _, g = grad(model, x, y)
    for name, values in model.parameters().items():
        for index in np.ndindex(values.shape):
            fd = finite_difference(model, x, y, name, index)
            assert abs(g[name][index] - fd) <= rel * max(abs(fd), floor), (name, index)


# --- extractor and encoding ---------------------------------------------------


def test_zero_extractor_outputs_zero():
    model = _zero_model()
    assert np.array_equal(extract(model, np.array([5.0, -2.0, 3.0])), [0.0, 0.0])


def test_identity_layer_passes_features_through():
    layer = DenseLayer(np.eye(2), np.zeros(2), "linear")
    model = HybridModel([layer], np.zeros(8), np.zeros((2, 1, 8)), np.zeros((4, 2)), np.zeros(2))
    assert np.array_equal(extract(model, np.array([0.3, -0.7])), [0.3, -0.7])


def test_extractor_is_deterministic_per_seed():
    x = np.linspace(-1, 1, 5)
    a = extract(init_model(5, 2, seed=9), x)
    b = extract(init_model(5, 2, seed=9), x)
    assert np.array_equal(a, b)


def test_extractor_rejects_wrong_width():
    with pytest.raises(ModelError):
        extract(init_model(5, 2), np.zeros(4))


def test_encode_zero_is_identity_rotations():
    frag = encode([0.0, 0.0])
    assert [(g.kind, g.angle) for g in frag.gates] == [(GateKind.RY, 0.0)] * 2
    assert np.allclose(run(frag), zero_state(2))


def test_encode_pi_flips_qubit_zero():
    out = run(encode([np.pi, 0.0]))
    assert fidelity(out, basis_state(2, 1)) == pytest.approx(1, abs=1e-12)


def test_encode_half_pi_gives_uniform_superposition():
    out = run(encode([np.pi / 2, np.pi / 2]))
    assert np.allclose(out, np.full(4, 0.5), atol=1e-12)


def test_encode_rejects_non_finite():
    with pytest.raises(ModelError):
        encode([np.nan, 0.0])


def test_batched_encoding_matches_circuit(rng):
    angles = rng.uniform(-3, 3, (6, 2))
    states = encoded_state(angles)
    for a, s in zip(angles, states):
        assert np.allclose(s, run(encode(a)), atol=1e-14)


# --- ansatz -------------------------------------------------------------------


def test_zero_angles_leave_only_the_entangler():
    c = ansatz(np.zeros(4), 2, 1)
    for k in range(4):
        out = run(c, basis_state(2, k))
        expected = k ^ 2 if k & 1 else k  # CNOT(0 -> 1)
        assert np.allclose(out, basis_state(2, expected), atol=1e-12)


def test_one_layer_structure():
    s = stats(ansatz(np.arange(4.0), 2, 1))
    assert s.count(GateKind.RY) + s.count(GateKind.RZ) == 4
    assert s.count(GateKind.CNOT) == 1
    assert s.total_gates == 5


def test_ansatz_is_two_pi_periodic_up_to_phase(rng):
    theta = rng.uniform(-3, 3, 8)
    a = run(ansatz(theta, 2, 2))
    b = run(ansatz(theta + 2 * np.pi, 2, 2))
    assert fidelity(a, b) == pytest.approx(1, abs=1e-10)


def test_ansatz_rejects_wrong_length():
    with pytest.raises(ModelError):
        ansatz(np.zeros(5), 2, 1)


# --- forward and similarity ----------------------------------------------------


def test_zero_head_gives_uniform_probabilities(rng):
    model = init_model(3, 4, Readout.HEAD, seed=2).with_parameters(
        {"head.weights": np.zeros((6, 4)), "head.bias": np.zeros(4)}
    )
    p = forward(model, rng.normal(size=(5, 3)))
    assert np.allclose(p, 0.25)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), classes=st.integers(2, 4),
       mode=st.sampled_from(list(Readout)), refs=st.integers(1, 2))
def test_probabilities_sum_to_one(seed, classes, mode, refs):
    model = init_model(3, classes, mode, refs_per_class=refs, seed=seed)
    p = forward(model, np.random.default_rng(seed).normal(size=(4, 3)))
    assert np.all(p >= 0)
    assert np.abs(p.sum(axis=-1) - 1).max() < 1e-10


@pytest.mark.parametrize("zero_class", [0, 1])
def test_similarity_picks_the_matching_basis_reference(zero_class):
    refs = np.zeros((2, 1, 8))
    refs[1 - zero_class, 0] = _flip_first_qubit()
    model = _zero_model(references=refs)
    assert fidelity(reference_states(model)[zero_class, 0], zero_state(2)) == pytest.approx(1)
    s = similarity(model, data_state(model, np.zeros(3)))[0]
    assert s[zero_class] == pytest.approx(1.0)
    assert s[1 - zero_class] == pytest.approx(0.5)
    assert forward(model, np.zeros(3)).argmax() == zero_class


def test_similarity_is_half_when_orthogonal_to_every_reference():
    refs = np.stack([_flip_first_qubit(), _flip_first_qubit()])[:, None, :]
    model = _zero_model(references=refs)
    s = similarity(model, zero_state(2))[0]
    assert np.allclose(s, 0.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), refs=st.integers(1, 3))
def test_similarity_range(seed, refs):
    model = init_model(3, 3, Readout.SIMILARITY, refs_per_class=refs, seed=seed)
    s = similarity(model, data_state(model, np.random.default_rng(seed).normal(size=(5, 3))))
    assert np.all(s >= refs / 2 - 1e-12) and np.all(s <= refs + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_similarity_argmax_survives_common_scaling(seed, scale):
    model = init_model(3, 3, Readout.SIMILARITY, seed=seed)
    states = data_state(model, np.random.default_rng(seed).normal(size=(6, 3)))
    s = similarity(model, states)
    assert np.array_equal((scale * s).argmax(axis=1), s.argmax(axis=1))
    assert np.array_equal(probabilities(model, readout(model, states)).argmax(axis=1), s.argmax(axis=1))


def test_head_readout_is_local_to_each_class(rng):
    model = init_model(3, 3, Readout.HEAD, seed=4)
    states = data_state(model, rng.normal(size=(5, 3)))
    before = readout(model, states)
    refs = model.references.copy()
    refs[1] += rng.normal(size=refs[1].shape)
    after = readout(model, states, reference_states(model, refs))
    changed = ~np.isclose(after.swap[..., 0], before.swap[..., 0], atol=1e-12, rtol=0)
    assert changed[:, 1].any()
    assert not changed[:, [0, 2]].any()
    assert np.array_equal(after.z, before.z)


def test_simulated_features_match_closed_form(rng):
    model = init_model(3, 2, Readout.HEAD, refs_per_class=2, seed=5)
    x = rng.normal(size=(7, 3))
    sim = simulate_features(model, encoded_state(extract(model, x)))
    exact = readout(model, data_state(model, x))
    assert np.allclose(sim.swap, exact.swap, atol=1e-12)
    assert np.allclose(sim.z, exact.z, atol=1e-12)


def test_inference_circuits_cover_every_reference():
    model = init_model(3, 3, refs_per_class=2)
    circuits = inference_circuits(model)
    assert [len(row) for row in circuits.classes] == [2, 2, 2]
    assert circuits.classes[2][1].label == "class-2-ref-1"
    assert class_circuit(model, 0).n_qubits == 5


def test_model_rejects_bad_shapes():
    with pytest.raises(ModelError):
        HybridModel([DenseLayer(np.zeros((3, 3)), np.zeros(3))], np.zeros(8), np.zeros((2, 1, 8)),
                    np.zeros((4, 2)), np.zeros(2))
    with pytest.raises(ModelError):
        init_model(3, 2).with_parameters({"theta": np.zeros(3)})


# --- loss ---------------------------------------------------------------------


def test_nll_examples():
    assert nll(np.array([0.0, 1.0]), 1) == 0.0
    assert nll(np.array([0.5, 0.5]), 0) == pytest.approx(0.6931, abs=1e-4)
    losses = nll(np.array([[0.0, 1.0], [0.5, 0.5]]), np.array([1, 1]))
    assert losses.mean() == pytest.approx(0.3466, abs=1e-4)


def test_nll_clamps_zero_probability():
    assert nll(np.array([1.0, 0.0]), 1) == pytest.approx(-np.log(1e-12))


def test_nll_rejects_bad_label():
    with pytest.raises(ModelError):
        nll(np.array([0.5, 0.5]), 2)


def test_nll_dataset_is_the_mean(tiny_dataset):
    model = init_model(3, 2, seed=1)
    per_sample = nll(forward(model, tiny_dataset.features), tiny_dataset.labels)
    assert nll_dataset(model, tiny_dataset) == pytest.approx(per_sample.mean(), abs=1e-15)


def test_loss_report_accounting():
    p = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    rep = loss_report(p, np.array([0, 1, 1, 1]))
    assert rep.confusion.tolist() == [[1, 0], [1, 2]]
    assert rep.accuracy == pytest.approx(np.trace(rep.confusion) / rep.confusion.sum())
    assert rep.per_class_accuracy.tolist() == pytest.approx([1.0, 2 / 3])
    assert rep.nll >= 0


def test_dataset_validates_labels():
    with pytest.raises(ModelError):
        Dataset(np.zeros((2, 3)), np.array([0, 2]), 2)


# --- gradients ----------------------------------------------------------------


@pytest.mark.parametrize("mode", list(Readout))
def test_gradient_matches_finite_differences(mode, tiny_dataset):
    model = init_model(3, 2, mode, hidden=4, layers=1, seed=3)
    assert_grad_matches_fd(model, tiny_dataset.features, tiny_dataset.labels)


def test_gradient_with_two_references_per_class(tiny_dataset):
    model = init_model(3, 2, Readout.SIMILARITY, hidden=0, layers=1, refs_per_class=2, seed=8)
    assert_grad_matches_fd(model, tiny_dataset.features, tiny_dataset.labels)


def test_balanced_duplicate_inputs_sit_at_a_stationary_point():
    model = init_model(3, 2, Readout.HEAD, seed=6).with_parameters(
        {"head.weights": np.zeros((4, 2)), "head.bias": np.zeros(2)}
    )
    x = np.tile([[0.2, -0.4, 0.9]], (2, 1))
    _, g = grad(model, x, np.array([0, 1]))
    assert np.sqrt(sum(np.sum(v**2) for v in g.values())) < 1e-8


def test_duplicated_batch_keeps_the_mean_gradient(tiny_dataset):
    model = init_model(3, 2, Readout.HEAD, seed=7)
    x, y = tiny_dataset.features, tiny_dataset.labels
    loss, g = grad(model, x, y)
    loss2, g2 = grad(model, np.concatenate([x, x]), np.concatenate([y, y]))
    assert loss2 == pytest.approx(loss, abs=1e-12)
    for k in g:
        assert np.abs(g[k] - g2[k]).max() < 1e-12


def test_gradient_rejects_empty_batch():
    with pytest.raises(ModelError):
        grad(init_model(3, 2), np.zeros((0, 3)), np.zeros(0, dtype=int))


# --- training -----------------------------------------------------------------


def test_blobs_reach_full_train_accuracy(trained_blobs):
    _, history = trained_blobs
    assert history[-1].train.accuracy == 1.0


def test_blob_training_loss_never_increases(trained_blobs):
    _, history = trained_blobs
    losses = [r.train.nll for r in history]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_training_is_reproducible(blob_splits):
    train_set, _ = blob_splits
    runs = [train(init_model(2, 2, hidden=8, seed=1), train_set, epochs=2, lr=0.3, seed=1)[1] for _ in range(2)]
    assert runs[0][0].train.nll == runs[1][0].train.nll
    assert runs[0][1].train.nll == runs[1][1].train.nll


def test_minibatch_training_is_reproducible(blob_splits):
    train_set, _ = blob_splits
    a = train(init_model(2, 2, hidden=8), train_set, epochs=2, lr=0.3, seed=4, batch_size=16)[0]
    b = train(init_model(2, 2, hidden=8), train_set, epochs=2, lr=0.3, seed=4, batch_size=16)[0]
    assert all(np.array_equal(a.parameters()[k], b.parameters()[k]) for k in a.parameters())


def test_training_reports_divergence_epoch(blob_splits, recwarn):
    train_set, _ = blob_splits
    model = init_model(2, 2, hidden=8).with_parameters(
        {"head.weights": np.full((4, 2), 1e308) * np.array([1, -1])}
    )
    with pytest.raises(DivergenceError) as err:
        train(model, train_set, epochs=3, lr=0.1)
    assert err.value.epoch == 1


def test_training_rejects_bad_settings(blob_splits):
    train_set, _ = blob_splits
    with pytest.raises(ModelError):
        train(init_model(2, 2), train_set, epochs=0)
    with pytest.raises(ModelError):
        train(init_model(2, 2), train_set, lr=0.0)


# --- checkpoints --------------------------------------------------------------


@pytest.mark.parametrize("mode", list(Readout))
def test_checkpoint_round_trip(tmp_path, mode, tiny_dataset):
    model = init_model(3, 3, mode, refs_per_class=2, layers=1, seed=11)
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert back.mode is mode and back.layers == 1
    for k, v in model.parameters().items():
        assert np.array_equal(back.parameters()[k], v)
    assert np.array_equal(forward(back, tiny_dataset.features), forward(model, tiny_dataset.features))


def test_checkpoint_rejects_foreign_file(tmp_path):
    np.savez(tmp_path / "other.npz", a=np.zeros(3))
    with pytest.raises(ModelError):
        load_model(tmp_path / "other.npz")


def test_evaluate_matches_forward(tiny_dataset):
    model = init_model(3, 2, seed=12)
    rep = evaluate(model, tiny_dataset)
    p = forward(model, tiny_dataset.features)
    assert rep.accuracy == np.mean(p.argmax(axis=1) == tiny_dataset.labels)
