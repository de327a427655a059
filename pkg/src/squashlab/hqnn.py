"""
Hybrid quantum-classical classifier with a SWAP-test readout.

Pipeline for one sample ``x``::

    x -> dense extractor -> m angles -> RY angle encoding on m data qubits
      -> variational ansatz -> SWAP test against each class reference
      -> readout features -> linear head + softmax  (or similarity ratio)

Register layout of every inference circuit: qubit 0 is the ancilla, qubits
``1..m`` hold the data register and ``m+1..2m`` the reference register. The
circuits are sample independent; the per-sample angle-encoded register is
their input, ``product_state(|0>, encoded, |0..0>)``.

Readout features:

* ``P[i, j]``: ancilla P(0) of the SWAP test between the data register and
  reference ``j`` of class ``i``; equal to ``(1 + F)/2`` on a clean circuit.
* ``Z[d]``: <Z> of data qubit ``d`` after a probe SWAP test against the blank
  reference register. On a clean circuit this is ``(1 + z_d)/2`` where
  ``z_d`` is the plain <Z> of the evolved data register.

Head mode feeds ``[P[:, 0], Z]`` to a linear layer; similarity mode sums the
``P`` terms of each class and normalizes the sums into probabilities.

Training uses the closed form of these features; ``simulate_features`` runs
the circuits and must agree with it. Gradients of quantum parameters use the
parameter-shift rule, classical layers use hand-written backpropagation.
"""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circuit import Circuit, GateKind, GateOp, check, cnot, cswap, h, measure, ry, rz
from .simulator import (
    apply_gate,
    apply_rotation,
    fidelity,
    product_state,
    run,
    swap_test_executions,
    swap_test_readings,
    z_expectation,
    zero_state,
)

LOG_CLAMP = 1e-12
SHIFT = np.pi / 2
CHECKPOINT_FORMAT = "squashlab-model"
CHECKPOINT_VERSION = 1


class Readout(enum.Enum):
    HEAD = "head"
    SIMILARITY = "similarity"


class ModelError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda out: 1 - out**2),
    "linear": (lambda z: z, lambda out: np.ones_like(out)),
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (n_in, n_out)
    bias: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.activation not in _ACTIVATIONS:
            raise ModelError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ModelError("layer weights must be (n_in, n_out) with a matching bias")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return _ACTIVATIONS[self.activation][0](x @ self.weights + self.bias)


@dataclass
class HybridModel:
    extractor: list[DenseLayer]
    theta: np.ndarray
    references: np.ndarray  # (classes, refs per class, len(theta))
    head_weights: np.ndarray  # (classes + data qubits, classes)
    head_bias: np.ndarray
    n_data_qubits: int = 2
    layers: int = 2
    mode: Readout = Readout.HEAD

    def __post_init__(self):
        self.mode = Readout(self.mode)
        self.theta = np.asarray(self.theta, dtype=float)
        self.references = np.asarray(self.references, dtype=float)
        self.head_weights = np.asarray(self.head_weights, dtype=float)
        self.head_bias = np.asarray(self.head_bias, dtype=float)
        self.validate()

    @property
    def n_classes(self) -> int:
        return self.references.shape[0]

    @property
    def refs_per_class(self) -> int:
        return self.references.shape[1]

    @property
    def n_features(self) -> int:
        return self.extractor[0].weights.shape[0]

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_data_qubits + 1

    def validate(self) -> None:
        m, c = self.n_data_qubits, self.references.shape[0] if self.references.ndim == 3 else 0
        n_theta = ansatz_size(m, self.layers)
        if not self.extractor:
            raise ModelError("extractor needs at least one layer")
        for a, b in zip(self.extractor, self.extractor[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise ModelError("extractor layer shapes do not chain")
        if self.extractor[-1].weights.shape[1] != m:
            raise ModelError(f"extractor output must have {m} features, one per data qubit")
        if self.theta.shape != (n_theta,):
            raise ModelError(f"theta must have {n_theta} entries")
        if self.references.ndim != 3 or self.references.shape[2] != n_theta:
            raise ModelError(f"references must have shape (classes, refs, {n_theta})")
        if c < 2 or self.references.shape[1] < 1:
            raise ModelError("need at least two classes and one reference per class")
        if self.head_weights.shape != (c + m, c) or self.head_bias.shape != (c,):
            raise ModelError(f"head must map {c + m} features to {c} logits")
        if not all(np.all(np.isfinite(v)) for v in self.parameters().values()):
            raise ModelError("non-finite parameter")

    def parameters(self) -> dict[str, np.ndarray]:
        """Every trainable array by name (views, not copies)."""
        out = {}
        for k, layer in enumerate(self.extractor):
            out[f"extractor.{k}.weights"] = layer.weights
            out[f"extractor.{k}.bias"] = layer.bias
        out["theta"] = self.theta
        out["references"] = self.references
        out["head.weights"] = self.head_weights
        out["head.bias"] = self.head_bias
        return out

    def with_parameters(self, params: dict[str, np.ndarray]) -> HybridModel:
        """Copy of the model with the named arrays replaced."""
        p = {k: np.array(v, dtype=float) for k, v in self.parameters().items()}
        for k, v in params.items():
            if k not in p or np.shape(v) != p[k].shape:
                raise ModelError(f"unknown parameter or shape mismatch: {k}")
            p[k] = np.array(v, dtype=float)
        ext = [
            DenseLayer(p[f"extractor.{k}.weights"], p[f"extractor.{k}.bias"], layer.activation)
            for k, layer in enumerate(self.extractor)
        ]
        return replace(
            self, extractor=ext, theta=p["theta"], references=p["references"],
            head_weights=p["head.weights"], head_bias=p["head.bias"],
        )

    def copy(self) -> HybridModel:
        return self.with_parameters({})


def init_model(n_features: int, n_classes: int, mode: Readout | str = Readout.HEAD, *,
               hidden: int = 16, n_data_qubits: int = 2, layers: int = 2,
               refs_per_class: int = 1, seed: int = 0) -> HybridModel:
    """Random model: extractor ``n_features -> hidden (tanh) -> n_data_qubits``."""
    rng = np.random.default_rng(seed)
    n_theta = ansatz_size(n_data_qubits, layers)
    sizes = [n_features, hidden, n_data_qubits] if hidden else [n_features, n_data_qubits]
    extractor = [
        DenseLayer(rng.normal(0, 0.3, (a, b)), np.zeros(b), "tanh" if k < len(sizes) - 2 else "linear")
        for k, (a, b) in enumerate(zip(sizes, sizes[1:]))
    ]
    return HybridModel(
        extractor=extractor,
        theta=rng.normal(0, 0.5, n_theta),
        references=rng.normal(0, 1.0, (n_classes, refs_per_class, n_theta)),
        head_weights=rng.normal(0, 0.1, (n_classes + n_data_qubits, n_classes)),
        head_bias=np.zeros(n_classes),
        n_data_qubits=n_data_qubits,
        layers=layers,
        mode=Readout(mode),
    )


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (samples, features)
    labels: np.ndarray
    n_classes: int
    name: str = ""
    split: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ModelError("features must be (samples, features) with one label per sample")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ModelError(f"labels must lie in 0..{self.n_classes - 1}")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    def subset(self, index) -> Dataset:
        return replace(self, features=self.features[index], labels=self.labels[index])


# --- classical extractor ---------------------------------------------------


def extract(model: HybridModel, x: np.ndarray) -> np.ndarray:
    """Extractor output, one angle per data qubit; ``x`` may be a batch."""
    return _extract_trace(model, x)[-1]


def _extract_trace(model: HybridModel, x: np.ndarray) -> list[np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_features:
        raise ModelError(f"expected {model.n_features} input features, got {x.shape[-1]}")
    if not all(np.all(np.isfinite(l.weights)) and np.all(np.isfinite(l.bias)) for l in model.extractor):
        raise ModelError("non-finite extractor weights")
    outs = [x]
    for layer in model.extractor:
        outs.append(layer(outs[-1]))
    return outs


# --- circuit fragments -----------------------------------------------------


def ansatz_size(n_qubits: int, layers: int) -> int:
    return 2 * n_qubits * layers


def encode(features) -> Circuit:
    """RY(f_i) on qubit i of an ``len(features)``-qubit register."""
    f = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ModelError("non-finite feature")
    return Circuit.empty(len(f), label="encode").with_gates(ry(float(a), q) for q, a in enumerate(f))


def _ring(n: int) -> list[GateOp]:
    if n < 2:
        return []
    if n == 2:
        return [cnot(0, 1)]
    return [cnot(q, (q + 1) % n) for q in range(n)]


def ansatz(theta, n_qubits: int = 2, layers: int | None = None) -> Circuit:
    """Per layer: RY then RZ on each qubit, then a CNOT ring.

    ``theta`` is laid out as ``(layers, qubit, [ry, rz])``.
    """
    theta = np.asarray(theta, dtype=float)
    if layers is None:
        layers = theta.size // (2 * n_qubits) if n_qubits else 0
    if theta.shape != (ansatz_size(n_qubits, layers),) or layers < 1:
        raise ModelError(f"theta must have {ansatz_size(n_qubits, max(layers, 1))} entries")
    t = theta.reshape(layers, n_qubits, 2)
    gates: list[GateOp] = []
    for layer in t:
        for q, (a, b) in enumerate(layer):
            gates += [ry(float(a), q), rz(float(b), q)]
        gates += _ring(n_qubits)
    return Circuit.empty(n_qubits, label="ansatz").with_gates(gates)


def _apply_fragment(state: np.ndarray, fragment: Circuit) -> np.ndarray:
    for g in fragment.gates:
        state = apply_gate(state, g)
    return state


def encoded_state(features: np.ndarray) -> np.ndarray:
    """Batched RY angle encoding of ``features`` (..., m) applied to |0..0>."""
    f = np.asarray(features, dtype=float)
    m = f.shape[-1]
    state = np.broadcast_to(zero_state(m), f.shape[:-1] + (1 << m,)).copy()
    for q in range(m):
        state = apply_rotation(state, GateKind.RY, f[..., q], q)
    return state


def evolve(theta: np.ndarray, state: np.ndarray, n_qubits: int, layers: int) -> np.ndarray:
    return _apply_fragment(state, ansatz(theta, n_qubits, layers))


def data_state(model: HybridModel, x: np.ndarray) -> np.ndarray:
    """Evolved data register for raw input(s) ``x``."""
    m = model.n_data_qubits
    return evolve(model.theta, encoded_state(extract(model, x)), m, model.layers)


def reference_states(model: HybridModel, references: np.ndarray | None = None) -> np.ndarray:
    """Reference register states, shape ``(classes, refs, 2**m)``."""
    refs = model.references if references is None else references
    m = model.n_data_qubits
    out = np.empty(refs.shape[:2] + (1 << m,), dtype=complex)
    for i, j in np.ndindex(*refs.shape[:2]):
        out[i, j] = evolve(refs[i, j], zero_state(m), m, model.layers)
    return out


# --- inference circuits ----------------------------------------------------


@dataclass(frozen=True)
class InferenceCircuits:
    """The deployed circuits: one per (class, reference) plus the Z probe."""

    classes: tuple[tuple[Circuit, ...], ...]
    probe: Circuit

    def all(self) -> list[Circuit]:
        return [c for row in self.classes for c in row] + [self.probe]

    def map(self, fn) -> InferenceCircuits:
        return InferenceCircuits(
            tuple(tuple(fn(c) for c in row) for row in self.classes), fn(self.probe)
        )

    def replace_class(self, cls: int, fn) -> InferenceCircuits:
        rows = list(self.classes)
        rows[cls] = tuple(fn(c) for c in rows[cls])
        return InferenceCircuits(tuple(rows), self.probe)


def _swap_test_gates(m: int) -> list[GateOp]:
    return [h(0)] + [cswap(0, 1 + k, 1 + m + k) for k in range(m)] + [h(0)]


def _readout_circuit(model: HybridModel, ref_params: np.ndarray | None, label: str) -> Circuit:
    m, layers = model.n_data_qubits, model.layers
    c = Circuit.empty(2 * m + 1, ancilla=0, reference=range(m + 1, 2 * m + 1), label=label)
    data = [g.remap([1 + q for q in range(m)]) for g in ansatz(model.theta, m, layers)]
    gates = data
    if ref_params is not None:
        gates = gates + [g.remap([1 + m + q for q in range(m)]) for g in ansatz(ref_params, m, layers)]
    gates = gates + _swap_test_gates(m) + [measure(0)]
    if ref_params is None:
        gates += [measure(1 + q) for q in range(m)]
    return check(c.with_gates(gates))


def class_circuit(model: HybridModel, cls: int, ref: int = 0) -> Circuit:
    """SWAP test between the evolved data register and one class reference."""
    return _readout_circuit(model, model.references[cls, ref], f"class-{cls}-ref-{ref}")


def probe_circuit(model: HybridModel) -> Circuit:
    """SWAP test against the blank reference register; data qubits are read in Z."""
    return _readout_circuit(model, None, "probe")


def inference_circuits(model: HybridModel) -> InferenceCircuits:
    rows = tuple(
        tuple(class_circuit(model, i, j) for j in range(model.refs_per_class))
        for i in range(model.n_classes)
    )
    return InferenceCircuits(rows, probe_circuit(model))


def circuit_input(encoded: np.ndarray, n_data_qubits: int) -> np.ndarray:
    """Full-register input ``|0> (x) encoded (x) |0..0>`` (batched)."""
    return product_state(zero_state(1), encoded, zero_state(n_data_qubits))


# --- readout ---------------------------------------------------------------


@dataclass(frozen=True)
class Features:
    swap: np.ndarray  # (samples, classes, refs): ancilla P(0)
    z: np.ndarray  # (samples, data qubits)


def readout(model: HybridModel, states: np.ndarray, refs: np.ndarray | None = None) -> Features:
    """Closed-form features for evolved data states ``(samples, 2**m)``."""
    if refs is None:
        refs = reference_states(model)
    overlap = np.abs(np.einsum("nd,crd->ncr", np.conj(states), refs)) ** 2
    m = model.n_data_qubits
    probs = np.abs(states) ** 2
    idx = np.arange(1 << m)
    z = np.stack([probs @ (1 - 2 * ((idx >> q) & 1)) for q in range(m)], axis=-1)
    return Features((1 + overlap) / 2, (1 + z) / 2)


def simulate_features(model: HybridModel, encoded: np.ndarray,
                      circuits: InferenceCircuits | None = None) -> Features:
    """Features obtained by simulating the inference circuits.

    Each class feature is the last SWAP-test reading of its circuit; the Z
    features come from the final state of the probe's last test execution.
    """
    if circuits is None:
        circuits = inference_circuits(model)
    m = model.n_data_qubits
    psi = circuit_input(np.atleast_2d(encoded), m)
    swap = np.stack(
        [np.stack([swap_test_readings(c, psi)[-1] for c in row], axis=-1) for row in circuits.classes],
        axis=-2,
    )
    final = run(swap_test_executions(circuits.probe)[-1], psi)
    z = np.stack([z_expectation(final, 1 + q) for q in range(m)], axis=-1)
    return Features(swap, z)


def head_inputs(model: HybridModel, feats: Features) -> np.ndarray:
    return np.concatenate([feats.swap[..., 0], feats.z], axis=-1)


def similarity(model: HybridModel, states: np.ndarray) -> np.ndarray:
    """S_i = sum over the class-i references of (1 + |<x|r>|^2)/2."""
    return readout(model, np.atleast_2d(states)).swap.sum(axis=-1)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def probabilities(model: HybridModel, feats: Features) -> np.ndarray:
    if model.mode is Readout.HEAD:
        return softmax(head_inputs(model, feats) @ model.head_weights + model.head_bias)
    if model.mode is Readout.SIMILARITY:
        s = feats.swap.sum(axis=-1)
        return s / s.sum(axis=-1, keepdims=True)
    raise ModelError(f"invalid mode {model.mode}")


def forward(model: HybridModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for raw input(s) ``x``; rows sum to 1."""
    x = np.asarray(x, dtype=float)
    p = probabilities(model, readout(model, data_state(model, np.atleast_2d(x))))
    return p[0] if x.ndim == 1 else p


# --- loss ------------------------------------------------------------------


def nll(p: np.ndarray, y) -> np.ndarray | float:
    """``-log p_y`` with ``p_y`` clamped at 1e-12; batched over leading axes."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=int)
    c = p.shape[-1]
    if np.any((y < 0) | (y >= c)):
        raise ModelError(f"label out of range 0..{c - 1}")
    py = np.take_along_axis(p, y[..., None], axis=-1)[..., 0]
    out = -np.log(np.maximum(py, LOG_CLAMP))
    return float(out) if np.ndim(out) == 0 else out


def nll_dataset(model: HybridModel, data: Dataset) -> float:
    return float(np.mean(nll(forward(model, data.features), data.labels)))


@dataclass(frozen=True)
class LossReport:
    nll: float
    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray  # rows: true class, columns: predicted

    def as_dict(self) -> dict:
        return {
            "nll": self.nll,
            "accuracy": self.accuracy,
            "per_class_accuracy": [float(a) for a in self.per_class_accuracy],
            "confusion": self.confusion.tolist(),
        }


def loss_report(p: np.ndarray, y: np.ndarray, n_classes: int | None = None) -> LossReport:
    p, y = np.asarray(p, dtype=float), np.asarray(y, dtype=int)
    c = n_classes or p.shape[-1]
    confusion = np.zeros((c, c), dtype=int)
    np.add.at(confusion, (y, p.argmax(axis=-1)), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    return LossReport(
        nll=float(np.mean(nll(p, y))),
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_class_accuracy=per_class,
        confusion=confusion,
    )


def evaluate(model: HybridModel, data: Dataset) -> LossReport:
    return loss_report(forward(model, data.features), data.labels, model.n_classes)


# --- gradients -------------------------------------------------------------


def _feature_vector(model: HybridModel, feats: Features) -> np.ndarray:
    """Flat per-sample feature vector: all swap terms then the Z terms."""
    n = feats.swap.shape[0]
    return np.concatenate([feats.swap.reshape(n, -1), feats.z], axis=-1)


def _loss_and_feature_grad(model: HybridModel, feats: Features, y: np.ndarray):
    """Mean loss, dL/d(head weights, head bias) and dL/d(flat features)."""
    n, c, r = feats.swap.shape
    p = probabilities(model, feats)
    py = p[np.arange(n), y]
    loss = float(np.mean(-np.log(np.maximum(py, LOG_CLAMP))))
    active = (py >= LOG_CLAMP)[:, None] / n
    d_swap = np.zeros_like(feats.swap)
    d_z = np.zeros_like(feats.z)
    dw = np.zeros_like(model.head_weights)
    db = np.zeros_like(model.head_bias)
    if model.mode is Readout.HEAD:
        dlogits = (p - np.eye(c)[y]) * active
        inputs = head_inputs(model, feats)
        dw = inputs.T @ dlogits
        db = dlogits.sum(axis=0)
        dinputs = dlogits @ model.head_weights.T
        d_swap[:, :, 0] = dinputs[:, :c]
        d_z = dinputs[:, c:]
    else:
        s = feats.swap.sum(axis=-1)
        ds = (1 / s.sum(axis=-1, keepdims=True) - np.eye(c)[y] / s[np.arange(n), y][:, None]) * active
        d_swap = np.repeat(ds[:, :, None], r, axis=-1)
    dflat = np.concatenate([d_swap.reshape(n, -1), d_z], axis=-1)
    return loss, dw, db, dflat


def grad(model: HybridModel, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean NLL over the batch and its gradient for every parameter.

    Quantum parameters use two-term parameter shifts of the readout features;
    the extractor and head use reverse-mode accumulation.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ModelError("empty batch")
    m, layers = model.n_data_qubits, model.layers
    trace = _extract_trace(model, x)
    angles = trace[-1]
    refs = reference_states(model)

    def feats_for(theta=model.theta, enc_angles=angles, ref_states=refs):
        states = evolve(theta, encoded_state(enc_angles), m, layers)
        return readout(model, states, ref_states)

    feats = feats_for()
    loss, dw, db, dflat = _loss_and_feature_grad(model, feats, y)
    if not np.isfinite(loss):
        raise ModelError(f"non-finite loss {loss}")

    def shifted(**kw):
        return _feature_vector(model, feats_for(**kw))

    d_theta = np.zeros_like(model.theta)
    for k in range(model.theta.size):
        e = np.zeros_like(model.theta)
        e[k] = SHIFT
        diff = (shifted(theta=model.theta + e) - shifted(theta=model.theta - e)) / 2
        d_theta[k] = np.sum(dflat * diff)

    d_angles = np.zeros_like(angles)
    for q in range(m):
        e = np.zeros(m)
        e[q] = SHIFT
        diff = (shifted(enc_angles=angles + e) - shifted(enc_angles=angles - e)) / 2
        d_angles[:, q] = np.sum(dflat * diff, axis=-1)

    # References only enter their own swap term, so shift one reference at a time.
    states = evolve(model.theta, encoded_state(angles), m, layers)
    n, c, r = feats.swap.shape
    d_swap = dflat[:, : c * r].reshape(n, c, r)
    d_refs = np.zeros_like(model.references)
    for i, j, k in np.ndindex(*model.references.shape):
        e = np.zeros(model.references.shape[2])
        e[k] = SHIFT
        vals = [
            (1 + fidelity(states, evolve(model.references[i, j] + s * e, zero_state(m), m, layers))) / 2
            for s in (1, -1)
        ]
        d_refs[i, j, k] = np.sum(d_swap[:, i, j] * (vals[0] - vals[1]) / 2)

    grads = {"theta": d_theta, "references": d_refs, "head.weights": dw, "head.bias": db}
    upstream = d_angles
    for k in reversed(range(len(model.extractor))):
        layer = model.extractor[k]
        dz = upstream * _ACTIVATIONS[layer.activation][1](trace[k + 1])
        grads[f"extractor.{k}.weights"] = trace[k].T @ dz
        grads[f"extractor.{k}.bias"] = dz.sum(axis=0)
        upstream = dz @ layer.weights.T
    return loss, {k: grads[k] for k in model.parameters()}


def batch_loss(model: HybridModel, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(nll(forward(model, np.atleast_2d(x)), y)))


# --- training --------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    train: LossReport
    test: LossReport | None = None
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train": self.train.as_dict(),
            "test": self.test.as_dict() if self.test else None,
            "seconds": self.seconds,
        }


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.5
    seed: int = 0
    batch_size: int | None = None  # None: full batch

    def __post_init__(self):
        if self.epochs < 1:
            raise ModelError("epochs must be at least 1")
        if not self.lr > 0:
            raise ModelError("lr must be positive")


def train(model: HybridModel, train_set: Dataset, test_set: Dataset | None = None,
          epochs: int = 30, lr: float = 0.5, seed: int = 0,
          batch_size: int | None = None) -> tuple[HybridModel, list[MetricsRecord]]:
    """Plain gradient descent with a fixed learning rate.

    Returns the trained copy and one record per epoch, evaluated after that
    epoch's updates. Mini-batch order is drawn from ``seed``.
    """
    cfg = TrainConfig(epochs, lr, seed, batch_size)
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    n = len(train_set)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        if cfg.batch_size is None or cfg.batch_size >= n:
            batches = [np.arange(n)]
        else:
            order = rng.permutation(n)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        for idx in batches:
            try:
                loss, g = grad(model, train_set.features[idx], train_set.labels[idx])
            except ModelError as err:
                raise DivergenceError(epoch, float("nan")) from err
            new = {k: v - cfg.lr * g[k] for k, v in model.parameters().items()}
            if not all(np.all(np.isfinite(v)) for v in new.values()):
                raise DivergenceError(epoch, loss)
            model = model.with_parameters(new)
        train_report = evaluate(model, train_set)
        if not np.isfinite(train_report.nll):
            raise DivergenceError(epoch, train_report.nll)
        test_report = evaluate(model, test_set) if test_set is not None else None
        history.append(MetricsRecord(epoch, train_report, test_report, time.perf_counter() - start))
    return model, history


# --- checkpoints -----------------------------------------------------------


def save_model(model: HybridModel, path: str | Path) -> None:
    """Write an ``.npz`` checkpoint with a versioned JSON header."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": model.mode.value,
        "n_data_qubits": model.n_data_qubits,
        "layers": model.layers,
        "activations": [l.activation for l in model.extractor],
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **model.parameters())


def load_model(path: str | Path) -> HybridModel:
    with np.load(path, allow_pickle=False) as z:
        try:
            header = json.loads(str(z["header"]))
        except (KeyError, ValueError):
            raise ModelError(f"{path}: missing or unreadable checkpoint header") from None
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ModelError(f"{path}: not a model checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version {header.get('version')}")
        arrays = {k: z[k] for k in z.files if k != "header"}
    ext = [
        DenseLayer(arrays[f"extractor.{k}.weights"], arrays[f"extractor.{k}.bias"], act)
        for k, act in enumerate(header["activations"])
    ]
    return HybridModel(
        extractor=ext, theta=arrays["theta"], references=arrays["references"],
        head_weights=arrays["head.weights"], head_bias=arrays["head.bias"],
        n_data_qubits=header["n_data_qubits"], layers=header["layers"], mode=header["mode"],
    )
