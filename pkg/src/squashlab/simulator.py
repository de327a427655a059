"""
Dense statevector simulation.

States are complex numpy arrays of length ``2**n``; qubit 0 is the least
significant bit of the basis index. Every function also accepts a batch of
states stacked along leading axes (shape ``(..., 2**n)``), which is how the
classifier evaluates a whole dataset in one pass.

``run`` applies gates through index permutation and partner-index tables.
``dense_unitary`` instead builds the full matrix from Kronecker products and
projectors, and serves as the oracle for ``run``; only the 2x2 gate
matrices are shared between the two paths.

A circuit may hold several SWAP tests on the same ancilla (an ``H`` on the
ancilla, one or more ancilla-controlled CSWAPs, a closing ``H``). Such a
circuit is read one test at a time: each test is executed with the other
tests' ancilla gates removed, as if the ancilla were measured and re-prepared
between tests. ``swap_test_readings`` returns one P(0) per test; a classifier
consumes the last one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .circuit import Circuit, GateKind, GateOp, check, cswap, h, measure

NORM_TOL = 1e-10
MAX_DENSE_QUBITS = 10

_INV_SQRT2 = 1 / np.sqrt(2)
_FIXED_1Q = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2,
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
}


class SimulationError(ValueError):
    pass


def gate_matrix(g: GateOp) -> np.ndarray:
    """2x2 matrix of a single-qubit gate."""
    if g.kind in _FIXED_1Q:
        return _FIXED_1Q[g.kind]
    c, s = np.cos(g.angle / 2), np.sin(g.angle / 2)
    if g.kind is GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]])
    if g.kind is GateKind.RY:
        return np.array([[c, -s], [s, c]], dtype=complex)
    if g.kind is GateKind.RZ:
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    raise SimulationError(f"{g.kind.value} is not a single-qubit unitary")


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise SimulationError(f"state length {dim} is not a power of two")
    return n


def zero_state(n: int) -> np.ndarray:
    return basis_state(n, 0)


def basis_state(n: int, index: int) -> np.ndarray:
    s = np.zeros(1 << n, dtype=complex)
    s[index] = 1.0
    return s


def product_state(*states: np.ndarray) -> np.ndarray:
    """Tensor product with the FIRST argument on the lowest qubits.

    ``product_state(a, b)`` puts ``a`` on qubits ``0..n_a-1`` and ``b`` above
    it, so registers read left to right in qubit order. Leading batch axes are
    broadcast.
    """
    out = np.asarray(states[0], dtype=complex)
    for s in states[1:]:
        s = np.asarray(s, dtype=complex)
        out = (s[..., :, None] * out[..., None, :]).reshape(
            *np.broadcast_shapes(s.shape[:-1], out.shape[:-1]), -1
        )
    return out


def normalize(state: np.ndarray) -> np.ndarray:
    return state / np.linalg.norm(state, axis=-1, keepdims=True)


def check_state(state: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    n_qubits_of(state)
    norms = np.sum(np.abs(state) ** 2, axis=-1)
    if not np.all(np.abs(norms - 1) <= tol):
        raise SimulationError("state is not normalized")
    return state


@lru_cache(maxsize=256)
def _permutation(kind: GateKind, qubits: tuple[int, ...], n: int) -> np.ndarray:
    # All permutation gates here are involutions, so the map is its own inverse.
    idx = np.arange(1 << n)
    if kind is GateKind.CNOT:
        c, t = qubits
        return idx ^ (((idx >> c) & 1) << t)
    if kind is GateKind.SWAP:
        a, b = qubits
        diff = ((idx >> a) ^ (idx >> b)) & 1
        return idx ^ ((diff << a) | (diff << b))
    if kind is GateKind.CSWAP:
        c, a, b = qubits
        diff = ((idx >> a) ^ (idx >> b)) & 1 & (idx >> c)
        return idx ^ ((diff << a) | (diff << b))
    raise SimulationError(f"{kind.value} is not a permutation gate")


@lru_cache(maxsize=256)
def _flip_tables(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(1 << n)
    return (idx >> q) & 1, idx ^ (1 << q)


def _apply_1q(state: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply 2x2 matrices ``u`` (shape ``(2, 2)`` or ``batch + (2, 2)``) to qubit q.

    Amplitude i mixes only with its partner ``i ^ (1 << q)``:
    ``out[i] = u[b, b] * s[i] + u[b, 1 - b] * s[i ^ (1 << q)]`` with b the
    value of qubit q in i.
    """
    bit, partner = _flip_tables(q, n)
    diag = u[..., bit, bit]
    off = u[..., bit, 1 - bit]
    out = np.multiply(state, diag)
    if np.any(off):
        # In-place products keep large temporaries to a minimum.
        mixed = state[..., partner]
        np.multiply(mixed, off, out=mixed)
        out += mixed
    return out


def apply_gate(state: np.ndarray, gate: GateOp) -> np.ndarray:
    """Return ``U|state>`` for a unitary gate; MEASURE is rejected."""
    state = np.asarray(state, dtype=complex)
    n = n_qubits_of(state)
    if gate.kind is GateKind.MEASURE:
        raise SimulationError("MEASURE is not a unitary gate")
    if any(not 0 <= q < n for q in gate.qubits):
        raise SimulationError(f"gate {gate.kind.value}{gate.qubits} out of range for {n} qubits")
    if len(gate.qubits) == 1:
        return _apply_1q(state, gate_matrix(gate), gate.qubits[0], n)
    return state[..., _permutation(gate.kind, gate.qubits, n)]


def rotation_matrices(kind: GateKind, angles: np.ndarray) -> np.ndarray:
    """Stack of 2x2 rotation matrices, shape ``angles.shape + (2, 2)``."""
    t = np.asarray(angles, dtype=float)
    c, s = np.cos(t / 2), np.sin(t / 2)
    if kind is GateKind.RY:
        m = [[c, -s], [s, c]]
    elif kind is GateKind.RZ:
        zero = np.zeros_like(t)
        m = [[c - 1j * s, zero], [zero, c + 1j * s]]
    elif kind is GateKind.RX:
        m = [[c, -1j * s], [-1j * s, c]]
    else:
        raise SimulationError(f"{kind.value} is not a rotation")
    return np.moveaxis(np.asarray(m, dtype=complex), (0, 1), (-2, -1))


def apply_rotation(state: np.ndarray, kind: GateKind, angles: np.ndarray, qubit: int) -> np.ndarray:
    """Apply a rotation whose angle varies along the batch axes of ``state``."""
    state = np.asarray(state, dtype=complex)
    n = n_qubits_of(state)
    batch = state.shape[:-1]
    u = np.broadcast_to(rotation_matrices(kind, angles), batch + (2, 2))
    return _apply_1q(state, u, qubit, n)


def run(circuit: Circuit, state: np.ndarray | None = None) -> np.ndarray:
    """Fold ``apply_gate`` over the circuit's unitary gates (MEASURE skipped)."""
    check(circuit)
    if state is None:
        state = zero_state(circuit.n_qubits)
    state = np.asarray(state, dtype=complex)
    if n_qubits_of(state) != circuit.n_qubits:
        raise SimulationError(
            f"state has {n_qubits_of(state)} qubits, circuit has {circuit.n_qubits}"
        )
    for g in circuit.gates:
        if g.kind is not GateKind.MEASURE:
            state = apply_gate(state, g)
    return state


# --- dense oracle ----------------------------------------------------------

_P0 = np.array([[1, 0], [0, 0]], dtype=complex)
_P1 = np.array([[0, 0], [0, 1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)
_X = _FIXED_1Q[GateKind.X]
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1.0, -1.0]).astype(complex)


def _embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Kronecker product placing ``ops[q]`` on qubit q (identity elsewhere)."""
    out = np.eye(1, dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, _I2))
    return out


def _gate_unitary(g: GateOp, n: int) -> np.ndarray:
    if g.kind is GateKind.MEASURE:
        return np.eye(1 << n, dtype=complex)
    if len(g.qubits) == 1:
        return _embed({g.qubits[0]: gate_matrix(g)}, n)
    if g.kind is GateKind.CNOT:
        c, t = g.qubits
        return _embed({c: _P0}, n) + _embed({c: _P1, t: _X}, n)
    if g.kind is GateKind.SWAP:
        a, b = g.qubits
        return sum(_embed({a: p, b: p}, n) for p in (_I2, _X, _Y, _Z)) / 2
    if g.kind is GateKind.CSWAP:
        c, a, b = g.qubits
        sw = sum(_embed({a: p, b: p}, n) for p in (_I2, _X, _Y, _Z)) / 2
        return _embed({c: _P0}, n) + _embed({c: _P1}, n) @ sw
    raise SimulationError(f"unsupported gate {g.kind.value}")


def dense_unitary(circuit: Circuit) -> np.ndarray:
    """Full ``2**n x 2**n`` unitary of the circuit (MEASURE treated as identity)."""
    check(circuit)
    n = circuit.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise SimulationError(f"{n} qubits is too large for a dense unitary (max {MAX_DENSE_QUBITS})")
    u = np.eye(1 << n, dtype=complex)
    for g in circuit.gates:
        u = _gate_unitary(g, n) @ u
    return u


# --- readout ---------------------------------------------------------------


def fidelity(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """Squared overlap ``|<a|b>|**2``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[-1] != b.shape[-1]:
        raise SimulationError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    f = np.abs(np.sum(np.conj(a) * b, axis=-1)) ** 2
    return float(f) if np.ndim(f) == 0 else f


def swap_test_prob(a: np.ndarray, b: np.ndarray) -> np.ndarray | float:
    """Ancilla-|0> probability of a SWAP test between ``a`` and ``b``: (1 + F)/2."""
    return (1 + fidelity(a, b)) / 2


def qubit_probabilities(state: np.ndarray, qubit: int) -> np.ndarray:
    """Born probabilities ``(P(0), P(1))`` of one qubit; shape ``(..., 2)``."""
    n = n_qubits_of(state)
    p = np.abs(np.asarray(state)) ** 2
    p = p.reshape(*p.shape[:-1], 1 << (n - 1 - qubit), 2, 1 << qubit)
    return p.sum(axis=(-3, -1))


def z_expectation(state: np.ndarray, qubit: int) -> np.ndarray | float:
    p = qubit_probabilities(state, qubit)
    z = p[..., 0] - p[..., 1]
    return float(z) if np.ndim(z) == 0 else z


def measured_qubits(circuit: Circuit) -> list[int]:
    return [g.qubits[0] for g in circuit.gates if g.kind is GateKind.MEASURE]


def ancilla_zero_prob(circuit: Circuit, state: np.ndarray | None = None) -> np.ndarray | float:
    """P(ancilla = 0) on the final state of ``run(circuit, state)``."""
    anc = circuit.ancilla
    if anc is None or anc not in measured_qubits(circuit):
        raise SimulationError("circuit has no measured ancilla")
    p0 = qubit_probabilities(run(circuit, state), anc)[..., 0]
    return float(p0) if np.ndim(p0) == 0 else p0


def swap_test_circuit(n_register: int) -> Circuit:
    """Explicit SWAP test: ancilla 0, register A on 1..m, register B on m+1..2m.

    Register qubits are paired by position. Feed it
    ``product_state(|0>, a, b)``.
    """
    m = n_register
    c = Circuit.empty(2 * m + 1, ancilla=0, reference=range(m + 1, 2 * m + 1), label="swap-test")
    gates = [h(0)] + [cswap(0, 1 + j, 1 + m + j) for j in range(m)] + [h(0), measure(0)]
    return c.with_gates(gates)


def explicit_swap_test_prob(a: np.ndarray, b: np.ndarray) -> float:
    """SWAP-test probability obtained by simulating the full ancilla circuit."""
    m = n_qubits_of(a)
    return ancilla_zero_prob(swap_test_circuit(m), product_state(zero_state(1), a, b))


def swap_tests(circuit: Circuit) -> list[tuple[int, int]]:
    """``(start, end)`` gate indices of each H ... CSWAP ... H block on the ancilla."""
    anc = circuit.ancilla
    if anc is None:
        return []
    tests, start, has_cswap = [], None, False
    for i, g in enumerate(circuit.gates):
        if g.kind is GateKind.H and g.qubits == (anc,):
            if start is not None and has_cswap:
                tests.append((start, i))
                start, has_cswap = None, False
            else:
                start, has_cswap = i, False
        elif g.kind is GateKind.CSWAP and g.qubits[0] == anc and start is not None:
            has_cswap = True
    return tests


def swap_test_executions(circuit: Circuit) -> list[Circuit]:
    """One executable circuit per SWAP test, ending in a MEASURE of the ancilla.

    Execution ``t`` keeps every gate before the end of test ``t`` except the
    ancilla gates of other tests; the last execution also keeps the tail of
    the circuit (anything after the last closing H).
    """
    anc = circuit.ancilla
    tests = swap_tests(circuit)
    if not tests:
        raise SimulationError("circuit holds no SWAP test")
    out = []
    for t, (start, end) in enumerate(tests):
        last = t == len(tests) - 1
        others = [(s, e) for s, e in tests if (s, e) != (start, end)]
        keep = []
        for i, g in enumerate(circuit.gates):
            if i > end and not last:
                break
            if g.kind is GateKind.MEASURE:
                continue
            if anc in g.qubits and any(s <= i <= e for s, e in others):
                continue
            keep.append(g)
        measured = [g for g in circuit.gates if g.kind is GateKind.MEASURE] if last else [measure(anc)]
        if not any(m.qubits == (anc,) for m in measured):
            measured = [measure(anc)] + measured
        out.append(circuit.with_gates(keep + measured))
    return out


def swap_test_readings(circuit: Circuit, state: np.ndarray | None = None) -> list:
    """Ancilla P(0) of every SWAP test in ``circuit``, in circuit order."""
    return [ancilla_zero_prob(c, state) for c in swap_test_executions(circuit)]


# --- sampling --------------------------------------------------------------


@dataclass(frozen=True)
class ShotResult:
    counts: dict[str, int]
    shots: int

    def frequency(self, bitstring: str) -> float:
        return self.counts.get(bitstring, 0) / self.shots


def sample(circuit: Circuit, state: np.ndarray | None = None, shots: int = 1024,
           seed: int | np.random.Generator | None = None) -> ShotResult:
    """Sample the measured qubits (all qubits when there is no MEASURE).

    Bitstrings list the measured qubits in the order they are measured.
    """
    if shots < 1:
        raise SimulationError("shots must be at least 1")
    final = run(circuit, state)
    if final.ndim != 1:
        raise SimulationError("sampling takes a single state, not a batch")
    n = circuit.n_qubits
    qubits = measured_qubits(circuit) or list(range(n - 1, -1, -1))
    rng = np.random.default_rng(seed)
    probs = np.abs(final) ** 2
    outcomes = rng.choice(1 << n, size=shots, p=probs / probs.sum())
    counts: dict[str, int] = {}
    for idx, cnt in zip(*np.unique(outcomes, return_counts=True)):
        key = "".join(str((int(idx) >> q) & 1) for q in qubits)
        counts[key] = counts.get(key, 0) + int(cnt)
    return ShotResult(dict(sorted(counts.items())), shots)


def dump_csv(state: np.ndarray, path: str | Path) -> None:
    """Write ``index,real,imag`` rows for debugging."""
    lines = ["index,real,imag"] + [f"{i},{a.real!r},{a.imag!r}" for i, a in enumerate(np.asarray(state))]
    Path(path).write_text("\n".join(lines) + "\n")

