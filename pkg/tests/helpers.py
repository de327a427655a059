"""Shared builders for the test suite."""
from __future__ import annotations

import numpy as np

from squashlab.circuit import Circuit, GateOp, cnot, cswap, h, measure, rx, ry, rz, swap, x
from squashlab.simulator import product_state, zero_state


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_gate(rng: np.random.Generator, n: int, ancilla: int | None = None) -> GateOp:
    """Any unitary gate on ``n`` qubits; CSWAP only when an ancilla controls it."""
    kinds = ["H", "X", "RX", "RY", "RZ"]
    if n >= 2:
        kinds += ["CNOT", "SWAP"]
    if n >= 3 and ancilla is not None:
        kinds.append("CSWAP")
    kind = kinds[rng.integers(len(kinds))]
    q = [int(v) for v in rng.permutation(n)]
    angle = float(rng.uniform(-2 * np.pi, 2 * np.pi))
    if kind == "CSWAP":
        a, b = [v for v in q if v != ancilla][:2]
        return cswap(ancilla, a, b)
    return {
        "H": lambda: h(q[0]),
        "X": lambda: x(q[0]),
        "RX": lambda: rx(angle, q[0]),
        "RY": lambda: ry(angle, q[0]),
        "RZ": lambda: rz(angle, q[0]),
        "CNOT": lambda: cnot(q[0], q[1]),
        "SWAP": lambda: swap(q[0], q[1]),
    }[kind]()


def random_circuit(rng: np.random.Generator, n: int, n_gates: int, with_ancilla: bool = True) -> Circuit:
    ancilla = 0 if with_ancilla and n >= 3 else None
    c = Circuit.empty(n, ancilla=ancilla)
    return c.with_gates(random_gate(rng, n, ancilla) for _ in range(n_gates))


def fig2_base() -> Circuit:
    """Ancilla 0, data qubit 1, reference qubit 2: a one-qubit SWAP test."""
    c = Circuit.empty(3, ancilla=0, reference=[2], label="base")
    return c.with_gates([ry(0.7, 1), ry(1.9, 2), h(0), cswap(0, 1, 2), h(0), measure(0)])


def swap_test_input(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return product_state(zero_state(1), a, b)


