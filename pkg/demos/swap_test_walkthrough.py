"""Walk through a SWAP test, then watch one malicious block bend its reading.

Run with ``python3 demos/swap_test_walkthrough.py``.
"""
import numpy as np

from squashlab.attack import inject_untargeted
from squashlab.circuit import lower_swaps, serialize, stats
from squashlab.detector import detect
from squashlab.simulator import (
    ancilla_zero_prob,
    fidelity,
    product_state,
    sample,
    swap_test_circuit,
    zero_state,
)


def ry_state(angle: float) -> np.ndarray:
    return np.array([np.cos(angle / 2), np.sin(angle / 2)], dtype=complex)


a, b = ry_state(0.7), ry_state(1.9)
circuit = swap_test_circuit(1)
state = product_state(zero_state(1), a, b)

print("A one-qubit SWAP test (ancilla 0, data 1, reference 2):")
print(serialize(circuit))
print(f"fidelity |<a|b>|^2        = {fidelity(a, b):.6f}")
print(f"(1 + F) / 2               = {(1 + fidelity(a, b)) / 2:.6f}")
print(f"simulated P(ancilla = 0)  = {ancilla_zero_prob(circuit, state):.6f}")
shots = sample(circuit, state, shots=4000, seed=0)
print(f"sampled over 4000 shots   = {shots.frequency('0'):.4f}")

# The attacker slips CSWAP + SWAP blocks in before the closing H.
tampered = inject_untargeted(circuit, 2, seed=3)
print("\nSame test with two injected blocks:")
print(serialize(tampered))
print(f"clean reading    {ancilla_zero_prob(circuit, state):.6f}")
print(f"tampered reading {ancilla_zero_prob(tampered, state):.6f}")

clean_gates = stats(lower_swaps(circuit)).total_gates
hit_gates = stats(lower_swaps(tampered)).total_gates
print(f"\nlowered gate count: {clean_gates} -> {hit_gates} (each SWAP costs three CNOTs)")

print("\nDetector, comparing the deployed circuit against the vetted baseline:")
print(detect(circuit, tampered).as_text())
