"""
Static tamper detection by comparing circuit fingerprints.

A fingerprint summarizes a circuit's structure: gate histogram, depth,
SWAP-family count, per-qubit roles and a digest of its tag-free text form.
Provenance tags are stripped first because a defender cannot see them.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .circuit import Circuit, CircuitStats, GateKind, Role, serialize, stats

DEFAULT_DEPTH_THRESHOLD = 2


class Verdict(enum.Enum):
    CLEAN = "clean"
    SUSPICIOUS = "suspicious"
    TAMPERED = "tampered"


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    n_qubits: int
    stats: CircuitStats
    roles: tuple[Role, ...]
    digest: str
    kinds: tuple[GateKind, ...] = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "stats": self.stats.as_dict(),
            "roles": [r.value for r in self.roles],
            "hash": self.digest,
        }


@dataclass(frozen=True)
class AnomalyReport:
    swap_delta: int
    depth_delta: int
    unknown_gate_positions: tuple[int, ...]
    verdict: Verdict
    rationale: str

    def as_text(self) -> str:
        pos = ",".join(map(str, self.unknown_gate_positions)) or "-"
        return (
            f"verdict: {self.verdict.value}\n"
            f"swap_delta: {self.swap_delta}\n"
            f"depth_delta: {self.depth_delta}\n"
            f"unknown_gate_positions: {pos}\n"
            f"rationale: {self.rationale}\n"
        )


def fingerprint(circuit: Circuit) -> Fingerprint:
    """Deterministic structural summary; ignores tags and the label."""
    text = serialize(circuit.with_label(""), with_tags=False)
    return Fingerprint(
        n_qubits=circuit.n_qubits,
        stats=stats(circuit),
        roles=circuit.roles,
        digest=hashlib.sha256(text.encode()).hexdigest(),
        kinds=tuple(g.kind for g in circuit.gates),
    )


def _unknown_positions(baseline: tuple[GateKind, ...], observed: tuple[GateKind, ...]) -> tuple[int, ...]:
    """Observed positions whose gate kind does not fit the baseline sequence.

    Greedy in-order matching: observed gates that extend the baseline as a
    subsequence are known, the rest are reported.
    """
    out, j = [], 0
    for i, kind in enumerate(observed):
        if j < len(baseline) and baseline[j] is kind:
            j += 1
        else:
            out.append(i)
    return tuple(out)


def compare(baseline: Fingerprint, observed: Fingerprint,
            depth_threshold: int = DEFAULT_DEPTH_THRESHOLD) -> AnomalyReport:
    """Flag growth in SWAP-family gates (tampered) or other drift (suspicious)."""
    if baseline.n_qubits != observed.n_qubits:
        raise DetectorError(f"qubit count mismatch: {baseline.n_qubits} vs {observed.n_qubits}")
    swap_delta = observed.stats.swap_count - baseline.stats.swap_count
    depth_delta = observed.stats.depth - baseline.stats.depth
    unknown = _unknown_positions(baseline.kinds, observed.kinds)
    if swap_delta > 0:
        verdict = Verdict.TAMPERED
        why = f"{swap_delta} more SWAP-family gate(s) than the baseline"
    elif depth_delta > depth_threshold:
        verdict = Verdict.SUSPICIOUS
        why = f"depth grew by {depth_delta} (threshold {depth_threshold})"
    elif observed.digest != baseline.digest or observed.roles != baseline.roles:
        verdict = Verdict.SUSPICIOUS
        why = "gate sequence differs from the baseline"
    else:
        verdict = Verdict.CLEAN
        why = "identical to the baseline"
    return AnomalyReport(swap_delta, depth_delta, unknown, verdict, why)


def detect(baseline: Circuit, observed: Circuit,
           depth_threshold: int = DEFAULT_DEPTH_THRESHOLD) -> AnomalyReport:
    return compare(fingerprint(baseline), fingerprint(observed), depth_threshold)
