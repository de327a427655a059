"""Gate-count and wall-time overhead of tampered inference circuits."""
from __future__ import annotations

import gc
import time
from dataclasses import dataclass

import numpy as np

from ..attack import AttackConfig, AttackMode, inject_targeted, inject_untargeted
from ..circuit import lower_swaps, stats
from ..hqnn import Dataset, HybridModel, InferenceCircuits, circuit_input, encoded_state, extract, inference_circuits
from ..simulator import run

MIN_REPETITIONS = 10
CHUNK = 128  # samples per simulated execution batch


class OverheadError(ValueError):
    pass


def attack_label(cfg: AttackConfig | None) -> str:
    return "clean" if cfg is None else cfg.label


def deployed_circuits(model: HybridModel, cfg: AttackConfig | None, lowered: bool = True) -> InferenceCircuits:
    """Inference circuits as they would run on hardware: attacked, then SWAP-lowered."""
    circuits = inference_circuits(model)
    if cfg is not None and cfg.mode is AttackMode.UNTARGETED:
        circuits = circuits.map(lambda c: inject_untargeted(c, cfg.swap_blocks, cfg.seed, cfg.insertion_sites))
    elif cfg is not None:
        noise = cfg.resolved_noise_angle()
        circuits = circuits.replace_class(cfg.target_class, lambda c: inject_targeted(c, noise))
    return circuits.map(lower_swaps) if lowered else circuits


@dataclass(frozen=True)
class OverheadRow:
    label: str
    total_gates: int
    depth: int
    gate_overhead_pct: float
    depth_delta: int
    mean_seconds: float
    std_seconds: float
    time_overhead_pct: float
    samples: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "total_gates": self.total_gates,
            "depth": self.depth,
            "gate_overhead_pct": self.gate_overhead_pct,
            "depth_delta": self.depth_delta,
            "mean_seconds": self.mean_seconds,
            "std_seconds": self.std_seconds,
            "time_overhead_pct": self.time_overhead_pct,
        }


def _epoch_pass(circuits: InferenceCircuits, psi: np.ndarray) -> None:
    for start in range(0, len(psi), CHUNK):
        chunk = psi[start:start + CHUNK]
        for c in circuits.all():
            run(c, chunk)


def measure_overhead(model: HybridModel, data: Dataset, attacks, repetitions: int = 20) -> list[OverheadRow]:
    """Compare each attack (``None`` = clean) against the clean deployment.

    One timed "epoch" executes every deployed, lowered inference circuit once
    over the whole dataset, in batches of ``CHUNK`` samples. Configurations
    are interleaved inside each repetition so drift in machine load hits all of them alike, and garbage
    collection is paused while timing. Gate and depth figures are summed
    over all inference circuits.
    """
    if repetitions < MIN_REPETITIONS:
        raise OverheadError(f"repetitions must be at least {MIN_REPETITIONS}")
    attacks = list(attacks)
    deployments = [deployed_circuits(model, a) for a in attacks]
    clean = deployed_circuits(model, None)
    psi = circuit_input(encoded_state(extract(model, data.features)), model.n_data_qubits)

    labels = ["__clean__"] + [attack_label(a) for a in attacks]
    times = {k: [] for k in range(len(labels))}
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repetitions):
            for k, circuits in enumerate([clean] + deployments):
                t0 = time.perf_counter()
                _epoch_pass(circuits, psi)
                times[k].append(time.perf_counter() - t0)
    finally:
        if gc_was_enabled:
            gc.enable()

    def totals(circuits):
        s = [stats(c) for c in circuits.all()]
        return sum(x.total_gates for x in s), sum(x.depth for x in s)

    base_gates, base_depth = totals(clean)
    base_time = float(np.mean(times[0]))
    rows = []
    for k, (a, circuits) in enumerate(zip(attacks, deployments), start=1):
        gates, depth = totals(circuits)
        t = np.asarray(times[k])
        rows.append(OverheadRow(
            label=attack_label(a),
            total_gates=gates,
            depth=depth,
            gate_overhead_pct=100.0 * (gates - base_gates) / base_gates,
            depth_delta=depth - base_depth,
            mean_seconds=float(t.mean()),
            std_seconds=float(t.std(ddof=1)),
            time_overhead_pct=100.0 * (t.mean() - base_time) / base_time,
            samples=tuple(float(v) for v in t),
        ))
    return rows
