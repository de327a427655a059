"""
SWAP-based tampering of a classifier's inference circuits.

Two circuit passes and one optimizer:

* ``inject_untargeted`` adds ``k`` malicious blocks inside the legitimate
  SWAP test, between its CSWAP group and its closing H. A block is a CSWAP controlled by the ancilla on two register
  qubits followed by a SWAP between a register qubit and the ancilla; the
  ancilla is never reset, so the blocks scramble the readout.
* ``inject_targeted`` turns one SWAP test into two: the legitimate
  (pre-tamper) test, then phase noise on the reference register and a
  second (post-tamper) test. The classifier consumes the second reading.
* ``optimize_perturbation`` searches a per-amplitude phase ``delta`` so that
  ``x' = exp(i delta) * x`` is closer to a destination reference than to the
  (noisy) correct-class reference.

Injected gates carry ``Tag.INJECTED`` for overhead accounting only.
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .circuit import (
    Circuit,
    GateKind,
    GateOp,
    Role,
    Tag,
    check,
    cswap,
    h,
    rz,
    stats,
    swap,
)
from .hqnn import (
    Dataset,
    HybridModel,
    InferenceCircuits,
    LossReport,
    ansatz,
    data_state,
    encoded_state,
    extract,
    inference_circuits,
    loss_report,
    probabilities,
    reference_states,
    simulate_features,
)
from .simulator import apply_gate, dense_unitary, fidelity, swap_tests

NOISE_RANGE = (np.pi / 4, np.pi)
FIDELITY_TOL = 1e-9
KICK_SCALE = 0.1
GRAD_FLOOR = 1e-12
SUCCESS_MARGIN = 1e-12  # rounding noise in phase-invariant fidelities stays below this


class AttackMode(enum.Enum):
    UNTARGETED = "untargeted"
    TARGETED = "targeted"


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    """Attack parameters.

    ``insertion_sites`` is ``None`` for RNG-chosen positions, or one offset per
    block into the window between the legitimate CSWAP group and the test's
    closing H (offset 0 is directly after the last CSWAP).
    ``noise_angle=None`` draws it from ``seed`` uniformly in [pi/4, pi].
    """

    mode: AttackMode = AttackMode.UNTARGETED
    swap_blocks: int = 1
    target_class: int = 0
    eta: float = 0.5
    max_iters: int = 500
    seed: int = 0
    noise_angle: float | None = None
    insertion_sites: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", AttackMode(self.mode))
        if self.insertion_sites is not None:
            object.__setattr__(self, "insertion_sites", tuple(int(s) for s in self.insertion_sites))
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise AttackError("eta must be finite and positive")
        if self.max_iters < 0:
            raise AttackError("max_iters must be non-negative")
        if self.mode is AttackMode.UNTARGETED:
            if self.swap_blocks < 1:
                raise AttackError("swap_blocks must be at least 1")
            if self.insertion_sites is not None and len(self.insertion_sites) != self.swap_blocks:
                raise AttackError("insertion_sites needs one offset per block")
        if self.mode is AttackMode.TARGETED and self.target_class < 0:
            raise AttackError("target_class must be a class label")
        if self.noise_angle is not None and not np.isfinite(self.noise_angle):
            raise AttackError("noise_angle must be finite")

    @property
    def label(self) -> str:
        if self.mode is AttackMode.UNTARGETED:
            return f"untargeted-k{self.swap_blocks}"
        return f"targeted-c{self.target_class}"

    def resolved_noise_angle(self) -> float:
        if self.noise_angle is not None:
            return float(self.noise_angle)
        return float(np.random.default_rng(self.seed).uniform(*NOISE_RANGE))


# --- config files ----------------------------------------------------------

_SECTION = "attack"


def config_to_text(cfg: AttackConfig) -> str:
    lines = [f"[{_SECTION}]"]
    for key, value in asdict(cfg).items():
        if isinstance(value, AttackMode):
            value = value.value
        elif key == "insertion_sites":
            value = "random" if value is None else ", ".join(map(str, value))
        elif value is None:
            value = "random"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_from_mapping(section) -> AttackConfig:
    known = set(AttackConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise AttackError(f"unknown attack option(s): {', '.join(sorted(unknown))}")
    kw: dict = {}
    try:
        for key, raw in section.items():
            raw = str(raw).strip()
            if key == "mode":
                kw[key] = AttackMode(raw.lower())
            elif key in ("swap_blocks", "target_class", "max_iters", "seed"):
                kw[key] = int(raw)
            elif key == "eta":
                kw[key] = float(raw)
            elif key == "noise_angle":
                kw[key] = None if raw.lower() == "random" else float(raw)
            elif key == "insertion_sites":
                kw[key] = None if raw.lower() == "random" else tuple(int(t) for t in raw.split(",") if t.strip())
    except ValueError as err:
        raise AttackError(f"bad attack option: {err}") from None
    return AttackConfig(**kw)


def load_config(path: str | Path) -> AttackConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise AttackError(f"cannot read attack config {path}")
    if not parser.has_section(_SECTION):
        raise AttackError(f"{path}: missing [{_SECTION}] section")
    return config_from_mapping(dict(parser[_SECTION]))


def save_config(cfg: AttackConfig, path: str | Path) -> None:
    Path(path).write_text(config_to_text(cfg))


# --- circuit passes ------------------------------------------------------


def _legitimate_test(circuit: Circuit) -> tuple[int, int]:
    anc = circuit.ancilla
    tests = [
        (s, e) for s, e in swap_tests(circuit)
        if not circuit.gates[s].injected and not circuit.gates[e].injected
    ]
    if anc is None or not tests:
        raise AttackError("circuit holds no legitimate SWAP test")
    return tests[0]


def insertion_window(circuit: Circuit) -> tuple[int, int]:
    """First and last insertion index for untargeted blocks.

    The window opens right after the last ancilla-controlled CSWAP of the
    legitimate test and closes at its final H, so the blocks sit inside the
    test and their effect reaches the ancilla through the closing H.
    """
    anc = circuit.ancilla
    start, end = _legitimate_test(circuit)
    last_cswap = max(
        i for i in range(start, end)
        if circuit.gates[i].kind is GateKind.CSWAP and circuit.gates[i].qubits[0] == anc
        and not circuit.gates[i].injected
    )
    return last_cswap + 1, end


def malicious_block(ancilla: int, a: int, b: int, x: int) -> list[GateOp]:
    return [cswap(ancilla, a, b, Tag.INJECTED), swap(x, ancilla, Tag.INJECTED)]


def inject_untargeted(circuit: Circuit, k: int, seed: int = 0,
                      sites: tuple[int, ...] | None = None) -> Circuit:
    """Insert ``k`` malicious blocks after the legitimate CSWAP group.

    Blocks are drawn one after another from ``default_rng(seed)``, so the
    ``k``-block circuit contains the ``k-1``-block circuit's blocks at the
    same positions relative to each other.
    """
    check(circuit)
    if k < 1:
        raise AttackError("k must be at least 1")
    if sites is not None and len(sites) != k:
        raise AttackError("need one insertion site per block")
    anc = circuit.ancilla
    others = [q for q in range(circuit.n_qubits) if q != anc]
    if anc is None or len(others) < 2:
        raise AttackError("need an ancilla and at least two other qubits")
    rng = np.random.default_rng(seed)
    out = circuit
    for b in range(k):
        qa, qb = (int(q) for q in rng.choice(others, size=2, replace=False))
        qx = int(rng.choice(others))
        lo, hi = insertion_window(out)
        if sites is None:
            pos = lo + int(rng.integers(0, hi - lo + 1))
        else:
            pos = lo + sites[b]
            if not lo <= pos <= hi:
                raise AttackError(f"insertion site {sites[b]} outside window of size {hi - lo + 1}")
        out = out.insert(pos, malicious_block(anc, qa, qb, qx))
    return check(out)


def inject_targeted(circuit: Circuit, noise_angle: float) -> Circuit:
    """Add phase noise on the reference register and a post-tamper SWAP test.

    The legitimate test becomes the pre-tamper reading. After its closing H
    every reference qubit gets ``RZ(noise_angle)``, then a copy of the test's
    H/CSWAP/H group measures the same data register against the noisy
    reference.
    """
    check(circuit)
    if not np.isfinite(noise_angle):
        raise AttackError("noise angle must be finite")
    start, end = _legitimate_test(circuit)
    if len(swap_tests(circuit)) != 1:
        raise AttackError("circuit must hold exactly one SWAP test")
    anc = circuit.ancilla
    pairs = [g for g in circuit.gates[start:end] if g.kind is GateKind.CSWAP and g.qubits[0] == anc]
    reference = circuit.qubits_with_role(Role.REFERENCE) or tuple(sorted({g.qubits[2] for g in pairs}))
    tamper = [rz(float(noise_angle), q, Tag.INJECTED) for q in reference]
    tamper += [h(anc, Tag.INJECTED)] + [g.with_tag(Tag.INJECTED) for g in pairs] + [h(anc, Tag.INJECTED)]
    return check(circuit.insert(end + 1, tamper))


def injected_count(circuit: Circuit) -> int:
    return sum(g.injected for g in circuit.gates)


def stats_delta(clean: Circuit, attacked: Circuit) -> dict[str, int]:
    a, b = stats(clean), stats(attacked)
    return {
        "total_gates": b.total_gates - a.total_gates,
        "swap_count": b.swap_count - a.swap_count,
        "depth": b.depth - a.depth,
    }


# --- perturbation optimizer ----------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    """One phase per amplitude: ``x' = exp(i * delta) * x``."""

    delta: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise AttackError("delta must be a finite vector")
        n = d.size.bit_length() - 1
        if d.size < 2 or 1 << n != d.size:
            raise AttackError("delta length must be a power of two")
        object.__setattr__(self, "delta", d)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.exp(1j * self.delta) * np.asarray(x, dtype=complex)


def perturbed_fidelity(delta: np.ndarray, x: np.ndarray, psi: np.ndarray) -> float:
    return fidelity(psi, np.exp(1j * np.asarray(delta)) * x)


def perturbation_gradient(delta: np.ndarray, x: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Gradient of ``|<psi|exp(i delta) x>|^2`` with respect to ``delta``."""
    xp = np.exp(1j * np.asarray(delta)) * x
    a = np.vdot(psi, xp)
    return 2 * np.real(np.conj(a) * 1j * np.conj(psi) * xp)


def attack_success(f_t: float, f_c: float) -> bool:
    """Strict destination-over-correct fidelity condition.

    ``f_t`` must exceed ``f_c`` by more than ``SUCCESS_MARGIN`` so that
    floating-point noise on equal fidelities never counts as success.
    """
    for f in (f_t, f_c):
        if not (np.isfinite(f) and -FIDELITY_TOL <= f <= 1 + FIDELITY_TOL):
            raise AttackError(f"fidelity {f} outside [0, 1]")
    return bool(f_t > f_c + SUCCESS_MARGIN)


@dataclass(frozen=True)
class AttackReport:
    mode: AttackMode
    iterations: int = 0
    f_t_before: float | None = None
    f_t_after: float | None = None
    f_c_before: float | None = None
    f_c_after: float | None = None
    success: bool = False
    converged: bool = False
    injected_gates: int = 0
    stats_delta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


def optimize_perturbation(x: np.ndarray, psi_t: np.ndarray, psi_c: np.ndarray,
                          cfg: AttackConfig) -> tuple[Perturbation, AttackReport]:
    """Phase-only gradient ascent on the destination fidelity.

    Starts from ``delta = 0`` and stops as soon as ``F_t > F_c`` or after
    ``cfg.max_iters`` updates. When the gradient vanishes before success
    (for example at an exact zero of the destination overlap) ``delta``
    receives a small seeded random kick; that cannot help when both
    fidelities are phase invariant, so such cases end unconverged.
    """
    x, psi_t, psi_c = (np.asarray(v, dtype=complex) for v in (x, psi_t, psi_c))
    if not x.shape == psi_t.shape == psi_c.shape or x.ndim != 1:
        raise AttackError("states must be vectors of equal dimension")
    rng = np.random.default_rng(cfg.seed)
    delta = np.zeros(x.size)
    f_t0 = f_t = perturbed_fidelity(delta, x, psi_t)
    f_c0 = f_c = perturbed_fidelity(delta, x, psi_c)
    it = 0
    while not attack_success(f_t, f_c) and it < cfg.max_iters:
        g = perturbation_gradient(delta, x, psi_t)
        if np.max(np.abs(g)) < GRAD_FLOOR:
            delta = delta + rng.normal(0, KICK_SCALE, delta.size)
        else:
            delta = delta + cfg.eta * g
        it += 1
        f_t = perturbed_fidelity(delta, x, psi_t)
        f_c = perturbed_fidelity(delta, x, psi_c)
    ok = attack_success(f_t, f_c)
    report = AttackReport(
        AttackMode.TARGETED, it, f_t0, f_t, f_c0, f_c, success=ok, converged=ok,
    )
    return Perturbation(delta), report


# --- end to end ----------------------------------------------------------


@dataclass(frozen=True)
class AttackOutcome:
    clean_circuits: InferenceCircuits
    circuits: InferenceCircuits
    clean: LossReport
    attacked: LossReport
    reports: tuple[AttackReport, ...]
    probabilities: np.ndarray

    @property
    def report(self) -> AttackReport:
        """Summary report: the untargeted report, or the first targeted one."""
        return self.reports[0]

    @property
    def success_rate(self) -> float:
        return float(np.mean([r.success for r in self.reports])) if self.reports else 0.0


def noisy_reference(model: HybridModel, cls: int, noise_angle: float) -> np.ndarray:
    """Class reference state after the RZ noise on every reference qubit."""
    state = reference_states(model)[cls, 0]
    for q in range(model.n_data_qubits):
        state = apply_gate(state, rz(noise_angle, q))
    return state


def _ansatz_inverse(model: HybridModel) -> np.ndarray:
    return dense_unitary(ansatz(model.theta, model.n_data_qubits, model.layers)).conj().T


def run_attack(model: HybridModel, data: Dataset, cfg: AttackConfig) -> AttackOutcome:
    """Evaluate ``model`` on ``data`` through tampered inference circuits.

    Untargeted: every inference circuit carries the same ``k`` blocks.
    Targeted: only samples of ``cfg.target_class`` are attacked. Their class
    circuit is tampered, their evolved data register receives an optimized
    phase perturbation towards the runner-up class, and the rest of the
    dataset runs through the clean circuits.
    """
    clean_circuits = inference_circuits(model)
    enc = encoded_state(extract(model, data.features))
    clean_p = probabilities(model, simulate_features(model, enc, clean_circuits))
    clean = loss_report(clean_p, data.labels, model.n_classes)

    if cfg.mode is AttackMode.UNTARGETED:
        circuits = clean_circuits.map(
            lambda c: inject_untargeted(c, cfg.swap_blocks, cfg.seed, cfg.insertion_sites)
        )
        p = probabilities(model, simulate_features(model, enc, circuits))
        base, hit = clean_circuits.classes[0][0], circuits.classes[0][0]
        attacked = loss_report(p, data.labels, model.n_classes)
        report = AttackReport(
            AttackMode.UNTARGETED,
            success=attacked.accuracy < clean.accuracy,
            converged=True,
            injected_gates=injected_count(hit),
            stats_delta=stats_delta(base, hit),
        )
        return AttackOutcome(clean_circuits, circuits, clean, attacked, (report,), p)

    c = cfg.target_class
    if not 0 <= c < model.n_classes:
        raise AttackError(f"target class {c} outside 0..{model.n_classes - 1}")
    noise = cfg.resolved_noise_angle()
    circuits = clean_circuits.replace_class(c, lambda circ: inject_targeted(circ, noise))
    base, hit = clean_circuits.classes[c][0], circuits.classes[c][0]
    delta_stats = stats_delta(base, hit)
    n_injected = injected_count(hit)

    p = clean_p.copy()
    idx = np.flatnonzero(data.labels == c)
    reports = []
    if idx.size:
        states = data_state(model, data.features[idx])
        refs = reference_states(model)[:, 0]
        psi_c = noisy_reference(model, c, noise)
        overlap = np.abs(states.conj() @ refs.T) ** 2
        overlap[:, c] = -np.inf
        destination = overlap.argmax(axis=1)
        perturbed = np.empty_like(states)
        for n, (x, t) in enumerate(zip(states, destination)):
            pert, rep = optimize_perturbation(x, refs[t], psi_c, cfg)
            perturbed[n] = pert.apply(x)
            reports.append(replace(rep, injected_gates=n_injected, stats_delta=delta_stats))
        # Feed the perturbed register's pre-image so the deployed ansatz reproduces it.
        pre_image = perturbed @ _ansatz_inverse(model).T
        p[idx] = probabilities(model, simulate_features(model, pre_image, circuits))
    attacked = loss_report(p, data.labels, model.n_classes)
    return AttackOutcome(clean_circuits, circuits, clean, attacked, tuple(reports), p)

