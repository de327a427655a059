"""
Circuit intermediate representation.

A circuit is an ordered, immutable list of gates over ``n_qubits`` qubits,
each qubit carrying a register role (ancilla, data or reference). Every gate
carries a provenance tag so that attacker-inserted gates can be attributed
when accounting for overhead; the simulator and the detector never look at it.

Text format, one gate per line::

    qubits 5 ancilla 0
    reference 3 4
    label clean-readout
    H 0
    RY(1.5707963268) 1
    CSWAP 0 1 3
    MEASURE 0

``#`` starts a comment. The ``reference`` and ``label`` directives are
optional; qubits that are neither the ancilla nor listed as reference are
data qubits. A trailing ``@injected`` marks an injected gate.
"""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence


class GateKind(enum.Enum):
    H = "H"
    X = "X"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"
    SWAP = "SWAP"
    CSWAP = "CSWAP"
    MEASURE = "MEASURE"


class Tag(enum.Enum):
    LEGITIMATE = "legitimate"
    INJECTED = "injected"


class Role(enum.Enum):
    ANCILLA = "ancilla"
    DATA = "data"
    REFERENCE = "reference"


ARITY = {
    GateKind.H: 1,
    GateKind.X: 1,
    GateKind.RX: 1,
    GateKind.RY: 1,
    GateKind.RZ: 1,
    GateKind.MEASURE: 1,
    GateKind.CNOT: 2,
    GateKind.SWAP: 2,
    GateKind.CSWAP: 3,
}
ROTATIONS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ})
SWAP_FAMILY = frozenset({GateKind.SWAP, GateKind.CSWAP})

# 10 decimals keeps parse(serialize(c)) inside the 1e-9 angle tolerance.
ANGLE_DECIMALS = 10
ANGLE_TOL = 1e-9


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None
    tag: Tag = Tag.LEGITIMATE

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.angle is not None:
            object.__setattr__(self, "angle", float(self.angle))

    @property
    def injected(self) -> bool:
        return self.tag is Tag.INJECTED

    def with_tag(self, tag: Tag) -> GateOp:
        return replace(self, tag=tag)

    def remap(self, mapping: dict[int, int] | Sequence[int]) -> GateOp:
        """Return the gate acting on ``mapping[q]`` for each of its qubits."""
        return replace(self, qubits=tuple(mapping[q] for q in self.qubits))

    def same_as(self, other: GateOp, tol: float = ANGLE_TOL) -> bool:
        """Structural equality with an angle tolerance; tags included."""
        if (self.kind, self.qubits, self.tag) != (other.kind, other.qubits, other.tag):
            return False
        if self.angle is None or other.angle is None:
            return self.angle is other.angle
        return abs(self.angle - other.angle) <= tol


# Gate constructors. Kept as plain functions so fragments read like circuits.
def h(q: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.H, (q,), tag=tag)


def x(q: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.X, (q,), tag=tag)


def rx(theta: float, q: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.RX, (q,), theta, tag)


def ry(theta: float, q: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.RY, (q,), theta, tag)


def rz(theta: float, q: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.RZ, (q,), theta, tag)


def cnot(control: int, target: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.CNOT, (control, target), tag=tag)


def swap(a: int, b: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.SWAP, (a, b), tag=tag)


def cswap(control: int, a: int, b: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.CSWAP, (control, a, b), tag=tag)


def measure(q: int, tag: Tag = Tag.LEGITIMATE) -> GateOp:
    return GateOp(GateKind.MEASURE, (q,), tag=tag)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    roles: tuple[Role, ...]
    gates: tuple[GateOp, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(Role(r) for r in self.roles))
        object.__setattr__(self, "gates", tuple(self.gates))

    @classmethod
    def empty(cls, n_qubits: int, ancilla: int | None = None,
              reference: Iterable[int] = (), label: str = "") -> Circuit:
        ref = set(reference)
        roles = tuple(
            Role.ANCILLA if q == ancilla else Role.REFERENCE if q in ref else Role.DATA
            for q in range(n_qubits)
        )
        return cls(n_qubits, roles, (), label)

    @property
    def ancilla(self) -> int | None:
        """Index of the (single) ancilla qubit, or None."""
        anc = [q for q, r in enumerate(self.roles) if r is Role.ANCILLA]
        return anc[0] if len(anc) == 1 else None

    def qubits_with_role(self, role: Role) -> tuple[int, ...]:
        return tuple(q for q, r in enumerate(self.roles) if r is role)

    def append(self, *gates: GateOp) -> Circuit:
        return replace(self, gates=self.gates + tuple(gates))

    def extend(self, gates: Iterable[GateOp]) -> Circuit:
        return replace(self, gates=self.gates + tuple(gates))

    def insert(self, index: int, gates: Iterable[GateOp]) -> Circuit:
        g = list(self.gates)
        g[index:index] = list(gates)
        return replace(self, gates=tuple(g))

    def with_gates(self, gates: Iterable[GateOp]) -> Circuit:
        return replace(self, gates=tuple(gates))

    def with_label(self, label: str) -> Circuit:
        return replace(self, label=label)

    def without_injected(self) -> Circuit:
        return self.with_gates(g for g in self.gates if not g.injected)

    def same_as(self, other: Circuit, tol: float = ANGLE_TOL) -> bool:
        """Structural equality (angles compared to ``tol``)."""
        return (
            self.n_qubits == other.n_qubits
            and self.roles == other.roles
            and self.label == other.label
            and len(self.gates) == len(other.gates)
            and all(a.same_as(b, tol) for a, b in zip(self.gates, other.gates))
        )

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)


@dataclass(frozen=True)
class Violation:
    gate_index: int | None
    reason: str

    def __str__(self):
        where = "circuit" if self.gate_index is None else f"gate {self.gate_index}"
        return f"{where}: {self.reason}"


class CircuitError(ValueError):
    """Raised when an operation receives an invalid circuit."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


def validate(circuit: Circuit) -> list[Violation]:
    """Return every invariant violation; an empty list means the circuit is valid."""
    out: list[Violation] = []
    n = circuit.n_qubits
    if n < 1:
        out.append(Violation(None, "n_qubits must be positive"))
    if len(circuit.roles) != n:
        out.append(Violation(None, f"expected {n} roles, got {len(circuit.roles)}"))
    ancillas = circuit.qubits_with_role(Role.ANCILLA)

    measured: set[int] = set()
    for i, g in enumerate(circuit.gates):
        if len(g.qubits) != ARITY[g.kind]:
            out.append(Violation(i, f"{g.kind.value} takes {ARITY[g.kind]} qubit(s), got {len(g.qubits)}"))
        if len(set(g.qubits)) != len(g.qubits):
            out.append(Violation(i, "duplicate qubit index"))
        bad = [q for q in g.qubits if not 0 <= q < n]
        if bad:
            out.append(Violation(i, f"index out of range: {bad}"))
        if (g.kind in ROTATIONS) != (g.angle is not None):
            out.append(Violation(i, "angle must be present iff the gate is a rotation"))
        elif g.angle is not None and not math.isfinite(g.angle):
            out.append(Violation(i, "non-finite angle"))
        after = [q for q in g.qubits if q in measured]
        if after:
            out.append(Violation(i, f"gate after terminal MEASURE on qubit(s) {after}"))
        if g.kind is GateKind.MEASURE:
            measured.update(g.qubits)
        if g.kind is GateKind.CSWAP and 0 <= g.qubits[0] < len(circuit.roles):
            if circuit.roles[g.qubits[0]] is not Role.ANCILLA or len(ancillas) != 1:
                out.append(Violation(i, "CSWAP control must be the single ancilla qubit"))
    return out


def is_valid(circuit: Circuit) -> bool:
    return not validate(circuit)


def check(circuit: Circuit) -> Circuit:
    """Raise CircuitError when ``circuit`` is invalid, else return it unchanged."""
    violations = validate(circuit)
    if violations:
        raise CircuitError(violations)
    return circuit


def lower_swaps(circuit: Circuit) -> Circuit:
    """Replace each SWAP(a, b) by CNOT(a, b) CNOT(b, a) CNOT(a, b).

    CSWAP is left intact. The three CNOTs inherit the SWAP's provenance tag.
    """
    check(circuit)
    gates: list[GateOp] = []
    for g in circuit.gates:
        if g.kind is GateKind.SWAP:
            a, b = g.qubits
            gates += [cnot(a, b, g.tag), cnot(b, a, g.tag), cnot(a, b, g.tag)]
        else:
            gates.append(g)
    return circuit.with_gates(gates)


@dataclass(frozen=True)
class CircuitStats:
    gate_histogram: dict[GateKind, int] = field(default_factory=dict)
    depth: int = 0
    swap_count: int = 0
    total_gates: int = 0

    def count(self, kind: GateKind) -> int:
        return self.gate_histogram.get(kind, 0)

    def as_dict(self) -> dict:
        return {
            "histogram": {k.value: v for k, v in sorted(self.gate_histogram.items(), key=lambda kv: kv[0].value)},
            "depth": self.depth,
            "swap_count": self.swap_count,
            "total_gates": self.total_gates,
        }


def depth(circuit: Circuit) -> int:
    """Longest chain of gates ordered by shared qubits."""
    level = [0] * circuit.n_qubits
    for g in circuit.gates:
        d = 1 + max(level[q] for q in g.qubits)
        for q in g.qubits:
            level[q] = d
    return max(level, default=0)


def stats(circuit: Circuit) -> CircuitStats:
    check(circuit)
    hist = Counter(g.kind for g in circuit.gates)
    return CircuitStats(
        gate_histogram=dict(hist),
        depth=depth(circuit),
        swap_count=sum(hist[k] for k in SWAP_FAMILY),
        total_gates=len(circuit.gates),
    )


# ---------------------------------------------------------------------------
# Text serialization


class CircuitParseError(ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


def _format_gate(g: GateOp, with_tags: bool) -> str:
    head = g.kind.value
    if g.angle is not None:
        head += f"({g.angle:.{ANGLE_DECIMALS}f})"
    line = " ".join([head, *map(str, g.qubits)])
    if with_tags and g.injected:
        line += " @injected"
    return line


def serialize(circuit: Circuit, with_tags: bool = True) -> str:
    """Render ``circuit`` in the line format; ``with_tags=False`` drops provenance."""
    check(circuit)
    anc = circuit.ancilla
    lines = [f"qubits {circuit.n_qubits} ancilla {anc if anc is not None else -1}"]
    ref = circuit.qubits_with_role(Role.REFERENCE)
    if ref:
        lines.append("reference " + " ".join(map(str, ref)))
    if circuit.label:
        lines.append(f"label {circuit.label}")
    lines += [_format_gate(g, with_tags) for g in circuit.gates]
    return "\n".join(lines) + "\n"


def _parse_int(tok: str, line_no: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CircuitParseError(line_no, f"expected an integer, got {tok!r}") from None


def _parse_gate(text: str, line_no: int, n: int) -> GateOp:
    tokens = text.split()
    tag = Tag.LEGITIMATE
    if tokens[-1] == "@injected":
        tag = Tag.INJECTED
        tokens = tokens[:-1]
    head, args = tokens[0], tokens[1:]
    angle = None
    if "(" in head:
        if not head.endswith(")"):
            raise CircuitParseError(line_no, f"malformed gate {head!r}")
        head, _, raw = head[:-1].partition("(")
        try:
            angle = float(raw)
        except ValueError:
            raise CircuitParseError(line_no, f"bad angle {raw!r}") from None
    try:
        kind = GateKind(head.upper())
    except ValueError:
        raise CircuitParseError(line_no, f"unknown gate {head!r}") from None
    if (kind in ROTATIONS) != (angle is not None):
        raise CircuitParseError(line_no, f"{kind.value} {'needs' if kind in ROTATIONS else 'takes no'} angle")
    qubits = tuple(_parse_int(t, line_no) for t in args)
    if len(qubits) != ARITY[kind]:
        raise CircuitParseError(line_no, f"{kind.value} takes {ARITY[kind]} qubit(s), got {len(qubits)}")
    for q in qubits:
        if not 0 <= q < n:
            raise CircuitParseError(line_no, f"qubit index {q} out of range for {n} qubits")
    return GateOp(kind, qubits, angle, tag)


def parse(text: str) -> Circuit:
    header = None
    reference: tuple[int, ...] = ()
    label = ""
    gates: list[GateOp] = []
    gate_lines: list[int] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            tok = line.split()
            if len(tok) != 4 or tok[0] != "qubits" or tok[2] != "ancilla":
                raise CircuitParseError(line_no, "expected header 'qubits <n> ancilla <index>'")
            n, anc = _parse_int(tok[1], line_no), _parse_int(tok[3], line_no)
            if n < 1:
                raise CircuitParseError(line_no, "qubit count must be positive")
            if not -1 <= anc < n:
                raise CircuitParseError(line_no, f"ancilla index {anc} out of range")
            header = (n, anc)
            continue
        if line.startswith("reference"):
            reference = tuple(_parse_int(t, line_no) for t in line.split()[1:])
            if any(not 0 <= q < header[0] or q == header[1] for q in reference):
                raise CircuitParseError(line_no, "bad reference qubit list")
            continue
        if line.startswith("label"):
            label = line[len("label"):].strip()
            continue
        gates.append(_parse_gate(line, line_no, header[0]))
        gate_lines.append(line_no)
    if header is None:
        raise CircuitParseError(0, "missing 'qubits' header")
    n, anc = header
    c = Circuit.empty(n, anc if anc >= 0 else None, reference, label).with_gates(gates)
    violations = validate(c)
    if violations:
        v = violations[0]
        raise CircuitParseError(gate_lines[v.gate_index] if v.gate_index is not None else 1, v.reason)
    return c
