"""Experiment orchestration: train a clean model, attack it, keep a ledger."""
from __future__ import annotations

import configparser
import enum
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from filelock import FileLock, Timeout

from ..attack import AttackConfig, AttackMode, config_from_mapping, run_attack
from ..circuit import stats
from ..hqnn import Dataset, HybridModel, Readout, evaluate, inference_circuits, init_model, save_model, train
from .data import load_mnist, make_blobs, mnist_paths, stratified_split


class DatasetKind(enum.Enum):
    MNIST2 = "mnist2"
    MNIST10 = "mnist10"
    BLOBS = "blobs"


class ExperimentError(RuntimeError):
    pass


LEDGER_VERSION = 1
LOCK_NAME = ".squashlab.lock"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run. ``seed`` is mandatory.

    ``attacks`` lists the attack configurations evaluated on the trained
    model, e.g. one per swap-block count for a sweep.
    """

    dataset: DatasetKind
    seed: int
    data_dir: Path | None = None
    pooling: int = 4
    epochs: int = 30
    lr: float = 0.5
    batch_size: int | None = None
    readout: Readout = Readout.HEAD
    hidden: int = 16
    layers: int = 2
    n_per_class: int = 50
    spread: float = 0.3
    dims: int = 2
    test_fraction: float = 0.2
    attacks: tuple[AttackConfig, ...] = ()
    out: Path = Path("out")
    run_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dataset", DatasetKind(self.dataset))
        object.__setattr__(self, "readout", Readout(self.readout))
        object.__setattr__(self, "out", Path(self.out))
        object.__setattr__(self, "attacks", tuple(self.attacks))
        if self.data_dir is not None:
            object.__setattr__(self, "data_dir", Path(self.data_dir))
        if self.seed is None:
            raise ExperimentError("seed is mandatory")
        if self.dataset is not DatasetKind.BLOBS:
            if self.data_dir is None:
                raise ExperimentError(f"{self.dataset.value} needs data_dir")
            for split in ("train", "test"):
                try:
                    mnist_paths(self.data_dir, split)
                except ValueError as err:
                    raise ExperimentError(str(err)) from None
        if not self.run_id:
            object.__setattr__(
                self, "run_id", f"{self.dataset.value}-{self.readout.value}-seed{self.seed}"
            )

    def with_overrides(self, seed: int | None = None, out: Path | str | None = None) -> ExperimentConfig:
        kw = {}
        if seed is not None:
            kw.update(seed=seed, run_id="" if self.run_id.endswith(f"seed{self.seed}") else self.run_id)
        if out is not None:
            kw["out"] = Path(out)
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "dataset": self.dataset.value,
            "seed": self.seed,
            "data_dir": str(self.data_dir) if self.data_dir else None,
            "pooling": self.pooling,
            "epochs": self.epochs,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "readout": self.readout.value,
            "hidden": self.hidden,
            "layers": self.layers,
            "n_per_class": self.n_per_class,
            "spread": self.spread,
            "dims": self.dims,
            "test_fraction": self.test_fraction,
            "attacks": [_attack_dict(a) for a in self.attacks],
            "run_id": self.run_id,
        }


def _attack_dict(cfg: AttackConfig) -> dict:
    return {
        "mode": cfg.mode.value,
        "swap_blocks": cfg.swap_blocks,
        "target_class": cfg.target_class,
        "eta": cfg.eta,
        "max_iters": cfg.max_iters,
        "seed": cfg.seed,
        "noise_angle": cfg.noise_angle,
        "insertion_sites": list(cfg.insertion_sites) if cfg.insertion_sites is not None else None,
    }


_INT_KEYS = {"seed", "pooling", "epochs", "hidden", "layers", "n_per_class", "dims"}
_FLOAT_KEYS = {"lr", "spread", "test_fraction"}


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Read an INI file with an ``[experiment]`` and optional ``[attack]`` section.

    In ``[attack]``, ``swap_blocks`` may list several counts separated by
    commas; each becomes its own attack configuration.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ExperimentError(f"cannot read config {path}")
    if not parser.has_section("experiment"):
        raise ExperimentError(f"{path}: missing [experiment] section")
    sec = dict(parser["experiment"])
    kw: dict = {}
    try:
        for key, raw in sec.items():
            raw = raw.strip()
            if key in _INT_KEYS:
                kw[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kw[key] = float(raw)
            elif key == "batch_size":
                kw[key] = None if raw.lower() in ("", "full", "none") else int(raw)
            elif key == "data_dir":
                kw[key] = (Path(path).parent / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
            elif key in ("dataset", "readout", "run_id", "out"):
                kw[key] = raw
            else:
                raise ExperimentError(f"{path}: unknown experiment option {key!r}")
    except ValueError as err:
        raise ExperimentError(f"{path}: {err}") from None
    if "seed" not in kw:
        raise ExperimentError(f"{path}: seed is mandatory")
    if parser.has_section("attack"):
        att = dict(parser["attack"])
        blocks = [b.strip() for b in att.pop("swap_blocks", "1").split(",") if b.strip()]
        try:
            kw["attacks"] = tuple(config_from_mapping({**att, "swap_blocks": b}) for b in blocks)
        except ValueError as err:
            raise ExperimentError(f"{path}: {err}") from None
    try:
        return ExperimentConfig(**kw)
    except ValueError as err:
        raise ExperimentError(f"{path}: {err}") from None


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset is DatasetKind.BLOBS:
        full = make_blobs(cfg.n_per_class, 2, cfg.dims, cfg.spread, cfg.seed)
        return stratified_split(full, cfg.test_fraction, cfg.seed)
    classes = (0, 1) if cfg.dataset is DatasetKind.MNIST2 else None
    out = []
    for split in ("train", "test"):
        images, labels = mnist_paths(cfg.data_dir, split)
        out.append(load_mnist(images, labels, cfg.pooling, classes, cfg.dataset.value, split))
    return out[0], out[1]


@dataclass
class AttackResult:
    config: AttackConfig
    report: dict
    loss: dict
    stats: dict
    success_rate: float

    def as_dict(self) -> dict:
        return {
            "label": self.config.label,
            "config": _attack_dict(self.config),
            "report": self.report,
            "loss": self.loss,
            "stats": self.stats,
            "success_rate": self.success_rate,
        }


@dataclass
class RunLedger:
    config: dict
    epochs: list[dict] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    clean_stats: dict = field(default_factory=dict)
    clean_eval: dict = field(default_factory=dict)
    attacks: list[dict] = field(default_factory=list)
    version: int = LEDGER_VERSION

    @property
    def run_id(self) -> str:
        return self.config["run_id"]

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "config": self.config,
                "epochs": self.epochs,
                "epoch_seconds": self.epoch_seconds,
                "clean_stats": self.clean_stats,
                "clean_eval": self.clean_eval,
                "attacks": self.attacks,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> RunLedger:
        d = json.loads(text)
        if d.get("version") != LEDGER_VERSION:
            raise ExperimentError(f"unsupported ledger version {d.get('version')}")
        return cls(
            d["config"], d["epochs"], d["epoch_seconds"], d["clean_stats"], d["clean_eval"], d["attacks"],
        )

    @classmethod
    def load(cls, path: str | Path) -> RunLedger:
        return cls.from_json(Path(path).read_text())


def atomic_write(path: Path, data: bytes | str) -> None:
    """Write via a temporary sibling file and ``os.replace``."""
    path = Path(path)
    payload = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def train_model(cfg: ExperimentConfig, train_set: Dataset, test_set: Dataset):
    model = init_model(
        train_set.features.shape[1], train_set.n_classes, cfg.readout,
        hidden=cfg.hidden, layers=cfg.layers, seed=cfg.seed,
    )
    return train(model, train_set, test_set, cfg.epochs, cfg.lr, cfg.seed, cfg.batch_size)


def attack_model(model: HybridModel, test_set: Dataset, attacks) -> list[AttackResult]:
    results = []
    for acfg in attacks:
        outcome = run_attack(model, test_set, acfg)
        cls = acfg.target_class if acfg.mode is AttackMode.TARGETED else 0
        results.append(AttackResult(
            acfg,
            outcome.report.as_dict() if outcome.reports else {},
            outcome.attacked.as_dict(),
            stats(outcome.circuits.classes[cls][0]).as_dict(),
            outcome.success_rate,
        ))
    return results


def run_experiment(cfg: ExperimentConfig, save_checkpoint: bool = True) -> RunLedger:
    """Train, evaluate and optionally attack; write ``<out>/<run_id>.json``.

    One experiment at a time may use an output directory.
    """
    out = cfg.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ExperimentError(f"cannot create {out}: {err}") from None
    try:
        with FileLock(str(out / LOCK_NAME), timeout=0):
            return _run_locked(cfg, save_checkpoint)
    except Timeout:
        raise ExperimentError(f"another experiment holds {out}") from None


def _run_locked(cfg: ExperimentConfig, save_checkpoint: bool) -> RunLedger:
    train_set, test_set = load_datasets(cfg)
    model, history = train_model(cfg, train_set, test_set)
    ledger = RunLedger(config=cfg.as_dict())
    ledger.epochs = [
        {"epoch": r.epoch, "train": r.train.as_dict(), "test": r.test.as_dict()} for r in history
    ]
    ledger.epoch_seconds = [r.seconds for r in history]
    ledger.clean_stats = stats(inference_circuits(model).classes[0][0]).as_dict()
    ledger.clean_eval = evaluate(model, test_set).as_dict()
    ledger.attacks = [r.as_dict() for r in attack_model(model, test_set, cfg.attacks)]
    if len(ledger.epochs) != cfg.epochs:
        raise ExperimentError("ledger epoch count does not match the configuration")
    atomic_write(cfg.out / f"{cfg.run_id}.json", ledger.to_json() + "\n")
    if save_checkpoint:
        tmp = cfg.out / f".{cfg.run_id}.npz.tmp"
        save_model(model, tmp)
        os.replace(tmp, cfg.out / f"{cfg.run_id}.npz")
    return ledger

