"""Command-line entry point: ``squashlab <command> ...``.

Exit codes: 0 success (detect: clean), 1 usage error, 2 runtime failure,
3 detect found a tampered circuit, 4 detect found a suspicious circuit.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .attack import AttackConfig, AttackError, AttackMode, load_config
from .circuit import CircuitError, CircuitParseError, parse, serialize
from .detector import DetectorError, Verdict, detect
from .harness.data import DataError
from .harness.experiment import (
    ExperimentConfig,
    ExperimentError,
    RunLedger,
    load_datasets,
    load_experiment,
    run_experiment,
    train_model,
)
from .harness.overhead import OverheadError, attack_label, deployed_circuits, measure_overhead
from .harness.report import ReportError, plot_timing, render_overhead_csv, report
from .hqnn import DivergenceError, ModelError, evaluate, load_model
from .simulator import SimulationError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_TAMPERED, EXIT_SUSPICIOUS = 0, 1, 2, 3, 4

RUNTIME_ERRORS = (
    AttackError, CircuitError, CircuitParseError, DataError, DetectorError, DivergenceError,
    ExperimentError, ModelError, OSError, OverheadError, ReportError, SimulationError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _experiment(args) -> ExperimentConfig:
    cfg = load_experiment(args.config)
    return cfg.with_overrides(seed=args.seed, out=args.out)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_train(args) -> int:
    cfg = replace(_experiment(args), attacks=())
    ledger = run_experiment(cfg)
    report([ledger], cfg.out)
    _print({"run_id": ledger.run_id, "test": ledger.clean_eval, "out": str(cfg.out)})
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _experiment(args)
    if args.attack:
        cfg = replace(cfg, attacks=(load_config(args.attack),))
    if not cfg.attacks:
        raise UsageError("no attack configured: add an [attack] section or pass --attack")
    ledger = run_experiment(cfg)
    report([ledger], cfg.out)
    model = load_model(cfg.out / f"{cfg.run_id}.npz")
    # Circuit files for the detector: tags stripped, as an attacker would ship them.
    for acfg in (None,) + cfg.attacks:
        cls = acfg.target_class if acfg is not None and acfg.mode is AttackMode.TARGETED else 0
        circ = deployed_circuits(model, acfg, lowered=False).classes[cls][0]
        (cfg.out / f"{cfg.run_id}.{attack_label(acfg)}.circ").write_text(serialize(circ, with_tags=False))
    _print({"run_id": ledger.run_id, "clean": ledger.clean_eval["accuracy"],
            "attacks": [{"label": a["label"],
                         "accuracy": a["loss"]["accuracy"], "nll": a["loss"]["nll"],
                         "per_class_accuracy": a["loss"]["per_class_accuracy"],
                         "success_rate": a["success_rate"]} for a in ledger.attacks]})
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _experiment(args)
    model = load_model(args.model)
    _, test_set = load_datasets(cfg)
    result = evaluate(model, test_set).as_dict()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _print(result)
    return EXIT_OK


def cmd_detect(args) -> int:
    baseline = parse(Path(args.baseline).read_text())
    observed = parse(Path(args.observed).read_text())
    rep = detect(baseline, observed, args.threshold)
    sys.stdout.write(rep.as_text())
    return {Verdict.CLEAN: EXIT_OK, Verdict.SUSPICIOUS: EXIT_SUSPICIOUS, Verdict.TAMPERED: EXIT_TAMPERED}[rep.verdict]


def cmd_overhead(args) -> int:
    cfg = _experiment(args)
    train_set, test_set = load_datasets(cfg)
    model = load_model(args.model) if args.model else train_model(cfg, train_set, test_set)[0]
    targeted = next((a for a in cfg.attacks if a.mode is AttackMode.TARGETED), None)
    untargeted = [a for a in cfg.attacks if a.mode is AttackMode.UNTARGETED]
    attacks = [None, targeted or AttackConfig(AttackMode.TARGETED, seed=cfg.seed)]
    attacks += untargeted or [AttackConfig(swap_blocks=3, seed=cfg.seed)]
    rows = measure_overhead(model, train_set, attacks, args.repetitions)
    cfg.out.mkdir(parents=True, exist_ok=True)
    ledger_path = cfg.out / f"{cfg.run_id}.json"
    ledgers = [RunLedger.load(ledger_path)] if ledger_path.exists() else []
    if ledgers:
        report(ledgers, cfg.out, rows)
    else:
        (cfg.out / "overhead.csv").write_text(render_overhead_csv(rows))
        plot_timing(rows, cfg.out / "timing.svg")
    _print([r.as_dict() for r in rows])
    return EXIT_OK


def cmd_report(args) -> int:
    ledgers = [RunLedger.load(p) for p in args.ledgers]
    paths = report(ledgers, args.out, include_timing=args.timing)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="squashlab", description="SWAP-tampering lab for hybrid quantum classifiers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment INI file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train a clean model and write its ledger")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="train, then evaluate under the configured attack(s)")
    common(p)
    p.add_argument("--attack", help="attack INI file (replaces the [attack] section)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="evaluate a saved model on the test split")
    common(p)
    p.add_argument("--model", required=True, help="model checkpoint (.npz)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="compare a deployed circuit against a baseline")
    p.add_argument("baseline")
    p.add_argument("observed")
    p.add_argument("--threshold", type=int, default=2, help="depth drift tolerated before 'suspicious'")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("overhead", help="time clean, targeted and untargeted deployments")
    common(p)
    p.add_argument("--model", help="model checkpoint; trained from the config when omitted")
    p.add_argument("--repetitions", type=int, default=20)
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("report", help="render CSV and SVG from ledger files")
    p.add_argument("ledgers", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true", help="fill the epoch_seconds column")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
