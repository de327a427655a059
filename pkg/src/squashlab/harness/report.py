"""CSV tables and SVG plots rendered from run ledgers."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import RunLedger, atomic_write  # noqa: E402
from .overhead import OverheadRow  # noqa: E402

CSV_COLUMNS = (
    "run_id", "dataset", "mode", "swap_blocks", "epoch", "nll", "accuracy",
    "target_class_accuracy", "total_gates", "swap_count", "depth", "epoch_seconds",
)
SVG_SALT = "squashlab"


class ReportError(OSError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if x != x else f"{x:.6f}"
    return str(x)


def _header(ledgers: list[RunLedger]) -> list[str]:
    cfg = ledgers[0].config
    lines = [
        "# pixels: 28x28 MNIST images average-pooled by the configured factor "
        f"(pooling {cfg['pooling']} gives {28 // cfg['pooling']}x{28 // cfg['pooling']}); "
        "blobs use raw coordinates",
        f"# training: plain gradient descent, {cfg['epochs']} epochs, lr {cfg['lr']}, "
        f"batch {'full' if cfg['batch_size'] is None else cfg['batch_size']}",
        f"# readout: {cfg['readout']}; metrics on the test split",
    ]
    return lines


def ledger_rows(ledger: RunLedger, include_timing: bool = False) -> list[dict]:
    """One row per clean epoch, then one row per attack evaluation."""
    cfg = ledger.config
    targeted = [a for a in ledger.attacks if a["config"]["mode"] == "targeted"]
    target = targeted[0]["config"]["target_class"] if targeted else None
    rows = []
    for rec, secs in zip(ledger.epochs, ledger.epoch_seconds):
        test = rec["test"]
        rows.append({
            "run_id": ledger.run_id,
            "dataset": cfg["dataset"],
            "mode": "clean",
            "swap_blocks": 0,
            "epoch": rec["epoch"],
            "nll": test["nll"],
            "accuracy": test["accuracy"],
            "target_class_accuracy": test["per_class_accuracy"][target] if target is not None else None,
            "total_gates": ledger.clean_stats["total_gates"],
            "swap_count": ledger.clean_stats["swap_count"],
            "depth": ledger.clean_stats["depth"],
            "epoch_seconds": secs if include_timing else None,
        })
    last = ledger.epochs[-1]["epoch"] if ledger.epochs else 0
    for att in ledger.attacks:
        acfg, loss = att["config"], att["loss"]
        is_targeted = acfg["mode"] == "targeted"
        rows.append({
            "run_id": ledger.run_id,
            "dataset": cfg["dataset"],
            "mode": acfg["mode"],
            "swap_blocks": None if is_targeted else acfg["swap_blocks"],
            "epoch": last,
            "nll": loss["nll"],
            "accuracy": loss["accuracy"],
            "target_class_accuracy": loss["per_class_accuracy"][acfg["target_class"]] if is_targeted else None,
            "total_gates": att["stats"]["total_gates"],
            "swap_count": att["stats"]["swap_count"],
            "depth": att["stats"]["depth"],
            "epoch_seconds": None,
        })
    return rows


def render_csv(ledgers: list[RunLedger], include_timing: bool = False) -> str:
    if not ledgers:
        raise ReportError("need at least one ledger")
    buf = io.StringIO()
    buf.write("\n".join(_header(ledgers)) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for ledger in ledgers:
        for row in ledger_rows(ledger, include_timing):
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def _save_svg(fig, path: Path) -> None:
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def plot_sweep(ledgers: list[RunLedger], path: Path) -> None:
    """Accuracy and NLL against SWAP count, one series per swap-block count."""
    series: dict[str, list[tuple[int, float, float]]] = {}
    for ledger in ledgers:
        if ledger.epochs:
            test = ledger.epochs[-1]["test"]
            series.setdefault("clean", []).append(
                (ledger.clean_stats["swap_count"], test["accuracy"], test["nll"])
            )
        for att in ledger.attacks:
            acfg = att["config"]
            key = f"k={acfg['swap_blocks']}" if acfg["mode"] == "untargeted" else "targeted"
            series.setdefault(key, []).append(
                (att["stats"]["swap_count"], att["loss"]["accuracy"], att["loss"]["nll"])
            )
    fig, (ax_acc, ax_nll) = plt.subplots(1, 2, figsize=(9, 3.5))
    means = []
    for key in sorted(series, key=lambda k: (k != "clean", k)):
        pts = sorted(series[key])
        xs = [p[0] for p in pts]
        ax_acc.plot(xs, [p[1] for p in pts], "o", label=key)
        ax_nll.plot(xs, [p[2] for p in pts], "o", label=key)
        if key != "targeted":
            n = len(pts)
            means.append((sum(xs) / n, sum(p[1] for p in pts) / n, sum(p[2] for p in pts) / n))
    means.sort()
    if len(means) > 1:
        ax_acc.plot([m[0] for m in means], [m[1] for m in means], "-", color="grey", lw=1)
        ax_nll.plot([m[0] for m in means], [m[2] for m in means], "-", color="grey", lw=1)
    ax_acc.set(xlabel="SWAP-family gates per class circuit", ylabel="test accuracy", ylim=(0, 1.02))
    ax_nll.set(xlabel="SWAP-family gates per class circuit", ylabel="test NLL")
    ax_acc.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, path)


def plot_timing(rows: list[OverheadRow], path: Path) -> None:
    """Box-style summary of per-epoch wall time for each configuration."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.boxplot([[s * 1e3 for s in r.samples] for r in rows])
    ax.set_xticks(range(1, len(rows) + 1), [r.label for r in rows])
    ax.set_ylabel("epoch wall time (ms)")
    fig.tight_layout()
    _save_svg(fig, path)


def render_overhead_csv(rows: list[OverheadRow]) -> str:
    buf = io.StringIO()
    fields = list(rows[0].as_dict()) if rows else []
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(v) for k, v in r.as_dict().items()})
    return buf.getvalue()


def report(ledgers: list[RunLedger], out: str | Path, overhead: list[OverheadRow] | None = None,
           include_timing: bool = False) -> list[Path]:
    """Write ``metrics.csv`` and ``sweep.svg`` (plus timing files when given)."""
    if not ledgers:
        raise ReportError("need at least one ledger")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "metrics.csv", out / "sweep.svg"]
        atomic_write(paths[0], render_csv(ledgers, include_timing))
        plot_sweep(ledgers, paths[1])
        if overhead:
            paths += [out / "overhead.csv", out / "timing.svg"]
            atomic_write(paths[2], render_overhead_csv(overhead))
            plot_timing(overhead, paths[3])
    except OSError as err:
        raise ReportError(f"cannot write reports to {out}: {err}") from None
    return paths
