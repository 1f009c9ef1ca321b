# utils/plots.py
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from utils.io import atomic_write_text, read_json, read_table  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamps so reruns produce identical SVG files
matplotlib.rcParams["svg.hashsalt"] = "radlab"
SVG_METADATA = {"Date": None, "Creator": None}

REPLOT_SCRIPT = '''"""Redraw the time-series plots of this run: python replot.py"""
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).resolve().parent
table = here.parent / "diagnostics.csv"
with open(table, encoding="utf-8") as handle:
    handle.readline()
    names = handle.readline().strip().split(",")
    data = np.loadtxt(handle, delimiter=",", ndmin=2)
t = data[:, names.index("t")]
for name in {columns!r}:
    values = data[:, names.index(name)]
    keep = np.isfinite(values)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t[keep], values[keep])
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    fig.tight_layout()
    fig.savefig(here / f"{{name}}.svg", metadata={{"Date": None}})
    plt.close(fig)
'''


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def _series_plot(t: np.ndarray, values: np.ndarray, name: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, values, lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def _decay_plot(times, values, fit: dict, path: Path) -> Path:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (times > 0) & (values > 0)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(times[keep], values[keep], "o", ms=3, label="measured")
    lo, hi = fit["window"]
    line_t = np.geomspace(lo, hi, 50)
    ax.loglog(line_t, np.exp(fit["intercept"]) * line_t ** fit["exponent"], "-", label="fit")
    ax.set_xlabel("t")
    ax.set_ylabel("interior energy")
    ax.set_title(f"slope {fit['exponent']:.4g}, r² {fit['r2']:.3f}")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def emit_plots(artifact: str | Path) -> tuple[list[Path], list[str]]:
    """Write SVG plots and a standalone replot script under ``artifact/plots``.

    Returns the written files and notes about skipped series.
    """
    artifact = Path(artifact)
    notes: list[str] = []
    written: list[Path] = []
    table = artifact / "diagnostics.csv"
    if not table.exists():
        notes.append(f"no diagnostics in {artifact}")
        return written, notes

    _, columns = read_table(table)
    t = columns.get("t", np.empty(0))
    if t.size == 0:
        notes.append("diagnostics table is empty")
        return written, notes

    plots = artifact / "plots"
    plotted = []
    for name, values in columns.items():
        if name == "t":
            continue
        keep = np.isfinite(values)
        if not keep.any():
            notes.append(f"{name}: no values, skipped")
            continue
        written.append(_series_plot(t[keep], values[keep], name, plots / f"{name}.svg"))
        plotted.append(name)

    summary_path = artifact / "summary.json"
    if summary_path.exists():
        decay = read_json(summary_path).get("results", {}).get("interior_decay")
        if decay and decay.get("fit"):
            series = _interior_series(artifact)
            if series is not None:
                written.append(_decay_plot(*series, decay["fit"], plots / "interior_decay.svg"))
        elif decay:
            notes.append("interior_decay: no fit, decay plot skipped")

    if plotted:
        written.append(atomic_write_text(plots / "replot.py", REPLOT_SCRIPT.format(columns=plotted)))
    for note in notes:
        logger.info("plot note: %s", note)
    return written, notes


def _interior_series(artifact: Path):
    path = artifact / "interior_decay.csv"
    if not path.exists():
        return None
    _, columns = read_table(path)
    return columns["t"], columns["energy"]
