"""Run-directory output files and the run manifest.

All files of one run go through a single :class:`RunWriter`, which records
them for the manifest.  Numeric outputs are pure functions of the config;
only ``manifest.json`` carries wall-clock data.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .measure import FLOAT_FMT  # noqa: E402

__all__ = ["RunWriter", "fmt", "jsonable", "MANIFEST"]

MANIFEST = "manifest.json"

# fixed ids and no timestamp keep the SVG bytes stable between runs
plt.rcParams.update({
    "svg.hashsalt": "dwinv",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "figure.figsize": (6.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
})


def fmt(x) -> str:
    """CSV cell text: 17 significant digits for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), FLOAT_FMT)
    return str(x)


def jsonable(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


class RunWriter:
    """Writes every output of a run into one directory and lists it."""

    def __init__(self, out_dir, command: str, config):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()
        self._started = _dt.datetime.now(_dt.timezone.utc)

    def path(self, name: str) -> Path:
        if name in self.files:
            raise ValueError(f"{name} written twice in one run")
        self.files.append(name)
        return self.dir / name

    def csv(self, name: str, header, rows, comment: str | None = None) -> Path:
        p = self.path(name)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\r\n")
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) for x in row])
        return p

    def jsonl(self, name: str, records) -> Path:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(jsonable(rec), sort_keys=True) + "\n")
        return p

    def json(self, name: str, obj) -> Path:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p

    def text(self, name: str, body: str) -> Path:
        p = self.path(name)
        p.write_text(body, encoding="utf-8")
        return p

    def figure(self, name: str, fig) -> Path:
        p = self.path(name)
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        return p

    def finish(self, extra: dict | None = None) -> Path:
        """Write ``manifest.json`` listing every file with its SHA-256."""
        files = []
        for name in self.files:
            digest = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()
            files.append({"name": name, "sha256": digest})
        from . import __version__
        manifest = {
            "artifact": "dwinv",
            "version": __version__,
            "command": self.command,
            "config_hash": self.config.hash,
            "config": self.config.to_dict(),
            "files": files,
            "wall_clock": {
                "started_utc": self._started.isoformat(timespec="seconds"),
                "elapsed_s": round(time.perf_counter() - self._t0, 3),
                **{k: round(v, 3) for k, v in self.timings.items()},
            },
        }
        if extra:
            manifest.update(jsonable(extra))
        p = self.dir / MANIFEST
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


# --- plots ------------------------------------------------------------------

def _ref_line(ax, x, anchor_x, anchor_y, slope, label, style):
    x = np.asarray(x, dtype=float)
    ax.loglog(x, anchor_y * (x / anchor_x) ** slope, style, lw=1, label=label)


def plot_gap(report):
    rho = report.rho_values
    fig, ax = plt.subplots()
    ax.loglog(rho, report.gap_norms, "o-", label="measured gap")
    ax.loglog(rho, report.certificate, "s--", label="certified lower bound")
    _ref_line(ax, rho, rho[0], report.gap_norms[0] * 1.5, 1.0, "slope 1", "k:")
    ax.axvline(report.rho0_hat, color="grey", lw=0.8, label="rho0_hat")
    ax.set_xlabel("rho")
    ax.set_ylabel("||dnu u_rho - dnu u_0||  on  Sigma1")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    return fig


def plot_remainder(report):
    rho = report.rho_values
    fig, ax = plt.subplots()
    ax.loglog(rho, report.remainder_norms, "o-", label="||dnu z||")
    y0 = report.remainder_norms[0]
    _ref_line(ax, rho, rho[0], y0 * 1.5, 1.0, "slope 1", "k:")
    _ref_line(ax, rho, rho[0], y0 * 0.6, 2.0, "slope 2", "k--")
    if report.floor > 0:
        ax.axhline(report.floor, color="grey", lw=0.8, label="discretization floor")
    ax.set_xlabel("rho")
    ax.set_ylabel("remainder norm")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    return fig


def plot_energy(times, energies: dict):
    fig, ax = plt.subplots()
    for label, e in energies.items():
        ax.plot(times, e, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_profile(y, b_true, b_hat, b_noisy=None):
    fig, ax = plt.subplots()
    ax.plot(y, b_true, "k-", label="b true")
    ax.plot(y, b_hat, "o", ms=3, label="b_hat")
    if b_noisy is not None:
        ax.plot(y, b_noisy, "x", ms=3, label="b_hat (noisy)")
    ax.set_xlabel("y on gamma1")
    ax.set_ylabel("b")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_rho_scan(rho, err):
    fig, ax = plt.subplots()
    ax.loglog(rho, err, "o-")
    ax.set_xlabel("rho")
    ax.set_ylabel("relative error of b_hat")
    fig.tight_layout()
    return fig
