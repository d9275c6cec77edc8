"""Render fidelity-decay figures from bfl CSV outputs.

Driven by a JSON figure spec; reads only the documented CSV schemas (the
`trace` and `ensemble` command outputs), never recomputes physics, and
writes deterministic image files (fixed geometry, scrubbed metadata).

Spec format:

    {
      "inputs": [{"path": "runs/a/ensemble.csv", "label": "lam=1e-6"}, ...],
      "mode": "loglog" | "linear",
      "output": "figure.png",
      "title": "...",                  # optional
      "x_range": [0.0, 6.0],           # optional
      "y_range": [1e-12, 1e-6],        # optional
      "markers": [0.5, 1.0, 1.5]       # optional vertical lines
    }
"""

from __future__ import annotations

import csv
import json
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "SeriesError", "load_series", "render", "main"]

# one column set per documented CSV schema; the y column is the 1 - F flavor
_SCHEMAS = {
    ("t", "F", "one_minus_F", "re_f", "im_f"): "one_minus_F",
    ("t", "mean_F", "one_minus_mean_F", "std_F", "n_realizations"): "one_minus_mean_F",
}

FIGSIZE = (7.0, 4.5)
DPI = 150

# 1 - F below the double-precision resolution of spectral propagation
# (accumulated phase rounding) is noise, not signal; log-log mode drops it
# together with the non-positive points
NOISE_FLOOR = 1e-13


class SeriesError(RuntimeError):
    """A CSV input is missing or does not match a documented schema."""


@dataclass(frozen=True)
class FigureSpec:
    inputs: list[dict]
    mode: str
    output: str
    title: str | None = None
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] | None = None
    markers: list[float] | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "FigureSpec":
        data = json.loads(Path(path).read_text())
        mode = data.get("mode", "loglog")
        if mode not in ("loglog", "linear"):
            raise ValueError(f"mode must be 'loglog' or 'linear', got {mode!r}")
        inputs = data.get("inputs", [])
        if not inputs:
            raise ValueError("figure spec needs at least one input CSV")
        for item in inputs:
            if "path" not in item:
                raise ValueError("every input needs a 'path'")
        if "output" not in data:
            raise ValueError("figure spec needs an 'output' image path")
        return cls(
            inputs=inputs,
            mode=mode,
            output=data["output"],
            title=data.get("title"),
            x_range=tuple(data["x_range"]) if data.get("x_range") else None,
            y_range=tuple(data["y_range"]) if data.get("y_range") else None,
            markers=list(data["markers"]) if data.get("markers") else None,
        )


def load_series(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """(t, 1 - F) from a trace or ensemble CSV, validating the header."""
    path = Path(path)
    if not path.exists():
        raise SeriesError(f"input CSV not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SeriesError(f"empty CSV: {path}") from None
        y_col = _SCHEMAS.get(header)
        if y_col is None:
            raise SeriesError(f"unrecognized CSV header in {path}: {','.join(header)}")
        t_idx, y_idx = header.index("t"), header.index(y_col)
        t_vals, y_vals = [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                t_vals.append(float(row[t_idx]))
                y_vals.append(float(row[y_idx]))
            except (ValueError, IndexError):
                raise SeriesError(f"malformed CSV row {lineno} in {path}") from None
    return np.asarray(t_vals), np.asarray(y_vals)


def render(spec: FigureSpec) -> Path:
    """Render the spec to its output image; returns the written path."""
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    for item in spec.inputs:
        t, y = load_series(item["path"])
        label = item.get("label", Path(item["path"]).stem)
        if spec.mode == "loglog":
            keep = (y > NOISE_FLOOR) & (t > 0)
            dropped = y.size - int(keep.sum())
            if dropped:
                warnings.warn(
                    f"{item['path']}: dropped {dropped} non-positive points in log-log mode",
                    stacklevel=2,
                )
            if not keep.any():
                warnings.warn(f"{item['path']}: empty series in log-log mode", stacklevel=2)
                continue
            ax.loglog(t[keep], y[keep], lw=0.9, label=label)
        else:
            ax.plot(t, y, lw=0.9, label=label)
    if spec.markers:
        for x in spec.markers:
            ax.axvline(x, color="0.5", lw=0.7, ls="--")
    ax.set_xlabel("t  [Heisenberg times]")
    ax.set_ylabel(r"$1 - \langle F(t) \rangle$")
    if spec.title:
        ax.set_title(spec.title)
    if spec.x_range:
        ax.set_xlim(*spec.x_range)
    if spec.y_range:
        ax.set_ylim(*spec.y_range)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()

    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out.suffix == ".svg" else {"Software": "plot-fidelity"}
    fig.savefig(out, metadata=metadata)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1 or argv[0] in ("-h", "--help"):
        print("usage: plot-fidelity <spec.json>", file=sys.stderr)
        return 2
    try:
        spec = FigureSpec.from_file(argv[0])
    except (OSError, ValueError) as exc:
        print(f"bad figure spec: {exc}", file=sys.stderr)
        return 2
    try:
        out = render(spec)
    except SeriesError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(out)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
