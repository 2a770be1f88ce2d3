"""On-disk formats: grid fields, trajectories, metric series, sweep matrices.

Every file starts with ``#``-prefixed metadata lines (config hash, seed,
package version) so a result can be traced to the exact run that produced
it. Positions are written with 17 significant digits, which round-trips
float64 exactly; re-analysis of a trajectory therefore reproduces the live
metric series bit for bit.

Field files: metadata lines, then ``key=value`` header lines (m, h, kind,
components, arena_half_width), then the samples row-major with one grid
row per line (for two-component fields, the full component-0 block is
followed by the component-1 block).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import __version__
from .grids import DensityField, GridSpec, ScalarField, VectorField
from .torus import PI

FLOAT_FMT = "%.17g"


def metadata_lines(meta: dict) -> list[str]:
    lines = [f"# swarmherd {__version__}"]
    for key, value in meta.items():
        lines.append(f"# {key}={value}")
    return lines


# ---------------------------------------------------------------------------
# grid fields
# ---------------------------------------------------------------------------

_FIELD_KINDS = {"density": DensityField, "scalar": ScalarField, "vector": VectorField}


def write_field(path: str | Path, field, kind: str, meta: dict | None = None,
                arena_half_width: float | None = None):
    if kind not in _FIELD_KINDS:
        raise ValueError(f"unknown field kind {kind!r}")
    values = field.values
    components = 1 if values.ndim == 2 else values.shape[-1]
    lines = metadata_lines(meta or {})
    lines.append(f"m={field.grid.m}")
    lines.append(f"h={field.grid.h!r}")
    lines.append(f"kind={kind}")
    lines.append(f"components={components}")
    lines.append(f"arena_half_width={(arena_half_width if arena_half_width else PI)!r}")
    blocks = [values] if components == 1 else [values[..., c] for c in range(components)]
    for block in blocks:
        for row in block:
            lines.append(" ".join(FLOAT_FMT % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path: str | Path):
    """Returns (field object, header dict)."""
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line and not rows:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValueError(f"{path}:{line_no}: bad sample line ({exc})") from exc
    try:
        m = int(header["m"])
        kind = header["kind"]
        components = int(header["components"])
    except KeyError as exc:
        raise ValueError(f"{path}: missing header key {exc}") from exc
    data = np.asarray(rows)
    if data.shape != (components * m, m):
        raise ValueError(f"{path}: expected {components}x{m} rows of {m} values, "
                         f"got shape {data.shape}")
    grid = GridSpec(m)
    cls = _FIELD_KINDS[kind]
    if components == 1:
        return cls(grid, data), header
    stacked = np.stack([data[c * m:(c + 1) * m] for c in range(components)], axis=-1)
    return cls(grid, stacked), header


# ---------------------------------------------------------------------------
# trajectories and metrics
# ---------------------------------------------------------------------------


def write_trajectory(path: str | Path, snapshots, meta: dict | None = None,
                     scale: float = 1.0):
    """Snapshots are (t, herders, targets) tuples; positions scaled on write."""
    with open(path, "w", newline="") as fh:
        for line in metadata_lines(meta or {}):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "agent_kind", "agent_id", "x1", "x2"])
        for t, herders, targets in snapshots:
            for kind, block in (("herder", herders), ("target", targets)):
                for idx, pos in enumerate(block):
                    writer.writerow([
                        FLOAT_FMT % t, kind, idx,
                        FLOAT_FMT % (pos[0] * scale), FLOAT_FMT % (pos[1] * scale),
                    ])


def read_trajectory(path: str | Path):
    """Returns a list of (t, herders, targets) tuples in file order."""
    frames: dict[float, dict[str, list]] = {}
    order: list[float] = []
    with open(path, newline="") as fh:
        line_no = 0
        reader = None
        for raw in fh:
            line_no += 1
            if raw.startswith("#"):
                continue
            if reader is None:
                header = next(csv.reader([raw]))
                expected = ["t", "agent_kind", "agent_id", "x1", "x2"]
                if header != expected:
                    raise ValueError(f"{path}:{line_no}: bad header {header}")
                reader = True
                continue
            row = next(csv.reader([raw]))
            if not row:
                continue
            try:
                t = float(row[0])
                kind = row[1]
                idx = int(row[2])
                x1, x2 = float(row[3]), float(row[4])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad trajectory row ({exc})") from exc
            if kind not in ("herder", "target"):
                raise ValueError(f"{path}:{line_no}: unknown agent kind {kind!r}")
            if t not in frames:
                frames[t] = {"herder": [], "target": []}
                order.append(t)
            frames[t][kind].append((idx, (x1, x2)))
    out = []
    for t in order:
        frame = frames[t]
        herders = np.array([p for _, p in sorted(frame["herder"])]).reshape(-1, 2)
        targets = np.array([p for _, p in sorted(frame["target"])]).reshape(-1, 2)
        out.append((t, herders, targets))
    return out


def write_metrics(path: str | Path, times, chi, n_inside, herder_error_l2,
                  meta: dict | None = None):
    with open(path, "w", newline="") as fh:
        for line in metadata_lines(meta or {}):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "chi", "n_inside", "herder_error_l2"])
        for t, c, n, e in zip(times, chi, n_inside, herder_error_l2):
            writer.writerow([FLOAT_FMT % t, FLOAT_FMT % c, int(n),
                             "" if np.isnan(e) else FLOAT_FMT % e])


def write_decay(path: str | Path, times, columns: dict, meta: dict | None = None):
    """Line-delimited decay records: time plus named series columns."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        for line in metadata_lines(meta or {}):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for i, t in enumerate(times):
            writer.writerow([FLOAT_FMT % t] + [FLOAT_FMT % columns[n][i] for n in names])


def write_sweep_csv(path: str | Path, k_values, d_values, matrix,
                    meta: dict | None = None):
    """Feasibility sweep: first row holds k values, first column D values."""
    with open(path, "w", newline="") as fh:
        for line in metadata_lines(meta or {}):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["D\\k"] + [FLOAT_FMT % k for k in k_values])
        for i, d in enumerate(d_values):
            writer.writerow([FLOAT_FMT % d] + [FLOAT_FMT % v for v in matrix[i]])
