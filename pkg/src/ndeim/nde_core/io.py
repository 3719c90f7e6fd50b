"""CSV export and import of trajectories."""

from __future__ import annotations

import io

import numpy as np

from .problem import Trajectory


def format_float(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path_or_buf, header, rows):
    """Write rows of floats with 17 significant digits and ``\\n`` line ends."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
    return text


def trajectory_to_csv(traj: Trajectory, path_or_buf=None) -> str:
    header = ["t"] + [f"x{i + 1}" for i in range(traj.dim)]
    rows = np.column_stack([traj.t_grid, traj.values])
    buf = io.StringIO() if path_or_buf is None else path_or_buf
    return write_csv(buf, header, rows)


def trajectory_from_csv(path_or_text, r: float, anchor=0.0) -> Trajectory:
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    if header[0] != "t" or any(h != f"x{i + 1}" for i, h in enumerate(header[1:])):
        raise ValueError(f"unexpected trajectory header {lines[0]!r}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    t = data[:, 0]
    step = float((t[-1] - t[0]) / (len(t) - 1)) if len(t) > 1 else 0.0
    return Trajectory(t, data[:, 1:], step, r, anchor)
