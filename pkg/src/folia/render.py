"""Static SVG pictures: rank strata, leaf paths and bisection traces."""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .flows import FiniteEscape, StepLimit, compile_field, integrate  # noqa: E402
from .geometry import SingularSubalgebroid  # noqa: E402
from .graph import LeafPath, leaf_fields  # noqa: E402
from .pointwise import fiber_report  # noqa: E402

plt.rcParams["svg.hashsalt"] = "folia"


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def strata_svg(B: SingularSubalgebroid, xs: Sequence, ys: Sequence | None = None) -> str:
    """Heat map of the fiber dimension over a rational grid (1 or 2 variables)."""
    if B.nvars not in (1, 2):
        raise ValueError("strata pictures need one or two base variables")
    ys = [0] if B.nvars == 1 else list(ys if ys is not None else xs)
    grid = np.array(
        [[fiber_report(B, (x,) if B.nvars == 1 else (x, y), structure=False).dim_fiber for x in xs] for y in ys]
    )
    fig, ax = plt.subplots(figsize=(5, 4 if B.nvars == 2 else 1.6))
    im = ax.imshow(grid, origin="lower", cmap="viridis", aspect="auto",
                   extent=(float(xs[0]), float(xs[-1]), float(ys[0]), float(ys[-1])) if len(ys) > 1 else None)
    fig.colorbar(im, ax=ax, label="fiber dimension")
    ax.set_title(f"rank strata of {B.name or 'module'}")
    return _svg(fig)


def _polyline(fields, start, segments, n: int = 20):
    pts = [np.asarray(start, dtype=float)]
    for s in segments:
        if not s.duration:
            continue
        marks = [s.duration * (i + 1) / n for i in range(n - 1)]
        f = (lambda y, f=fields[s.gen], sg=s.sign: sg * f(y))
        traj = integrate(f, pts[-1], s.duration, checkpoints=marks)
        pts.extend(traj.states[1:])
    return np.array(pts)


def leaf_svg(B: SingularSubalgebroid, paths: Sequence[LeafPath]) -> str:
    fields = leaf_fields(B)
    fig, ax = plt.subplots(figsize=(5, 5))
    for path in paths:
        pts = _polyline(fields, path.start, path.segments)
        if pts.shape[1] == 1:
            pts = np.hstack([pts, np.zeros_like(pts)])
        ax.plot(pts[:, 0], pts[:, 1], "-", lw=1)
        ax.plot(*pts[0, :2], "o", ms=4)
        ax.plot(*pts[-1, :2], "s", ms=4)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title("leaf paths")
    return _svg(fig)


def traces_svg(B: SingularSubalgebroid, starts: Sequence, t_max: float = 1.0, n: int = 60) -> str:
    """Orbits ``lam -> t(b_lam(x))`` of each generator's one-parameter group."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for g in B.generators if B.ambient.kind == "tangent" else []:
        f = compile_field(g)
        for x in starts:
            x = np.asarray(x, dtype=float)
            marks = [t_max * (i + 1) / n for i in range(n - 1)]
            try:
                traj = integrate(f, x, t_max, checkpoints=marks)
            except (FiniteEscape, StepLimit):
                continue
            pts = np.array(traj.states)
            if pts.shape[1] == 1:
                pts = np.hstack([pts, np.zeros_like(pts)])
            ax.plot(pts[:, 0], pts[:, 1], lw=1)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title("one-parameter bisection traces")
    return _svg(fig)
