"""History JSON, energy CSV and SVG crack snapshots."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .evolution import CrackSet, History, Schedule, StepRecord, initiation_time
from .femspace import bulk_energy, displacement_from_dict, displacement_to_dict
from .mesh import mesh_from_dict, mesh_to_dict

__all__ = [
    "history_to_dict",
    "history_from_dict",
    "dump_json",
    "write_history",
    "read_history",
    "energies_csv",
    "crack_svg",
    "sample_indices",
]

CSV_COLUMNS = ("t", "bulk", "surface", "total")


def history_to_dict(hist: History) -> dict:
    R = hist.R
    steps = []
    for s in hist.steps:
        d = displacement_to_dict(s.u)
        steps.append(
            {
                "index": s.index,
                "t": s.t,
                "energies": {
                    "bulk": s.bulk,
                    "surface": s.surface,
                    "surface_new": s.surface_new,
                    "total": s.total,
                },
                "crack_segments": np.asarray(s.crack_step).tolist(),
                "broken_edges": d["broken"],
                "t_map": d["t_map"],
                "corner_values": d["corner_values"],
                "g_sup": s.g_sup,
                "u_sup": s.u_sup,
                "converged": s.converged,
            }
        )
    return {
        "meta": {
            "eps": R.eps,
            "a": hist.a,
            "delta": hist.schedule.delta,
            "seed": hist.seed,
            "domain": R.domain.to_dict() if R.domain is not None else None,
            "c1": R.c1,
            "c2": R.c2,
            "schedule": hist.schedule.to_dict(),
            "complete": hist.complete,
        },
        "mesh": mesh_to_dict(R),
        "steps": steps,
        "o_delta": hist.o_delta,
    }


def history_from_dict(d: dict) -> History:
    """Rebuild a history; energies are recomputed from the stored fields."""
    R = mesh_from_dict(d["mesh"])
    meta = d["meta"]
    a = float(meta["a"])
    sched = Schedule.from_dict(meta["schedule"])
    crack = CrackSet(tol=R.tol_geom)
    steps = []
    for s in d["steps"]:
        u = displacement_from_dict(
            R,
            {
                "a": a,
                "t_map": s["t_map"],
                "corner_values": s["corner_values"],
                "broken": s["broken_edges"],
            },
        )
        rows = np.asarray(s["crack_segments"], dtype=float).reshape(-1, 4)
        crack = crack.union(rows, tag=s["index"])
        steps.append(
            StepRecord(
                int(s["index"]),
                float(s["t"]),
                u,
                rows,
                bulk_energy(u),
                crack.measure,
                float(s["energies"]["surface_new"]),
                float(s["g_sup"]),
                bool(s.get("converged", True)),
            )
        )
    return History(
        R, a, sched, steps, crack, int(meta.get("seed", 0)), float(d["o_delta"]),
        bool(meta.get("complete", True)),
    )


def dump_json(obj, path) -> None:
    """Deterministic JSON (fixed key order, repr floats)."""
    Path(path).write_text(json.dumps(obj, indent=1, allow_nan=True) + "\n")


def write_history(hist: History, path) -> None:
    dump_json(history_to_dict(hist), path)


def read_history(path) -> tuple[History, dict]:
    d = json.loads(Path(path).read_text())
    return history_from_dict(d), d


def energies_csv(hist: History) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in hist.steps:
        w.writerow([repr(s.t), repr(s.bulk), repr(s.surface), repr(s.total)])
    return buf.getvalue()


def sample_indices(hist: History, times=(0.0, 0.25, 0.5, 0.75, 1.0)) -> list[int]:
    """Step indices at the sample times and at crack initiation."""
    ts = set(times)
    t0 = initiation_time(hist)
    if t0 is not None:
        ts.add(t0)
    return sorted({hist.at_time(t).index for t in ts})


def crack_svg(hist: History, index: int, size: int = 800) -> str:
    """SVG of the mesh wireframe with the accumulated crack on top.

    Domain units are scaled to a ``size``-pixel viewport, y axis pointing up.
    """
    R = hist.R
    pts = R.points
    lo = pts.min(axis=0)
    span = float(max((pts.max(axis=0) - lo).max(), 1e-300))
    pad = 10.0
    scale = (size - 2 * pad) / span

    def xy(x, y):
        return pad + (x - lo[0]) * scale, size - pad - (y - lo[1]) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f"<title>{escape(f'step {index}, t = {hist.steps[index].t:.6g}')}</title>",
        '<g stroke="#c8c8c8" stroke-width="0.6" fill="none">',
    ]
    for i, j in R.edges:
        x1, y1 = xy(*pts[i])
        x2, y2 = xy(*pts[j])
        out.append(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}"/>')
    out.append("</g>")
    out.append('<g stroke="#c0392b" stroke-width="3" fill="none" stroke-linecap="round">')
    for row in hist.gamma_at(index):
        x1, y1 = xy(row[0], row[1])
        x2, y2 = xy(row[2], row[3])
        out.append(f'<polyline points="{x1:.3f},{y1:.3f} {x2:.3f},{y2:.3f}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
