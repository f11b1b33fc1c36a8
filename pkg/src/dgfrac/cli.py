"""Command-line entry point.

Exit codes: 0 success, 1 failed verification (``check``), 2 invalid
configuration, 3 non-convergence under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .artifacts import (
    crack_svg,
    dump_json,
    energies_csv,
    read_history,
    sample_indices,
    write_history,
)
from .config import Config, ConfigError, load_config
from .evolution import BalanceViolation, Schedule, check_energy_balance, convergence_study, evolve, uniform_bound
from .mesh import MeshError, build_regular, check_regularity, mesh_to_dict
from .minimizer import (
    InstanceTooLarge,
    NonConvergence,
    brute_force_oracle,
    incremental_minimize,
    verify_unilateral_minimality,
)
from .studies import covering_constants, inflation_study, random_corpus

log = logging.getLogger("dgfrac")

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NONCONV = 0, 1, 2, 3


def _out_dir(cfg: Config, override: str | None) -> Path:
    d = override or os.environ.get("DGFRAC_OUT") or cfg.out_dir
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1))


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _need_schedule(cfg: Config):
    if cfg.schedule is None:
        raise ConfigError("schedule: required for this subcommand")
    return cfg.schedule


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_mesh(cfg: Config, out: Path) -> int:
    R = build_regular(cfg.domain, cfg.mesh)
    rep = check_regularity(R)
    dump_json(mesh_to_dict(R), out / "mesh.json")
    _emit({"n_points": R.n_points, "n_triangles": R.n_triangles, "n_edges": R.n_edges, **rep.to_dict()})
    return EXIT_OK


def _write_run(hist, cfg: Config, out: Path) -> None:
    write_history(hist, out / "history.json")
    if cfg.csv:
        (out / "energies.csv").write_text(energies_csv(hist))
    if cfg.svg and hist.steps:
        for i in sample_indices(hist):
            (out / f"crack_{i:04d}.svg").write_text(crack_svg(hist, i))


def cmd_evolve(cfg: Config, out: Path) -> int:
    sched = _need_schedule(cfg)
    R = build_regular(cfg.domain, cfg.mesh)

    def progress(rec):
        log.info("t=%.4f bulk=%.6g surface=%.6g total=%.6g", rec.t, rec.bulk, rec.surface, rec.total)

    try:
        hist = evolve(R, cfg.a, sched, cfg.options, strict=cfg.strict, progress=progress)
    except NonConvergence as exc:
        partial = getattr(exc, "history", None)
        if partial is not None:
            _write_run(partial, cfg, out)
        log.error("non-convergence: %s", exc)
        return EXIT_NONCONV
    _write_run(hist, cfg, out)
    bal = check_energy_balance(hist)
    _emit(
        {
            "steps": len(hist.steps),
            "final_total": hist.steps[-1].total,
            "final_surface": hist.steps[-1].surface,
            "o_delta": hist.o_delta,
            "balance_max_residual": bal["max_residual"],
            "balance_violations": bal["violations"],
        }
    )
    return EXIT_OK


def cmd_oracle(cfg: Config, out: Path) -> int:
    """Certified minimum of one incremental step, next to the local-search value.

    Earlier steps (which fix the crack history) are solved by local search.
    """
    sched = _need_schedule(cfg)
    sec = cfg.section("oracle")
    R = build_regular(cfg.domain, cfg.mesh)
    t_target = float(sec.get("t", 1.0))
    times = sched.times
    i = int(np.argmin(np.abs(times - t_target)))
    gamma = np.zeros((0, 4))
    init = None
    for k in range(i):
        g = sched.data(R, times[k])
        res = incremental_minimize(R, cfg.a, g, gamma, replace(cfg.options, rng_seed=cfg.seed + k), init=init)
        gamma = np.vstack([gamma, res.crack.as_array()])
        init = (res.broken, res.t)
    g = sched.data(R, times[i])
    try:
        orc = brute_force_oracle(
            R, cfg.a, cfg.options.grid(cfg.a), g, gamma,
            max_binaries=int(sec.get("max_binaries", 20)), opts=cfg.options,
        )
    except InstanceTooLarge as exc:
        raise ConfigError(f"oracle: {exc}") from exc
    loc = incremental_minimize(
        R, cfg.a, g, gamma, replace(cfg.options, rng_seed=cfg.seed + i), init=init, strict=cfg.strict
    )
    rep = {
        "t": float(times[i]),
        "oracle_total": orc.energy.total,
        "oracle_certified": orc.is_certified_global,
        "local_search_total": loc.energy.total,
        "match": bool(abs(orc.energy.total - loc.energy.total) <= 1e-6),
        "oracle": orc.to_dict(),
    }
    dump_json(rep, out / "oracle.json")
    _emit({k: v for k, v in rep.items() if k != "oracle"})
    return EXIT_OK


def cmd_adapt(cfg: Config, out: Path) -> int:
    sec = cfg.section("adapt")
    v = np.asarray(cfg.domain.vertices)
    if not (v.min() == 0.0 and v.max() == 1.0 and len(v) == 4 and cfg.domain.area == 1.0):
        raise ConfigError("adapt: the segment corpus is defined on the unit square domain")
    a_values = [float(a) for a in sec.get("a_values", (0.45, 0.25, 0.05))]
    bad = [a for a in a_values if not 0 < a < 0.5]
    if bad:
        raise ConfigError(f"adapt.a_values: a must lie in (0, 0.5), got {bad}")
    corpus = random_corpus(
        int(sec.get("corpus_size", 200)), int(sec.get("corpus_seed", 0)),
        min_length=float(sec.get("min_length", 0.4)),
    )
    R = build_regular(cfg.domain, cfg.mesh)
    rows = inflation_study(R, corpus, a_values)
    _write_rows(out / "adapt.csv", rows)
    const = covering_constants(R, corpus)
    dump_json({"inflation": rows, "covering": const}, out / "adapt.json")
    _emit({"inflation": rows, "covering": const})
    return EXIT_OK


def cmd_converge(cfg: Config, out: Path) -> int:
    sched = _need_schedule(cfg)
    levels = [tuple(float(x) for x in lv) for lv in cfg.section("converge").get("levels", [])]
    if not levels:
        raise ConfigError("converge.levels: at least one (eps, a, delta) level is required")
    for eps, a, delta in levels:
        if not (eps > 0 and 0 < a < 0.5 and delta > 0):
            raise ConfigError(f"converge.levels: need eps > 0, a in (0, 0.5), delta > 0; got {(eps, a, delta)}")
    study = convergence_study(
        cfg.domain,
        lambda d: Schedule(sched.family, d, sched.params),
        levels,
        cfg.options,
        mesh_c=(cfg.mesh.c1, cfg.mesh.c2),
    )
    _write_rows(out / "converge.csv", study["rows"])
    summary = {k: study[k] for k in ("E1", "E1_changes", "initiation")}
    dump_json(summary, out / "converge.json")
    _emit(summary)
    return EXIT_OK


def cmd_check(cfg: Config, out: Path) -> int:
    """Re-verify a saved history without re-simulating."""
    sec = cfg.section("check")
    path = Path(sec.get("history", out / "history.json"))
    try:
        hist, raw = read_history(path)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"check.history: cannot load {path}: {exc}") from exc
    stored = np.array([[s["energies"][k] for k in ("bulk", "surface", "total")] for s in raw["steps"]])
    recomputed = np.array([[s.bulk, s.surface, s.total] for s in hist.steps])
    roundtrip = float(np.abs(stored - recomputed).max()) if stored.size else 0.0
    bal = check_energy_balance(hist)
    trials = int(sec.get("trials", 100))
    viol = 0
    worst = math.inf
    for s in hist.steps:
        gp = hist.gamma_at(s.index - 1) if s.index else None
        rep = verify_unilateral_minimality(
            s.u, hist.schedule.data(hist.R, s.t), gp, trials=trials, rng_seed=cfg.seed + s.index,
            t_grid=cfg.options.grid(hist.a),
        )
        viol += rep["violations"]
        worst = min(worst, rep["worst_gap"])
    ub = uniform_bound(hist)
    report = {
        "roundtrip_max_error": roundtrip,
        "balance_max_residual": bal["max_residual"],
        "balance_violations": bal["violations"],
        "minimality_violations": viol,
        "minimality_worst_gap": worst,
        "uniform_bound": ub,
    }
    dump_json(report, out / "check.json")
    _emit(report)
    ok = roundtrip <= 1e-12 and bal["violations"] == 0 and viol == 0 and ub["ok"]
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {
    "mesh": cmd_mesh,
    "evolve": cmd_evolve,
    "oracle": cmd_oracle,
    "adapt": cmd_adapt,
    "converge": cmd_converge,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgfrac", description="Discontinuous finite element quasi-static fracture")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else name)
        sp.add_argument("--config", required=True, help="JSON configuration file")
        sp.add_argument("--out", default=None, help="output directory (overrides config and DGFRAC_OUT)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--strict", action="store_true", default=None, help="fail with exit 3 on non-convergence")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, seed=args.seed, strict=args.strict)
        out = _out_dir(cfg, args.out)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonConvergence as exc:
        print(f"error: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except BalanceViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
