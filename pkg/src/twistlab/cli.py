"""Batch front end: ``twistlab <command> --config FILE --out DIR``.

Exit codes: 0 success, 1 configuration error, 2 when any solver reported
NonConvergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .action import RotationVector, melnikov_potential, subharmonic_solve
from .arithmetic import ArithmeticSetQuery, arithmetic_set, is_killed
from .config import COMMANDS, ExperimentConfig, config_dict, load_config, parse_config, serialize
from .errors import NonConvergence, ParseError, TwistlabError, ValidationError
from .maps import (
    PerturbedFamily,
    TrigPotential,
    quadratic_map,
    shear,
    symplecticity_residual,
    tangent_map,
    validate_spec,
)
from .rigidity import breakdown_bound, epsilon_sweep, green_form_at_witness, rigidity_scan
from .torus import (
    BreakupReport,
    assemble_torus,
    continue_radial_graph,
    grid_points,
    monodromy_report,
    solve_periodic_orbit,
    verify_torus,
)

REPORT_SCHEMA = "twistlab-report/1"


def build_family(cfg: ExperimentConfig):
    """The map (or perturbed family at eps = 0) declared by a configuration."""
    if cfg.family == "shear":
        base = shear(cfg.dim)
    else:
        base = quadratic_map(cfg.A, name=cfg.family)
    if cfg.family != "standard":
        return base
    nus = [t[0] for t in cfg.G]
    G = TrigPotential(nus, [t[1] for t in cfg.G], [t[2] for t in cfg.G])
    return PerturbedFamily(base, G, 0.0)


def _at(family, eps):
    if isinstance(family, PerturbedFamily):
        return family.with_epsilon(eps)
    return family


def _rotations(cfg):
    return [RotationVector(r[:-1], r[-1]) for r in cfg.rot]


def _clean(x):
    """Make a payload JSON-safe: numpy to builtins, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


@dataclass
class RunReport:
    config: dict
    command: str
    payload: dict
    residuals: list
    exit_code: int
    wall_clock: float
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "version": __version__,
            "config": self.config,
            "command": self.command,
            "payload": self.payload,
            "residuals": self.residuals,
            "exit_code": self.exit_code,
            "wall_clock": self.wall_clock,
            "files": self.files,
        }

    def payload_bytes(self) -> bytes:
        return json.dumps({"payload": self.payload, "residuals": self.residuals}, sort_keys=True).encode()


class _Run:
    def __init__(self, cfg, out_dir, write):
        self.cfg = cfg
        self.out_dir = out_dir
        self.write = write
        self.residuals = []
        self.nonconvergence = 0
        self.files = []

    def residual(self, item, name, value):
        self.residuals.append({"item": item, "quantity": name, "value": value})

    def csv(self, name, header, rows):
        if not (self.write and self.cfg.plot):
            return
        path = os.path.join(self.out_dir, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
        self.files.append(name)

    def text(self, name, content):
        if not self.write:
            return
        with open(os.path.join(self.out_dir, name), "w") as fh:
            fh.write(content)
        self.files.append(name)

    # commands ------------------------------------------------------------

    def validate(self, fam):
        cfg = self.cfg
        out = {}
        for eps in cfg.epsilon_grid():
            spec = _at(fam, eps)
            rep = validate_spec(spec, n_samples=cfg.n_samples, rng=cfg.seed)
            rng = np.random.default_rng(cfg.seed)
            sym = 0.0
            for _ in range(200):
                x = (rng.random(cfg.dim), rng.uniform(-2, 2, cfg.dim))
                sym = max(sym, symplecticity_residual(tangent_map(spec, x)))
            d = rep.to_dict()
            d["symplectic_residual"] = sym
            out[repr(eps)] = d
            self.residual(f"eps={eps!r}", "derivative", rep.derivative_residual)
            self.residual(f"eps={eps!r}", "symplectic", sym)
        return {"epsilon": out}

    def orbit(self, fam):
        cfg = self.cfg
        out = []
        for rot in _rotations(cfg):
            for eps in cfg.epsilon_grid():
                entry = {"rot": rot.to_list(), "epsilon": eps}
                try:
                    orb = solve_periodic_orbit(_at(fam, eps), rot, cfg.q_seed, rng=cfg.seed)
                except NonConvergence as exc:
                    self.nonconvergence += 1
                    entry["error"] = str(exc)
                    out.append(entry)
                    continue
                entry["orbit"] = orb.to_dict()
                entry["monodromy"] = monodromy_report(_at(fam, eps), orb).to_dict()
                self.residual(f"{rot} eps={eps!r}", "orbit", orb.residual)
                out.append(entry)
        return {"orbits": out}

    def torus(self, fam):
        cfg = self.cfg
        out = []
        for rot in _rotations(cfg):
            for k, eps in enumerate(cfg.epsilon_grid()):
                spec = _at(fam, eps)
                res = assemble_torus(spec, rot, cfg.resolution, cfg.tol_torus)
                entry = {"rot": rot.to_list(), "epsilon": eps}
                tag = "_".join(str(x) for x in rot.to_list()) + f"_{k}"
                pts = grid_points(res.N, rot.dim).reshape(-1, rot.dim)
                self.csv(
                    f"torus_{tag}.csv",
                    [f"q{i + 1}" for i in range(rot.dim)] + ["W"] + [f"defect{i + 1}" for i in range(rot.dim)],
                    np.column_stack([pts, res.W.reshape(-1), _defect_grid(spec, res).reshape(-1, rot.dim)]),
                )
                if isinstance(res, BreakupReport):
                    entry["result"] = "breakup"
                    entry["breakup"] = res.to_dict()
                    if res.failures:
                        self.nonconvergence += len(res.failures)
                    self.residual(f"{rot} eps={eps!r}", "defect_sup", res.defect_sup)
                else:
                    verdict = verify_torus(spec, res, cfg.tol_torus)
                    entry["result"] = "torus"
                    entry["c"] = res.c.tolist()
                    entry["verdict"] = verdict.to_dict()
                    entry["monodromy"] = monodromy_report(spec, (pts[0], res.gamma.reshape(-1, rot.dim)[0]), rot).to_dict()
                    self.text(f"torus_{tag}.json", res.to_json())
                    self.residual(f"{rot} eps={eps!r}", "periodicity", verdict.periodicity)
                    if cfg.continue_to is not None and isinstance(fam, PerturbedFamily):
                        entry["continuation"] = self._continue(fam, eps, rot, res)
                out.append(entry)
        return {"tori": out}

    def _continue(self, fam, eps, rot, torus):
        try:
            graphs = continue_radial_graph(fam.with_epsilon(eps), rot, torus, self.cfg.continue_to, self.cfg.continue_steps)
        except TwistlabError as exc:
            if isinstance(exc, NonConvergence):
                self.nonconvergence += 1
            return {"error": f"{type(exc).__name__}: {exc}"}
        self.csv(
            "continuation_" + "_".join(str(x) for x in rot.to_list()) + ".csv",
            ["epsilon", "defect_sup", "radial_residual", "twist_det_min"],
            [[g.epsilon, g.defect_sup, g.radial_residual, g.twist_det_min] for g in graphs],
        )
        return [g.to_dict() for g in graphs]

    def melnikov(self, fam):
        cfg = self.cfg
        if not isinstance(fam, PerturbedFamily):
            raise ValidationError("melnikov needs the standard family (a potential G)", key="family")
        eps_list = [e for e in cfg.epsilon_grid() if e != 0.0]
        eps = eps_list[0] if eps_list else None
        out = []
        for rot in _rotations(cfg):
            pts = grid_points(cfg.resolution, rot.dim)
            A1 = melnikov_potential(fam, rot, pts).reshape(-1)
            flat = pts.reshape(-1, rot.dim)
            W = np.full(len(flat), np.nan)
            D = np.full((len(flat), rot.dim), np.nan)
            entry = {
                "rot": rot.to_list(),
                "A1_min": float(A1.min()),
                "A1_max": float(A1.max()),
                "A1_range": float(A1.max() - A1.min()),
                "surviving_G_modes": [list(nu) for nu in sorted(fam.G_modes) if any(nu) and is_killed(rot, nu)],
            }
            if eps is not None:
                spec = fam.with_epsilon(eps)
                for i, q in enumerate(flat):
                    try:
                        W[i], D[i] = _subharmonic(spec, rot, q)
                    except NonConvergence:
                        self.nonconvergence += 1
                W0 = np.array([_subharmonic(fam.with_epsilon(0.0), rot, q)[0] for q in flat])
                err = float(np.nanmax(np.abs((W - W0) / eps - A1)))
                entry.update({"epsilon": eps, "W_oscillation": float(np.nanmax(W) - np.nanmin(W)), "first_order_error": err})
                self.residual(f"{rot} eps={eps!r}", "first_order_error", err)
            self.csv(
                "melnikov_" + "_".join(str(x) for x in rot.to_list()) + ".csv",
                [f"q{i + 1}" for i in range(rot.dim)] + ["W"] + [f"defect{i + 1}" for i in range(rot.dim)] + ["A1"],
                np.column_stack([flat, W, D, A1]),
            )
            out.append(entry)
        return {"melnikov": out}

    def sweep(self, fam):
        cfg = self.cfg
        if not isinstance(fam, PerturbedFamily):
            fam = PerturbedFamily(fam, TrigPotential(np.zeros((1, cfg.dim), dtype=int), [0.0]), 0.0)
        out = []
        for rot in _rotations(cfg):
            res = epsilon_sweep(fam, rot, cfg.epsilon_grid(), cfg.resolution, cfg.tol_torus, workers=cfg.threads)
            self.nonconvergence += sum(res.failures.values())
            out.append(res.to_dict())
            self.csv(
                "sweep_" + "_".join(str(x) for x in rot.to_list()) + ".csv",
                ["epsilon", "defect_sup", "oscillation"],
                [[e, r, o] for e, r, o in zip(res.epsilons, res.defect_sup, res.oscillation)],
            )
            for e, r in zip(res.epsilons, res.defect_sup):
                self.residual(f"{rot} eps={e!r}", "defect_sup", r)
        return {"sweeps": out}

    def _query(self):
        cfg = self.cfg
        if cfg.basis is None:
            raise ValidationError("basis and intervals are required", key="basis")
        return ArithmeticSetQuery(cfg.basis, cfg.intervals)

    def arithmetic_set(self, fam):
        res = arithmetic_set(self._query())
        return {"arithmetic_set": res.to_dict()}

    def rigidity_scan(self, fam):
        cfg = self.cfg
        if not isinstance(fam, PerturbedFamily):
            raise ValidationError("rigidity-scan needs a potential G", key="G")
        queries = [self._query()] if cfg.basis is not None else []
        rep = rigidity_scan(fam.G, rots=_rotations(cfg), queries=queries, max_denominator=cfg.max_denominator)
        return {"rigidity": rep.to_dict()}

    def breakdown(self, fam):
        cfg = self.cfg
        if not isinstance(fam, PerturbedFamily):
            raise ValidationError("breakdown needs a potential G", key="G")
        b = breakdown_bound(fam)
        eps = 1.25 * b.Lambda
        out = {"bound": b.to_dict(), "test_epsilon": eps, "green_form": green_form_at_witness(fam, b, eps, rng=cfg.seed)}
        checks = []
        for rot in _rotations(cfg):
            res = assemble_torus(fam.with_epsilon(eps), rot, cfg.resolution, cfg.tol_torus)
            checks.append({"rot": rot.to_list(), "result": "breakup" if isinstance(res, BreakupReport) else "torus", "defect_sup": res.defect_sup})
        out["assembly"] = checks
        return out


def _subharmonic(spec, rot, q):
    sp = subharmonic_solve(spec, rot, q)
    return sp.W, sp.defect


def _defect_grid(spec, res):
    if isinstance(res, BreakupReport):
        return res.defect
    return np.zeros_like(res.gamma)


def run(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Execute the configured command; writes report.json (and CSV columns) when out_dir is given."""
    write = out_dir is not None
    if write:
        os.makedirs(out_dir, exist_ok=True)
    runner = _Run(cfg, out_dir, write)
    fam = build_family(cfg)
    t0 = time.perf_counter()
    payload = getattr(runner, cfg.command.replace("-", "_"))(fam)
    wall = time.perf_counter() - t0
    report = RunReport(
        config=_clean(config_dict(cfg)),
        command=cfg.command,
        payload=_clean(payload),
        residuals=_clean(runner.residuals),
        exit_code=2 if runner.nonconvergence else 0,
        wall_clock=wall,
        files=runner.files,
    )
    if write:
        report.files.append("report.json")
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twistlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"twistlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--out", help="output directory (default: the config's 'out' key)")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--threads", type=int, help="worker pool size")
        p.add_argument("--tol-torus", type=float, help="defect threshold separating persistence from breakup")
    sub.add_parser("canonical", help="print the canonical form of a config").add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "canonical":
            sys.stdout.write(serialize(cfg))
            return 0
        overrides = {"command": args.command}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.tol_torus is not None:
            overrides["tol_torus"] = args.tol_torus
        cfg = parse_config(serialize(replace(cfg, **overrides)))
        report = run(cfg, args.out or cfg.out)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"twistlab: {exc}", file=sys.stderr)
        return 1
    print(f"{cfg.command}: exit {report.exit_code}, {len(report.files)} files in {args.out or cfg.out}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
