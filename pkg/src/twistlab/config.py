"""Experiment configuration: a line-oriented ``key = <JSON value>`` format.

Blank lines and lines starting with ``#`` are ignored.  Every key must be
known; values are JSON literals.  ``serialize`` writes the canonical form
(sorted keys, all defaults filled) so that parse(serialize(c)) == c.

Example::

    family = "standard"
    command = "sweep"
    rot = [[0, 1]]
    epsilon_range = {"min": 0.001, "max": 0.1, "num": 21, "scale": "log"}
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from functools import reduce
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError
from .maps import TWO_PI

CONFIG_SCHEMA = "twistlab-config/1"

FAMILIES = ("shear", "integrable", "standard")
COMMANDS = ("validate", "orbit", "torus", "melnikov", "sweep", "arithmetic-set", "rigidity-scan", "breakdown")

STANDARD_G = [[[1], -1.0 / TWO_PI**2, 0.0]]


@dataclass
class ExperimentConfig:
    family: str
    command: str
    dim: int = 1
    A: Optional[list] = None
    G: list = field(default_factory=list)
    rot: list = field(default_factory=list)
    epsilon: list = field(default_factory=lambda: [0.0])
    epsilon_range: Optional[dict] = None
    resolution: Optional[int] = None
    tol_torus: float = 1e-8
    q_seed: Optional[list] = None
    basis: Optional[list] = None
    intervals: Optional[list] = None
    max_denominator: int = 8
    continue_to: Optional[float] = None
    continue_steps: int = 10
    n_samples: int = 10000
    seed: int = 0
    threads: int = 1
    out: str = "out"
    plot: bool = True
    schema: str = CONFIG_SCHEMA

    def epsilon_grid(self) -> list:
        """Explicit epsilon list followed by the range, if any, in increasing order and without duplicates."""
        eps = list(self.epsilon)
        r = self.epsilon_range
        if r:
            if r["scale"] == "log":
                vals = np.logspace(math.log10(r["min"]), math.log10(r["max"]), r["num"])
            else:
                vals = np.linspace(r["min"], r["max"], r["num"])
            vals = [float(v) for v in vals]
            if r.get("symmetric"):
                vals = [-v for v in reversed(vals)] + vals
            eps += vals
        out = []
        for e in eps:
            if e not in out:
                out.append(e)
        return out


KEYS = {f.name for f in fields(ExperimentConfig)}
REQUIRED = ("family", "command")


def _coprime(r) -> bool:
    return reduce(math.gcd, [int(x) for x in r], 0) == 1


def _normalize(raw: dict, lines: dict) -> ExperimentConfig:
    def bad(msg, key):
        return ValidationError(f"{msg} (line {lines[key]})" if key in lines else msg, key=key)

    for key in REQUIRED:
        if key not in raw:
            raise ParseError("missing required key", key=key)
    family, command = raw["family"], raw["command"]
    if family not in FAMILIES:
        raise bad(f"unknown family {family!r}; expected one of {FAMILIES}", "family")
    if command not in COMMANDS:
        raise bad(f"unknown command {command!r}; expected one of {COMMANDS}", "command")

    cfg = ExperimentConfig(family=family, command=command)
    for key, value in raw.items():
        setattr(cfg, key, value)

    # epsilon range errors are malformed input, not inconsistent input
    r = cfg.epsilon_range
    if r is not None:
        if not isinstance(r, dict) or not {"min", "max", "num"} <= set(r):
            raise ParseError("epsilon_range needs min, max and num", line=lines.get("epsilon_range"), key="epsilon_range")
        extra = set(r) - {"min", "max", "num", "scale", "symmetric"}
        if extra:
            raise ParseError(f"unknown epsilon_range fields {sorted(extra)}", line=lines.get("epsilon_range"), key="epsilon_range")
        r = {"min": float(r["min"]), "max": float(r["max"]), "num": r["num"], "scale": r.get("scale", "log"), "symmetric": bool(r.get("symmetric", False))}
        if r["min"] > r["max"]:
            raise ParseError("epsilon_range min > max", line=lines.get("epsilon_range"), key="epsilon_range")
        if not isinstance(r["num"], int) or r["num"] < 1:
            raise ParseError("epsilon_range num must be a positive integer", line=lines.get("epsilon_range"), key="epsilon_range")
        if r["scale"] not in ("log", "linear"):
            raise ParseError("epsilon_range scale must be 'log' or 'linear'", line=lines.get("epsilon_range"), key="epsilon_range")
        if r["scale"] == "log" and r["min"] <= 0:
            raise ParseError("log-spaced epsilon_range needs min > 0", line=lines.get("epsilon_range"), key="epsilon_range")
        cfg.epsilon_range = r

    # dimension
    dims = set()
    if "dim" in raw:
        dims.add(int(raw["dim"]))
    if cfg.A is not None:
        dims.add(len(cfg.A))
    for term in cfg.G:
        dims.add(len(term[0]))
    rots = cfg.rot
    if rots and not isinstance(rots[0], list):
        rots = [rots]
    for r in rots:
        dims.add(len(r) - 1)
    if len(dims) > 1:
        raise bad(f"inconsistent dimensions {sorted(dims)} across A, G and rot", "dim")
    cfg.dim = dims.pop() if dims else 1
    if cfg.dim < 1:
        raise bad("dim must be positive", "dim")
    d = cfg.dim

    if family == "shear":
        if cfg.A is not None and not np.allclose(cfg.A, np.eye(d)):
            raise bad("the shear family has A = identity", "A")
        cfg.A = np.eye(d).tolist()
    elif cfg.A is None:
        if family == "integrable":
            raise bad("the integrable family needs a matrix A", "A")
        cfg.A = np.eye(d).tolist()
    A = np.asarray(cfg.A, dtype=float)
    if A.shape != (d, d) or not np.allclose(A, A.T) or np.linalg.eigvalsh(A).min() <= 0:
        raise bad("A must be a symmetric positive definite d x d matrix", "A")
    cfg.A = [[float(x) for x in row] for row in A]

    if family == "standard" and not cfg.G:
        cfg.G = [list(t) for t in STANDARD_G] if d == 1 else [[[1] + [0] * (d - 1), STANDARD_G[0][1], 0.0]]
    if family != "standard" and cfg.G:
        raise bad(f"family {family!r} takes no potential G", "G")
    terms = []
    for t in cfg.G:
        if len(t) != 3 or len(t[0]) != d:
            raise bad("G terms are [nu, coefficient, phase] with nu of length d", "G")
        terms.append([[int(k) for k in t[0]], float(t[1]), float(t[2])])
    cfg.G = terms

    norm_rots = []
    for r in rots:
        if len(r) != d + 1 or any(not isinstance(x, int) for x in r) or r[-1] < 1:
            raise bad(f"rotation vector {r} must be d integers followed by n >= 1", "rot")
        if not _coprime(r):
            raise bad(f"rotation vector {r} is not coprime (gcd {reduce(math.gcd, r, 0)})", "rot")
        norm_rots.append([int(x) for x in r])
    cfg.rot = norm_rots

    cfg.epsilon = [float(e) for e in cfg.epsilon]
    if cfg.resolution is None:
        cfg.resolution = {1: 64, 2: 32}.get(d, 16)
    if not isinstance(cfg.resolution, int) or cfg.resolution < 2:
        raise bad("resolution must be an integer >= 2", "resolution")
    cfg.tol_torus = float(cfg.tol_torus)
    if cfg.tol_torus <= 0:
        raise bad("tol_torus must be positive", "tol_torus")
    if cfg.q_seed is None:
        cfg.q_seed = [0.0] * d
    cfg.q_seed = [float(x) for x in cfg.q_seed]
    if len(cfg.q_seed) != d:
        raise bad("q_seed must have length d", "q_seed")

    if cfg.basis is not None or cfg.intervals is not None:
        if cfg.basis is None or cfg.intervals is None:
            raise bad("basis and intervals must be given together", "basis")
        try:
            cfg.basis = [[str(Fraction(str(x))) for x in row] for row in cfg.basis]
            cfg.intervals = [[str(Fraction(str(x))) for x in iv] for iv in cfg.intervals]
        except (ValueError, ZeroDivisionError) as exc:
            raise bad(f"basis/intervals entries must be rationals: {exc}", "basis") from exc
        if len(cfg.basis) != len(cfg.intervals) or any(len(iv) != 2 for iv in cfg.intervals):
            raise bad("one (a, b) interval per basis vector", "intervals")
    if cfg.continue_to is not None:
        cfg.continue_to = float(cfg.continue_to)
    for key in ("max_denominator", "continue_steps", "n_samples", "threads"):
        if not isinstance(getattr(cfg, key), int) or getattr(cfg, key) < 1:
            raise bad("must be a positive integer", key)
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise bad("seed must be a non-negative integer", "seed")
    if cfg.schema != CONFIG_SCHEMA:
        raise bad(f"unsupported schema {cfg.schema!r}", "schema")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    lines = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ParseError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in s.split("=", 1))
        if key not in KEYS:
            raise ParseError("unknown key", line=lineno, key=key)
        if key in raw:
            raise ParseError("duplicate key", line=lineno, key=key)
        try:
            raw[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid value: {exc.msg}", line=lineno, key=key) from exc
        lines[key] = lineno
    return _normalize(raw, lines)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def serialize(cfg: ExperimentConfig) -> str:
    d = config_dict(cfg)
    return "".join(f"{k} = {json.dumps(d[k], sort_keys=True)}\n" for k in sorted(d))
