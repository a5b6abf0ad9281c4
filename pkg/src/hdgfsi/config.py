"""Run configuration: a flat ``key = value`` text format.

Grammar, one entry per line::

    # comment                  (also allowed after a value)
    key = value                scalar: integer, float, fraction such as 1/8, or word
    key = v1, v2, v3           list

Blank lines are ignored, keys may appear once, unknown keys are errors.

Keys
----
problem         example1_L1 | example1_L2 | example2 | exactness | custom
k, ks           polynomial degree (single run) or degree list (h and p studies)
h, hs           nominal mesh size or mesh-size list
mesh            path of a mesh file; replaces the generated mesh (custom problems)
T               final time (defaults to the problem's own)
L | dt | dt_c   number of steps, step size, or constant c of dt = c h^((k+2)/2);
                at most one, dt_c = 0.1 when none is given
dts             step sizes of a dt study
lam_f           override of the fluid Lame coefficient
solver, tol     direct | iterative, and the iterative tolerance
init            consistent | projected
output          output directory (created if missing)
probes          probe samples along each probe line (example2)
p_max, t_max    inlet pulse amplitude and duration (example2)
min_rate_sigma, min_rate_u, max_rate_sigma, max_rate_u, min_abs_r
                acceptance thresholds checked by the convergence command; in h
                studies the rate bounds are offsets from k (min_rate_u = 1.7 asks
                for a mean velocity rate of at least k + 1.7), in dt studies they
                bound every pairwise rate, and min_abs_r turns on the p-study
                checks (strict decrease, negative slope, correlation)

A ``custom`` problem uses the manufactured data of ``example1_L1`` on the
mesh file given by ``mesh``, whose boundary must carry the labels
``gamma_f`` and ``gamma_s``.
"""

import os
from dataclasses import dataclass, field, fields
from fractions import Fraction

from . import benchmarks
from .mesh import load_mesh
from .studies import DT_CONSTANT

PROBLEM_NAMES = ("example1_L1", "example1_L2", "example2", "exactness", "custom")
SOLVERS = ("direct", "iterative")
INIT_MODES = ("consistent", "projected")
RESOLVED_NAME = "config.resolved"


class ConfigError(ValueError):
    pass


def _number(text, kind, key):
    try:
        if kind is int:
            return int(text)
        if "/" in text:
            return float(Fraction(text))
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: cannot read {text!r} as {kind.__name__}") from None


@dataclass
class RunConfig:
    problem: str = "example1_L1"
    k: int = None
    ks: list = None
    h: float = None
    hs: list = None
    mesh: str = None
    T: float = None
    L: int = None
    dt: float = None
    dt_c: float = None
    dts: list = None
    lam_f: float = None
    solver: str = "direct"
    tol: float = 1e-10
    init: str = "consistent"
    output: str = "output"
    probes: int = 601
    p_max: float = 1.333e4
    t_max: float = 0.003
    min_rate_sigma: float = None
    min_rate_u: float = None
    max_rate_sigma: float = None
    max_rate_u: float = None
    min_abs_r: float = None
    source: str = field(default=None, repr=False)

    def validate(self):
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEM_NAMES)}, got {self.problem!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {', '.join(SOLVERS)}, got {self.solver!r}")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {', '.join(INIT_MODES)}, got {self.init!r}")
        given = [n for n in ("L", "dt", "dt_c") if getattr(self, n) is not None]
        if len(given) > 1:
            raise ConfigError(f"give at most one of L, dt, dt_c (got {', '.join(given)})")
        if not given and self.dts is None:
            self.dt_c = DT_CONSTANT
        for name in ("k",):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be >= 0, got {v}")
        if self.ks is not None and any(v < 0 for v in self.ks):
            raise ConfigError(f"ks must be >= 0, got {self.ks}")
        for name in ("T", "h", "dt", "dt_c", "tol", "t_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        for name in ("hs", "dts"):
            v = getattr(self, name)
            if v is not None and (not v or any(not x > 0 for x in v)):
                raise ConfigError(f"{name} must be a non-empty list of positive values")
        if self.L is not None and self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.lam_f is not None and not self.lam_f > 0:
            raise ConfigError(f"lam_f must be positive, got {self.lam_f}")
        if self.probes < 2:
            raise ConfigError(f"probes must be >= 2, got {self.probes}")
        if self.problem == "custom" and self.mesh is None:
            raise ConfigError("problem = custom needs a mesh file")
        return self

    # -- derived ---------------------------------------------------------------

    def degrees(self):
        if self.ks is not None:
            return list(self.ks)
        if self.k is not None:
            return [self.k]
        raise ConfigError("no polynomial degree given (k or ks)")

    def sizes(self):
        if self.hs is not None:
            return list(self.hs)
        if self.h is not None:
            return [self.h]
        if self.mesh is not None:
            return [None]
        raise ConfigError("no mesh size given (h or hs)")

    def mesh_path(self):
        if self.mesh is None:
            return None
        if os.path.isabs(self.mesh) or self.source is None:
            return self.mesh
        return os.path.join(os.path.dirname(os.path.abspath(self.source)), self.mesh)

    def build_problem(self, k=None):
        """The benchmark problem named by the config (``k`` for the exactness case)."""
        name = self.problem
        if name == "exactness":
            if k is None:
                raise ConfigError("the exactness problem needs a degree")
            pb = benchmarks.polynomial_exactness_case(k)
            if self.lam_f is not None:
                raise ConfigError("lam_f cannot be overridden for the exactness problem")
        elif name == "example2":
            pb = benchmarks.example2(
                lam_f=self.lam_f if self.lam_f is not None else 1e6, p_max=self.p_max, t_max=self.t_max
            )
        else:
            pb = benchmarks.example1("L2" if name == "example1_L2" else "L1", lam_f=self.lam_f)
        path = self.mesh_path()
        if path is not None:
            try:
                loaded = load_mesh(path)
            except OSError as exc:
                raise ConfigError(f"cannot read mesh {path!r}: {exc}") from None
            pb.make_mesh = lambda h, _m=loaded: _m
        if self.T is not None:
            pb.T = self.T
        return pb

    def to_text(self):
        lines = []
        for f in fields(self):
            if f.name == "source":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, list):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, directory):
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, RESOLVED_NAME)
        with open(path, "w") as fh:
            fh.write(self.to_text())
        return path


_TYPES = {
    "problem": str, "k": int, "ks": [int], "h": float, "hs": [float], "mesh": str,
    "T": float, "L": int, "dt": float, "dt_c": float, "dts": [float], "lam_f": float,
    "solver": str, "tol": float, "init": str, "output": str, "probes": int,
    "p_max": float, "t_max": float, "min_rate_sigma": float, "min_rate_u": float,
    "max_rate_sigma": float, "max_rate_u": float, "min_abs_r": float,
}  # fmt: skip


def parse_text(text, source=None):
    """Parse config text into a validated :class:`RunConfig`."""
    values = {}
    where = source or "<config>"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{where}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}:{lineno}: duplicate key {key!r}")
        if not val:
            raise ConfigError(f"{where}:{lineno}: empty value for {key!r}")
        kind = _TYPES[key]
        if isinstance(kind, list):
            items = [s.strip() for s in val.split(",")]
            if any(not s for s in items):
                raise ConfigError(f"{where}:{lineno}: empty list item in {key!r}")
            values[key] = [_number(s, kind[0], key) for s in items]
        elif kind is str:
            values[key] = val
        else:
            values[key] = _number(val, kind, key)
    return RunConfig(source=source, **values).validate()


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_text(text, source=path)
