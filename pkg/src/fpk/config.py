"""Run configuration: a flat ``key = value`` text file with dotted keys.

Example::

    # Ornstein-Uhlenbeck drift in 1D
    field.kind = "linear"
    field.scale = 1.0
    grid.d = 1
    grid.R_dom = 8
    grid.n = 401
    weight.k = 2

Values are parsed as JSON (numbers, strings, lists, true/false/null); a
value that is not valid JSON is taken as a bare string.  A ``[section]``
line prefixes the following keys with ``section.``.  Blank lines and
``#`` comments are ignored.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .fields import ForceField, WeightContext
from .grid import build_grid

FIELD_KEYS = ("gamma", "theta", "scale", "matrix", "components")


def _strip_comment(line):
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def parse_config_text(text, source="<config>"):
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"{source}:{lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        if section:
            key = f"{section}.{key}"
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parsed
    return out


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


@dataclass
class RunConfig:
    field_kind: str = "linear"
    field_params: dict = field(default_factory=lambda: {"scale": 1.0})
    d: int = 1
    R_dom: float = 8.0
    n: int = 401
    k: float = 2.0
    p: float = 2.0
    dt: float = 0.01
    T: float = 10.0
    M: float = 10.0
    n_cutoff: float | None = None
    R: float | None = None
    stationary_tol: float = 1e-10
    max_iter: int = 50
    window_fraction: float = 0.1
    trials: int = 50
    family_size: int = 128
    init: str = "shifted_gaussian"
    shift: float = 2.0
    r_max: float = 50.0
    n_radial: int = 10_000
    n_angular: int = 64
    out: str = "fpk-out"
    seed: int = 0

    _KEYS = {
        "grid.d": "d",
        "grid.R_dom": "R_dom",
        "grid.n": "n",
        "weight.k": "k",
        "weight.p": "p",
        "time.dt": "dt",
        "time.T": "T",
        "split.M": "M",
        "split.n_cutoff": "n_cutoff",
        "hypotheses.R": "R",
        "hypotheses.r_max": "r_max",
        "hypotheses.n_radial": "n_radial",
        "hypotheses.n_angular": "n_angular",
        "tol.stationary": "stationary_tol",
        "tol.max_iter": "max_iter",
        "fit.window_fraction": "window_fraction",
        "split.trials": "trials",
        "nash.family_size": "family_size",
        "evolve.init": "init",
        "evolve.shift": "shift",
        "output.dir": "out",
        "seed": "seed",
    }

    @classmethod
    def from_mapping(cls, mapping):
        kw, params = {}, {}
        for key, value in mapping.items():
            if key == "field.kind":
                kw["field_kind"] = value
            elif key.startswith("field."):
                name = key[len("field."):]
                if name not in FIELD_KEYS:
                    raise ConfigError(f"unknown field parameter {key!r}")
                params[name] = value
            elif key in cls._KEYS:
                kw[cls._KEYS[key]] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if params or "field_kind" in kw:
            kw["field_params"] = params
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        return cls.from_mapping(load_config_file(path))

    def _num(self, name, kind=float, positive=False, allow_none=False):
        v = getattr(self, name)
        if v is None and allow_none:
            return
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{name} must be a number, got {v!r}")
        if kind is int and int(v) != v:
            raise ConfigError(f"{name} must be an integer, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(f"{name} must be positive, got {v!r}")
        setattr(self, name, kind(v))

    def validate(self, command=None):
        for name in ("R_dom", "dt", "T", "stationary_tol", "r_max"):
            self._num(name, positive=True)
        for name in ("d", "n", "max_iter", "trials", "family_size", "n_radial", "n_angular", "seed"):
            self._num(name, int)
        self._num("k")
        self._num("p")
        self._num("M")
        self._num("shift")
        self._num("window_fraction")
        self._num("n_cutoff", positive=True, allow_none=True)
        self._num("R", positive=True, allow_none=True)
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.M < 0:
            raise ConfigError(f"split.M must be non-negative, got {self.M}")
        if self.init not in ("shifted_gaussian", "bumps"):
            raise ConfigError(f"evolve.init must be 'shifted_gaussian' or 'bumps', got {self.init!r}")
        # constructing these runs their own precondition checks
        self.grid()
        self.force_field()
        ctx = self.context()
        if command == "nash":
            ctx.require_nash()
        if self.n_cutoff is not None and 2 * self.n_cutoff >= self.R_dom:
            warnings.warn(f"2 * n_cutoff = {2 * self.n_cutoff} reaches the box edge R_dom = {self.R_dom}", stacklevel=2)
        return self

    def grid(self):
        return build_grid(self.d, self.R_dom, self.n)

    def force_field(self):
        return ForceField.from_spec(self.field_kind, self.d, self.field_params)

    def context(self):
        return WeightContext(self.k, self.d, self.p)

    def to_dict(self):
        out = asdict(self)
        out["field"] = {"kind": out.pop("field_kind"), "params": out.pop("field_params")}
        return out
