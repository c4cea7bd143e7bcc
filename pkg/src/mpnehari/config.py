"""INI-style run configuration.

Example::

    [grid]
    n = 33

    [exponents]
    preset = section4

    [solver]
    battery_size = 4
    grad_tol = 1e-6

    [run]
    lambda = 1e-4
    lambdas = 1e-5, 1e-4, 1e-3
    seed = 0

Without a preset, ``[grid]`` needs ``dim``, ``box`` and optionally ``domain``,
and ``[exponents]`` needs every field in :data:`mpnehari.spaces.FIELD_NAMES`.
Expression values may be quoted.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .energy import RegularizationPolicy
from .exprlang import parse
from .grid import Grid, build_grid
from .presets import PRESETS
from .solver import SolverConfig
from .spaces import FIELD_NAMES, ExponentSet

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

_SECTIONS = {"grid", "exponents", "solver", "run"}
_GRID_KEYS = {"dim", "n", "box", "domain"}
_RUN_KEYS = {"lambda", "lambdas", "seed", "output"}
_REG_KEYS = {"eps_u", "eps_x", "eps_u_rel"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class RunConfig:
    dim: int
    n: int
    box: tuple
    domain: str | None
    exponents: dict
    preset: str | None
    hardy_weight: float
    solver: SolverConfig
    lam: float | None
    lambdas: list
    seed: int
    output: str | None
    source: str = ""
    _grid: Grid | None = field(default=None, repr=False)

    def grid(self) -> Grid:
        if self._grid is None:
            self._grid = build_grid(self.dim, self.n, self.box, self.domain)
        return self._grid

    def exponent_set(self) -> ExponentSet:
        return ExponentSet.from_expressions(self.grid(), self.exponents, self.hardy_weight)

    def echo(self) -> str:
        """Normalised ``key=value`` listing of every setting."""
        lines = [f"grid.dim={self.dim}", f"grid.n={self.n}",
                 f"grid.box={self.box[0]!r},{self.box[1]!r}", f"grid.domain={self.domain or ''}",
                 f"exponents.preset={self.preset or ''}",
                 f"exponents.hardy_weight={self.hardy_weight!r}"]
        lines += [f"exponents.{k}={self.exponents[k]}" for k in FIELD_NAMES]
        for k, v in self.solver.to_dict().items():
            if isinstance(v, dict):
                lines += [f"solver.{kk}={vv!r}" for kk, vv in v.items()]
            else:
                lines.append(f"solver.{k}={v!r}")
        lines += [f"run.lambda={'' if self.lam is None else repr(self.lam)}",
                  f"run.lambdas={','.join(repr(v) for v in self.lambdas)}",
                  f"run.seed={self.seed}"]
        return "\n".join(lines) + "\n"


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _get(section, key, conv, path):
    try:
        return conv(_unquote(section[key]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, f"cannot parse {section[key]!r} ({exc})") from None


def _floats(text: str) -> list:
    text = text.strip()
    return [float(v) for v in text.split(",") if v.strip()] if text else []


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def parse_config(text: str, origin: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(origin, f"malformed file ({exc.__class__.__name__})") from None
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(name, "unknown section")
    sec = {name: cp[name] if cp.has_section(name) else {} for name in _SECTIONS}

    for key in sec["grid"]:
        if key not in _GRID_KEYS:
            raise ConfigError(f"grid.{key}", "unknown key")
    for key in sec["run"]:
        if key not in _RUN_KEYS:
            raise ConfigError(f"run.{key}", "unknown key")

    ex = sec["exponents"]
    for key in ex:
        if key not in FIELD_NAMES and key not in ("preset", "hardy_weight"):
            raise ConfigError(f"exponents.{key}", "unknown key")
    preset = _unquote(ex["preset"]) if "preset" in ex else None
    explicit = [k for k in ex if k in FIELD_NAMES]
    g = sec["grid"]
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("exponents.preset", f"unknown preset {preset!r}")
        if explicit:
            raise ConfigError(f"exponents.{explicit[0]}", "explicit expressions conflict with preset")
        entry = PRESETS[preset]
        for key, want in (("dim", entry["dim"]), ("domain", entry["domain"])):
            if key in g and _unquote(g[key]) != str(want):
                raise ConfigError(f"grid.{key}", f"preset {preset!r} fixes {key}={want}")
        dim, domain = entry["dim"], entry["domain"]
        box = tuple(entry["box"])
        if "box" in g and tuple(_get(g, "box", _floats, "grid.box")) != box:
            raise ConfigError("grid.box", f"preset {preset!r} fixes box={box}")
        exprs = dict(entry["exponents"])
    else:
        missing = [k for k in FIELD_NAMES if k not in ex]
        if missing:
            raise ConfigError(f"exponents.{missing[0]}", "missing (and no preset given)")
        for key in ("dim", "box"):
            if key not in g:
                raise ConfigError(f"grid.{key}", "missing (and no preset given)")
        dim = _get(g, "dim", int, "grid.dim")
        box = tuple(_get(g, "box", _floats, "grid.box"))
        if len(box) != 2 or not box[1] > box[0]:
            raise ConfigError("grid.box", "expected 'lo, hi' with lo < hi")
        domain = _unquote(g["domain"]) if "domain" in g and _unquote(g["domain"]) else None
        exprs = {k: _unquote(ex[k]) for k in FIELD_NAMES}
    if dim not in (1, 2, 3):
        raise ConfigError("grid.dim", "must be 1, 2 or 3")
    n = _get(g, "n", int, "grid.n") if "n" in g else 33
    if n < 3:
        raise ConfigError("grid.n", "must be at least 3")
    hardy_weight = _get(ex, "hardy_weight", float, "exponents.hardy_weight") if "hardy_weight" in ex else 1.0

    # every expression must parse; exprlang errors propagate with their position
    for k, src in exprs.items():
        parse(src, dim)
    if domain is not None:
        parse(domain, dim)

    run = sec["run"]
    seed = _get(run, "seed", int, "run.seed") if "seed" in run else 0
    lam = _get(run, "lambda", float, "run.lambda") if "lambda" in run else None
    lambdas = _get(run, "lambdas", _floats, "run.lambdas") if "lambdas" in run else []
    output = _unquote(run["output"]) if "output" in run else None

    s = sec["solver"]
    known = {f.name: f.type for f in dc_fields(SolverConfig)} | {k: "float" for k in _REG_KEYS}
    kwargs, reg = {"seed": seed}, {}
    for key in s:
        if key not in known or key in ("reg", "seed"):
            raise ConfigError(f"solver.{key}", "unknown key")
        if key in _REG_KEYS:
            reg[key] = _get(s, key, float, f"solver.{key}")
        elif key == "preconditioned":
            kwargs[key] = _get(s, key, _bool, f"solver.{key}")
        elif known[key] == "int":
            kwargs[key] = _get(s, key, int, f"solver.{key}")
        else:
            kwargs[key] = _get(s, key, float, f"solver.{key}")
    try:
        kwargs["reg"] = RegularizationPolicy(**reg)
        solver = SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    return RunConfig(dim=dim, n=n, box=box, domain=domain, exponents=exprs, preset=preset,
                     hardy_weight=hardy_weight, solver=solver, lam=lam, lambdas=lambdas, seed=seed,
                     output=output, source=text)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror or exc})") from None
    return parse_config(text, str(p))
