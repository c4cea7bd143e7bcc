"""Fibering maps, Nehari projection and the M+/M0/M- classification.

For a direction ``u`` the fibering map is ``Phi(t) = J(t u)``. With the
discrete energy it is a power sum, so ``Phi``, ``t Phi'`` and
``t^2 Phi'' + t Phi'`` come out of one kernel call (see
:meth:`mpnehari.energy.FiberTerms.moments`). Positive roots of ``Phi'`` are
the Nehari points ``t u`` on the ray; ``Phi''`` at the root decides the branch.

Root search works in ``log t``: ``g(tau) = t Phi'(t)`` at ``t = exp(tau)`` is
sampled on a geometric grid, every sign change is refined with Brent's
method, and sampled local extrema of ``|g|`` that do not change sign are
inspected for a nearly tangent pair of roots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .energy import FiberTerms, Functional, RegularizationPolicy
from .spaces import ExponentSet, sobolev_norm

__all__ = [
    "Branch", "Root", "FiberScan", "FiberingResult", "LambdaBounds",
    "ZeroDirection", "NoRoot", "NotOnManifold",
    "TOL_ROOT", "TOL_CLASS", "T_SPAN", "N_SCAN",
    "fibering_scan", "find_roots", "project_to_nehari", "classify",
    "select_branch", "lambda_bounds", "nehari_scale", "fold_lambda",
]

TOL_ROOT = 1e-9
TOL_CLASS = 1e-7
T_SPAN = (1e-6, 1e6)
N_SCAN = 256


class Branch(str, Enum):
    MPLUS = "Mplus"
    MZERO = "Mzero"
    MMINUS = "Mminus"

    def __str__(self) -> str:
        return self.value


class ZeroDirection(ValueError):
    """The direction vanishes at every interior node."""


class NoRoot(RuntimeError):
    def __init__(self, message: str, scan: "FiberScan | None" = None):
        super().__init__(message)
        self.scan = scan


class NotOnManifold(ValueError):
    def __init__(self, residual: float, bound: float):
        self.residual = residual
        self.bound = bound
        super().__init__(f"|<J'(u), u>| = {residual:.3e} exceeds {bound:.3e}")


@dataclass(frozen=True)
class Root:
    t: float
    phi: float
    phi1: float          # Phi'(t)
    phi2: float          # Phi''(t)
    branch: Branch
    residual: float      # |<J'(tu), tu>| = |t Phi'(t)|
    scale: float         # |rho-part| + |source| + |singular| at tu
    rho_scale: float     # |rho-part| of <J'(tu), tu>, used for the class dead-band


@dataclass
class FiberScan:
    t: np.ndarray
    phi: np.ndarray
    phi1: np.ndarray

    def to_csv(self, path=None) -> str:
        lines = ["t,phi,phi1"]
        lines += [f"{t!r},{p!r},{d!r}" for t, p, d in
                  zip(map(float, self.t), map(float, self.phi), map(float, self.phi1))]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class FiberingResult:
    roots: list
    scan: FiberScan
    direction_norm: float
    discarded: list = field(default_factory=list)

    def by_branch(self, branch) -> list:
        return [r for r in self.roots if r.branch == Branch(branch)]

    def to_keyvalue(self) -> str:
        lines = [f"direction_norm={self.direction_norm!r}", f"n_roots={len(self.roots)}"]
        for k, r in enumerate(self.roots):
            lines += [
                f"root{k}.t={r.t!r}", f"root{k}.phi={r.phi!r}", f"root{k}.phi1={r.phi1!r}",
                f"root{k}.phi2={r.phi2!r}", f"root{k}.branch={r.branch}",
                f"root{k}.residual={r.residual!r}", f"root{k}.scale={r.scale!r}",
            ]
        return "\n".join(lines) + "\n"


def _direction(es: ExponentSet, u) -> np.ndarray:
    u = es.grid.restrict(np.abs(np.asarray(u, dtype=float)))
    if not np.any(u):
        raise ZeroDirection("direction vanishes on the interior")
    return u


def _group_moments(terms: FiberTerms, t: float) -> dict:
    return {name: terms.moments(t, name)[0] for name in terms.groups}


def nehari_scale(terms: FiberTerms, t: float) -> tuple:
    """``(|rho-part| + |source| + |singular|, |rho-part|)`` of ``<J'(tu), tu>``.

    The rho-part is the whole coercive side (gradient modular plus Hardy potential).
    """
    m = _group_moments(terms, t)
    rho = abs(m["rho"][1]) + abs(m.get("hardy", np.zeros(3))[1])
    rest = sum(abs(m[k][1]) for k in ("source", "singular") if k in m)
    return rho + rest, rho


def _make_root(terms: FiberTerms, t: float, tol_class: float) -> Root:
    phi, s1, s2 = terms.moments(t)[0]
    scale, rho = nehari_scale(terms, t)
    d2 = s2 - s1
    band = tol_class * rho
    if d2 > band:
        branch = Branch.MPLUS
    elif d2 < -band:
        branch = Branch.MMINUS
    else:
        branch = Branch.MZERO
    return Root(t=float(t), phi=float(phi), phi1=float(s1 / t), phi2=float(d2 / (t * t)),
                branch=branch, residual=float(abs(s1)), scale=float(scale), rho_scale=float(rho))


def _refine(g, a: float, b: float) -> float:
    return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_roots(terms: FiberTerms, t_lo: float, t_hi: float, n_scan: int = N_SCAN,
               tol_class: float = TOL_CLASS):
    """All positive roots of ``Phi'`` found on ``[t_lo, t_hi]``, plus the scan.

    Returns ``(roots, scan)``, roots sorted by ``t``.
    """
    taus = np.linspace(math.log(t_lo), math.log(t_hi), n_scan)
    ts = np.exp(taus)
    mom = terms.moments(ts)
    g_vals = mom[:, 1]
    scan = FiberScan(ts, mom[:, 0], g_vals / ts)

    def g(tau):
        return float(terms.moments(math.exp(tau))[0, 1])

    found = []
    sign = np.sign(g_vals)
    for k in range(n_scan - 1):
        if sign[k] == 0:
            found.append(taus[k])
        elif sign[k] * sign[k + 1] < 0:
            found.append(_refine(g, taus[k], taus[k + 1]))
    if sign[-1] == 0:
        found.append(taus[-1])

    # a tangent pair hides between samples where |g| dips without a sign change
    for k in range(1, n_scan - 1):
        gk = g_vals[k]
        if gk == 0 or sign[k - 1] != sign[k] or sign[k] != sign[k + 1]:
            continue
        if abs(gk) > abs(g_vals[k - 1]) or abs(gk) > abs(g_vals[k + 1]):
            continue
        s = sign[k]
        res = minimize_scalar(lambda tau: s * g(tau), bounds=(taus[k - 1], taus[k + 1]),
                              method="bounded", options={"xatol": 1e-13})
        if res.fun < 0:
            found.append(_refine(g, taus[k - 1], res.x))
            found.append(_refine(g, res.x, taus[k + 1]))
        elif abs(res.fun) <= TOL_ROOT * nehari_scale(terms, math.exp(res.x))[0]:
            found.append(res.x)

    found = sorted(set(float(x) for x in found))
    roots = [_make_root(terms, math.exp(x), tol_class) for x in found]
    return roots, scan


def fibering_scan(u, es: ExponentSet, lam: float, t_grid, reg: RegularizationPolicy | None = None,
                  functional: Functional | None = None) -> FiberScan:
    """``(t, Phi(t), Phi'(t))`` on ``t_grid`` with the ``Phi(0) = 0`` row prepended."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be a non-empty, strictly increasing array of positive reals")
    u = _direction(es, u)
    f = functional or Functional(es, lam, reg)
    mom = f.fiber_terms(u).moments(t_grid)
    return FiberScan(np.concatenate([[0.0], t_grid]), np.concatenate([[0.0], mom[:, 0]]),
                     np.concatenate([[np.nan], mom[:, 1] / t_grid]))


def project_to_nehari(u, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None, *,
                      functional: Functional | None = None, n_scan: int = N_SCAN,
                      t_span=T_SPAN, tol_class: float = TOL_CLASS,
                      direction_norm: float | None = None) -> FiberingResult:
    """Locate every positive critical point of the fibering map of ``|u|``.

    The bracket is ``t_span / ||u||_{1,T,0}``. Raises :class:`NoRoot` when
    nothing is found, with the scan attached.
    """
    u = _direction(es, u)
    f = functional or Functional(es, lam, reg)
    norm = sobolev_norm(es.grid, u, es) if direction_norm is None else direction_norm
    terms = f.fiber_terms(u)
    roots, scan = find_roots(terms, t_span[0] / norm, t_span[1] / norm, n_scan, tol_class)
    if not roots:
        raise NoRoot(f"Phi' has no sign change on [{t_span[0] / norm:.3e}, {t_span[1] / norm:.3e}]",
                     scan)
    return FiberingResult(roots=roots, scan=scan, direction_norm=norm)


def select_branch(roots, branch) -> "Root | None":
    """Smallest-``t`` M+ root, or largest-``t`` M- root; ``None`` if absent."""
    branch = Branch(branch)
    hits = [r for r in roots if r.branch == branch]
    if not hits:
        return None
    return min(hits, key=lambda r: r.t) if branch is Branch.MPLUS else max(hits, key=lambda r: r.t)


def classify(u, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None, *,
             tol_root: float = TOL_ROOT, tol_class: float = TOL_CLASS,
             functional: Functional | None = None) -> Branch:
    """Branch of a point already on the Nehari manifold."""
    u = _direction(es, u)
    f = functional or Functional(es, lam, reg)
    root = _make_root(f.fiber_terms(u), 1.0, tol_class)
    if root.residual > tol_root * root.scale:
        raise NotOnManifold(root.residual, tol_root * root.scale)
    return root.branch


def fold_lambda(u, es: ExponentSet, reg: RegularizationPolicy | None = None, *,
                t_span=T_SPAN, n_scan: int = 1024) -> tuple:
    """Largest ``lambda`` at which the ray through ``|u|`` still meets the Nehari manifold.

    ``<J'(tu), tu> = 0`` reads ``lambda = L(t)`` with ``L = (coercive - source) / singular``
    (singular part taken at ``lambda = 1``), so roots exist exactly for
    ``lambda <= max_t L(t)``; at the maximiser the two roots merge into an M0
    point. Returns ``(max L, argmax t)``; ``inf`` when the singular part vanishes.
    """
    u = _direction(es, u)
    terms = Functional(es, 1.0, reg).fiber_terms(u)
    if "singular" not in terms.groups or terms.groups["singular"][0].size == 0:
        return math.inf, math.nan
    norm = sobolev_norm(es.grid, u, es)
    keys = [k for k in ("rho", "hardy", "source") if k in terms.groups]

    def level(tau):
        t = np.exp(np.atleast_1d(tau))
        num = sum(terms.moments(t, k)[:, 1] for k in keys)
        return num / -terms.moments(t, "singular")[:, 1]

    taus = np.linspace(math.log(t_span[0] / norm), math.log(t_span[1] / norm), n_scan)
    vals = level(taus)
    k = int(np.argmax(vals))
    lo, hi = taus[max(k - 1, 0)], taus[min(k + 1, n_scan - 1)]
    res = minimize_scalar(lambda tau: -float(level(tau)[0]), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    best = max(float(vals[k]), -float(res.fun))
    t_best = math.exp(res.x) if -res.fun >= vals[k] else math.exp(taus[k])
    return best, t_best


# ---------------------------------------------------------------------------
# analytic smallness thresholds


@dataclass
class LambdaBounds:
    fibering: float | None        # (1 - beta+) / r+
    positive_level: float | None  # (s- - r+)(1 - beta+) / (r+ (s- - (1 - beta+)))
    null_set: float | None        # largest lambda for which M0 is provably empty
    t1: float | None
    lambda_star: float | None
    notes: list = field(default_factory=list)

    def named(self) -> dict:
        return {"fibering": self.fibering, "positive_level": self.positive_level,
                "null_set": self.null_set}

    def to_keyvalue(self) -> str:
        def fmt(v):
            return "undefined" if v is None else repr(float(v))
        lines = [
            f"lambda_fibering={fmt(self.fibering)}",
            f"lambda_positive_level={fmt(self.positive_level)}",
            f"lambda_null_set={fmt(self.null_set)}",
            f"t1={fmt(self.t1)}",
            f"lambda_star_analytic={fmt(self.lambda_star)}",
        ]
        lines += [f"note={n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def lambda_bounds(source) -> LambdaBounds:
    """Analytic thresholds from the exponent extrema.

    ``source`` is an :class:`ExponentSet` or a dict with ``p_min``, ``r_max``,
    ``s_min``, ``s_max``, ``beta_min`` and ``beta_max``. A bound whose formula
    degenerates is reported as ``None`` with a note.
    """
    b = source.bounds if isinstance(source, ExponentSet) else source
    p_lo, r_hi = b["p_min"], b["r_max"]
    s_lo, s_hi = b["s_min"], b["s_max"]
    be_lo, be_hi = b["beta_min"], b["beta_max"]
    notes = []
    fib = (1 - be_hi) / r_hi if r_hi > 0 else None

    pos = None
    if s_lo > r_hi and s_lo > 1 - be_hi:
        pos = (s_lo - r_hi) * (1 - be_hi) / (r_hi * (s_lo - (1 - be_hi)))
    else:
        notes.append("positive_level undefined: s_min <= r_max")

    t1 = null = None
    if s_hi > p_lo and s_hi > 1 - be_lo and p_lo > 1 - be_lo:
        t1 = ((p_lo - (1 - be_lo)) / (s_hi - (1 - be_lo))) ** (1 / (s_hi - p_lo))
        if s_lo > r_hi:
            null = min(1.0, t1) ** (p_lo - (1 - be_lo)) * (s_lo - r_hi) / (s_lo - (1 - be_hi))
        else:
            notes.append("null_set undefined: s_min <= r_max")
    else:
        notes.append("t1 undefined: exponent ordering violated")

    present = [v for v in (fib, pos, null) if v is not None]
    star = min(present) if present else None
    return LambdaBounds(fib, pos, null, t1, star, notes)
