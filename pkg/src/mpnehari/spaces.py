"""Variable-exponent modulars, Luxemburg norms and the standing hypotheses.

The multi-phase integrand is ``T(x, t) = t**p(x) + mu1(x) t**q(x) + mu2(x) t**r(x)``
with modular ``rho_T(v) = integral of T(x, |v|)`` and Luxemburg norm
``||v||_T = inf{z > 0 : rho_T(v / z) <= 1}``. Because ``z -> rho(v / z)`` is a
power sum in ``1/z``, every norm is a bisection on :mod:`mpnehari.kernels`.

Exponent bounds (``p_min``, ``p_max``, ...) are taken over the nodes the
quadratures actually visit (``grid.support``: interior nodes plus the
boundary-adjacent nodes reached by the forward-difference stencil), so that
every pointwise bound used downstream holds at every quadrature node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from . import kernels
from .exprlang import parse
from .grid import Grid, forward_gradient

__all__ = [
    "TOL_LUX", "FIELD_NAMES", "ExponentSet", "HypothesisReport", "DimensionMismatch",
    "SubcriticalityError", "validate", "modular", "luxemburg_norm", "multiphase_modular",
    "multiphase_norm", "gradient_magnitude", "sobolev_norm", "gradient_modular",
    "estimate_embedding_constants", "norm_from_terms",
]

TOL_LUX = 1e-10
FIELD_NAMES = ("p", "q", "r", "s", "beta", "alpha", "gamma", "mu1", "mu2", "m1", "m2")
_BOUNDED = ("p", "q", "r", "s", "beta", "alpha", "gamma", "mu1", "mu2", "m1", "m2")


class DimensionMismatch(ValueError):
    pass


class SubcriticalityError(ValueError):
    """``p(x) >= N`` somewhere, so the Sobolev conjugate is undefined."""


@dataclass(eq=False)
class ExponentSet:
    """Exponent functions and weights sampled on one grid.

    ``hardy_weight`` multiplies the Hardy-potential part of the energy; it is
    1 for the problem proper and exists so that pure gradient-energy
    benchmarks can switch the potential off.
    """

    grid: Grid
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    hardy_weight: float = 1.0
    sources: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in FIELD_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 0:
                arr = np.full(self.grid.shape, float(arr))
            if arr.shape != self.grid.shape:
                raise DimensionMismatch(
                    f"field {name} has shape {arr.shape}, grid is {self.grid.shape}"
                )
            setattr(self, name, arr)

    @classmethod
    def from_expressions(cls, grid: Grid, exprs: dict, hardy_weight: float = 1.0) -> "ExponentSet":
        missing = [k for k in FIELD_NAMES if k not in exprs]
        if missing:
            raise KeyError(f"missing expressions: {', '.join(missing)}")
        values = {}
        for name in FIELD_NAMES:
            src = exprs[name]
            values[name] = grid.evaluate(parse(str(src), grid.dim))
        return cls(grid=grid, hardy_weight=hardy_weight,
                   sources={k: str(exprs[k]) for k in FIELD_NAMES}, **values)

    @classmethod
    def constant(cls, grid: Grid, hardy_weight: float = 1.0, **values) -> "ExponentSet":
        """Constant-valued fields; unspecified ones get harmless defaults."""
        defaults = dict(p=2.0, q=2.0, r=2.0, s=4.0, beta=0.5, alpha=2.0, gamma=2.0,
                        mu1=0.0, mu2=0.0, m1=1.0, m2=0.0)
        defaults.update(values)
        return cls(grid=grid, hardy_weight=hardy_weight,
                   sources={k: repr(float(v)) for k, v in defaults.items()}, **defaults)

    # -- derived quantities -------------------------------------------------

    @cached_property
    def bounds(self) -> dict:
        """``{name}_min`` / ``{name}_max`` over the support nodes."""
        mask = self.grid.support
        out = {}
        for name in _BOUNDED:
            vals = getattr(self, name)[mask]
            out[f"{name}_min"] = float(vals.min())
            out[f"{name}_max"] = float(vals.max())
        return out

    def lo(self, name: str) -> float:
        return self.bounds[f"{name}_min"]

    def hi(self, name: str) -> float:
        return self.bounds[f"{name}_max"]

    def _p_star_unchecked(self) -> np.ndarray:
        n = self.grid.dim
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.p < n, n * self.p / (n - self.p), np.inf)

    @property
    def p_star(self) -> np.ndarray:
        """Sobolev conjugate ``N p / (N - p)``; raises if ``p >= N`` on the support."""
        if np.any(self.p[self.grid.support] >= self.grid.dim):
            raise SubcriticalityError(f"p(x) >= N = {self.grid.dim} somewhere in the domain")
        return self._p_star_unchecked()

    @property
    def alpha0(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.alpha > 1, self.alpha / (self.alpha - 1), np.inf)

    @property
    def gamma0(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.gamma > 1, self.gamma / (self.gamma - 1), np.inf)

    @property
    def mu_sup(self) -> tuple:
        m = self.grid.support
        return float(np.max(np.abs(self.mu1[m]))), float(np.max(np.abs(self.mu2[m])))


# ---------------------------------------------------------------------------
# hypotheses


@dataclass
class HypothesisReport:
    checks: dict
    margins: dict
    worst: dict
    bounds: dict
    conditions: dict
    messages: list = field(default_factory=list)

    # the problem itself needs H1, H2, A_beta; A_alpha and A_gamma only feed
    # the abstract embedding constants and are reported separately
    CORE = ("H1", "H2", "A_beta")

    @property
    def ok(self) -> bool:
        return all(self.checks[k] for k in self.CORE)

    @property
    def all_ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failed(self) -> list:
        return [k for k, v in self.checks.items() if not v]

    def to_keyvalue(self) -> str:
        lines = [f"hypotheses_ok={int(self.ok)}", f"all_hypotheses_ok={int(self.all_ok)}"]
        for k, v in self.checks.items():
            lines.append(f"{k}={'pass' if v else 'fail'}")
            lines.append(f"{k}.margin={self.margins[k]!r}")
            idx, pt = self.worst[k]
            lines.append(f"{k}.worst_node={','.join(map(str, idx))}")
            lines.append(f"{k}.worst_point={','.join(repr(float(c)) for c in pt)}")
        for k, v in self.bounds.items():
            lines.append(f"{k}={v!r}")
        for k, (passed, lhs, rhs) in self.conditions.items():
            lines.append(f"{k}={'pass' if passed else 'fail'}")
            lines.append(f"{k}.lhs={lhs!r}")
            lines.append(f"{k}.rhs={rhs!r}")
        for m in self.messages:
            lines.append(f"note={m}")
        return "\n".join(lines) + "\n"


def _constraint_margin(constraints, mask):
    """Smallest margin over all constraints at masked nodes and where it occurs."""
    best = math.inf
    where = None
    ok = True
    for lhs, rhs, strict in constraints:
        lhs = np.broadcast_to(lhs, mask.shape)
        rhs = np.broadcast_to(rhs, mask.shape)
        with np.errstate(invalid="ignore"):
            margin = np.where(mask, rhs - lhs, np.inf)
        margin = np.where(np.isnan(margin), -np.inf, margin)
        flat = int(np.argmin(margin))
        m = float(margin.reshape(-1)[flat])
        good = bool(np.all(margin > 0)) if strict else bool(np.all(margin >= 0))
        ok &= good
        if m < best or where is None:
            best, where = m, np.unravel_index(flat, mask.shape)
    return ok, best, tuple(int(i) for i in where)


def validate(es: ExponentSet) -> HypothesisReport:
    """Check the growth, weight and singularity hypotheses node by node."""
    g = es.grid
    mask = g.support
    n = g.dim
    p_star = es._p_star_unchecked()
    b = es.bounds
    s_max = b["s_max"]
    one = 1.0
    a0, c0 = es.alpha0, es.gamma0
    groups = {
        "H1": [
            (one, es.p, True), (es.p, float(n), True), (es.p, es.q, True), (es.q, es.r, True),
            (es.r, es.s, True), (es.s, p_star, True), (s_max, p_star, True),
        ],
        "H2": [(0.0, es.mu1, False), (0.0, es.mu2, False), (0.0, es.m1, False), (0.0, es.m2, False)],
        "A_beta": [(0.0, es.beta, True), (es.beta, one, True)],
        "A_alpha": [
            (one, es.alpha, True),
            (one, a0 * (1 - b["beta_max"]), False),
            (a0 * (1 - b["beta_min"]), p_star, True),
        ],
        "A_gamma": [(one, es.gamma, True), (one, es.s * c0, False), (es.s * c0, p_star, True)],
    }
    checks, margins, worst = {}, {}, {}
    for name, cons in groups.items():
        ok, m, idx = _constraint_margin(cons, mask)
        checks[name], margins[name] = ok, m
        worst[name] = (idx, tuple(float(c) for c in g.points[idx]))

    bounds = dict(b)
    finite = p_star[mask][np.isfinite(p_star[mask])]
    bounds["p_star_min"] = float(finite.min()) if finite.size else math.inf
    bounds["p_star_max"] = float(finite.max()) if finite.size else math.inf

    p_lo, r_hi = b["p_min"], b["r_max"]
    s_lo, s_hi = b["s_min"], b["s_max"]
    be_lo, be_hi = b["beta_min"], b["beta_max"]
    gap_l, gap_r = (s_hi - p_lo) * (1 - be_lo), p_lo * (s_lo - r_hi)
    ord_l, ord_r = s_lo + be_hi, s_hi + be_lo
    conditions = {
        "gap_condition": (gap_l < gap_r, gap_l, gap_r),
        "order_condition": (ord_l <= ord_r, ord_l, ord_r),
    }
    messages = []
    if not checks["H1"] and np.any(es.p[mask] >= n):
        messages.append(f"p(x) >= N={n} at some node; Sobolev conjugate undefined there")
    return HypothesisReport(checks, margins, worst, bounds, conditions, messages)


# ---------------------------------------------------------------------------
# modulars and norms


def _mask(grid: Grid, where):
    return grid.interior if where is None else where


def modular(grid: Grid, u, h, where=None) -> float:
    """``integral |u|**h`` by node quadrature."""
    m = _mask(grid, where)
    a = np.abs(np.asarray(u, dtype=float))[m]
    e = np.broadcast_to(np.asarray(h, dtype=float), grid.shape)[m]
    return float(np.sum(np.power(a, e))) * grid.cell_volume


def norm_from_terms(coef, expo, tol: float = TOL_LUX) -> float:
    """Unique ``z > 0`` with ``sum coef * z**(-expo) = 1``; 0 when all coefficients vanish.

    Bisection in ``log z`` on the bracket ``[2**-60, 2**60]``, widened
    geometrically when the root lies outside it.
    """
    coef = np.ascontiguousarray(coef, dtype=float)
    expo = np.ascontiguousarray(expo, dtype=float)
    keep = coef > 0
    if not np.any(keep):
        return 0.0
    coef, expo = coef[keep], expo[keep]
    # equal exponents merge exactly; radial exponent fields collapse to few classes
    expo, inverse = np.unique(expo, return_inverse=True)
    coef = np.bincount(inverse, weights=coef, minlength=expo.size)

    def f(log_z):
        return kernels.powsum(coef, expo, math.exp(-log_z))

    span = 60 * math.log(2.0)
    lo, hi = -span, span
    while f(lo) <= 1.0:
        hi, lo = lo, lo - span
    while f(hi) > 1.0:
        lo, hi = hi, hi + span
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def luxemburg_norm(grid: Grid, u, h, where=None, tol: float = TOL_LUX) -> float:
    """``inf{z > 0 : integral |u/z|**h <= 1}`` to relative tolerance ``tol``."""
    m = _mask(grid, where)
    a = np.abs(np.asarray(u, dtype=float))[m]
    e = np.broadcast_to(np.asarray(h, dtype=float), grid.shape)[m]
    nz = a > 0
    return norm_from_terms(np.power(a[nz], e[nz]) * grid.cell_volume, e[nz], tol)


def _multiphase_terms(grid: Grid, v, es: ExponentSet, where):
    m = _mask(grid, where)
    a = np.abs(np.asarray(v, dtype=float))[m]
    nz = a > 0
    a = a[nz]
    coefs, expos = [], []
    for w, e in ((None, es.p), (es.mu1, es.q), (es.mu2, es.r)):
        e = e[m][nz]
        c = np.power(a, e) * grid.cell_volume
        if w is not None:
            c = c * w[m][nz]
        coefs.append(c)
        expos.append(e)
    return np.concatenate(coefs), np.concatenate(expos)


def multiphase_modular(grid: Grid, v, es: ExponentSet, where=None) -> float:
    """``rho_T(v) = integral |v|**p + mu1 |v|**q + mu2 |v|**r``."""
    m = _mask(grid, where)
    a = np.abs(np.asarray(v, dtype=float))[m]
    total = np.power(a, es.p[m]) + es.mu1[m] * np.power(a, es.q[m]) + es.mu2[m] * np.power(a, es.r[m])
    return float(np.sum(total)) * grid.cell_volume


def multiphase_norm(grid: Grid, v, es: ExponentSet, where=None, tol: float = TOL_LUX) -> float:
    coef, expo = _multiphase_terms(grid, v, es, where)
    return norm_from_terms(coef, expo, tol)


def gradient_magnitude(grid: Grid, u) -> np.ndarray:
    """``|D+ u|`` per node (edge-based gradient used by the energy)."""
    g = forward_gradient(grid, u)
    return np.sqrt(np.sum(g * g, axis=0))


def gradient_modular(grid: Grid, u, es: ExponentSet) -> float:
    """``rho_T(grad u)`` over the stencil support."""
    return multiphase_modular(grid, gradient_magnitude(grid, u), es, where=grid.support)


def sobolev_norm(grid: Grid, u, es: ExponentSet, tol: float = TOL_LUX) -> float:
    """``||u||_{1,T,0} = || |grad u| ||_T``."""
    return multiphase_norm(grid, gradient_magnitude(grid, u), es, where=grid.support, tol=tol)


def estimate_embedding_constants(grid: Grid, es: ExponentSet, fields) -> dict:
    """Empirical embedding constants as the worst ratio over a battery of fields.

    ``c_r``: ``|grad u|_{L^{r+}} / ||u||_{1,T,0}``, ``c_p``: the same with
    ``p-``, ``c_T``: ``||u||_T / ||u||_{1,T,0}``. The Hardy bound uses
    ``c_hat_M = max(c_r**r+, c_p**p-)`` (the constants multiplying
    ``||u||**r+`` and ``||u||**p-`` in the gradient modulars).
    """
    r_hi, p_lo = es.hi("r"), es.lo("p")
    c_r = c_p = c_t = 0.0
    count = 0
    for u in fields:
        u = grid.restrict(u)
        norm = sobolev_norm(grid, u, es)
        if norm == 0.0:
            continue
        gm = gradient_magnitude(grid, u)
        c_r = max(c_r, luxemburg_norm(grid, gm, r_hi, where=grid.support) / norm)
        c_p = max(c_p, luxemburg_norm(grid, gm, p_lo, where=grid.support) / norm)
        c_t = max(c_t, multiphase_norm(grid, u, es) / norm)
        count += 1
    return {
        "c_r": c_r, "c_p": c_p, "c_T": c_t,
        "c_hat_1": c_r ** r_hi, "c_hat_2": c_p ** p_lo,
        "c_hat_M": max(c_r ** r_hi, c_p ** p_lo), "battery": count,
    }
