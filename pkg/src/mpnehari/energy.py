"""Discrete energy, its exact gradient, Nehari functionals and Hardy checks.

The discrete energy is

    J(u) = sum_support  (|Du|^p/p + mu1 |Du|^q/q + mu2 |Du|^r/r) h^N
         + sum_interior (|u|^p/(p|x|^p) + mu1 |u|^q/(q|x|^q) + mu2 |u|^r/(r|x|^r)) h^N
         - sum_interior m1 |u|^s/s h^N
         - lam * sum_interior m2 |u|^(1-beta)/(1-beta) h^N

with ``Du`` the forward-difference gradient and ``|x|`` floored at ``eps_x``.
Every term is ``c * |u|**e`` or ``c * |Du|**e``, so along a ray ``t u`` the
energy is the power sum ``sum_k c_k t**e_k``; :class:`FiberTerms` holds those
coefficients and exponents.

:meth:`Functional.gradient` is the exact derivative of this discrete sum
(stencil transposes included), except that ``u**(-beta)`` is evaluated as
``max(|u|, eps_u)**(-beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .grid import Grid, forward_gradient, forward_gradient_adjoint
from .spaces import ExponentSet, multiphase_norm, sobolev_norm

__all__ = [
    "RegularizationPolicy", "EnergyBreakdown", "FiberTerms", "Functional",
    "energy", "energy_gradient", "nehari_derivative", "nehari_second",
    "hardy_functional", "hardy_constant", "HardyCheck", "DimensionUnsupported",
    "hardy_check_upper", "hardy_check_lower", "RUNLOG_HEADER",
]

RUNLOG_HEADER = "iter,lambda,rho_grad,hardy,source,singular,total,nehari_residual"


class DimensionUnsupported(ValueError):
    pass


@dataclass(frozen=True)
class RegularizationPolicy:
    """Floors for the two singularities.

    ``eps_u`` is the floor for ``|u|`` inside ``u**(-beta)``; when ``None`` it
    is ``eps_u_rel * max|u|``. ``eps_x`` floors ``|x|`` in the Hardy potential;
    ``None`` means half a grid spacing.
    """

    eps_u: float | None = None
    eps_x: float | None = None
    eps_u_rel: float = 1e-8

    def __post_init__(self):
        if self.eps_u is not None and not self.eps_u > 0:
            raise ValueError("eps_u must be positive")
        if self.eps_x is not None and not self.eps_x > 0:
            raise ValueError("eps_x must be positive")
        if not self.eps_u_rel > 0:
            raise ValueError("eps_u_rel must be positive")

    def floor_x(self, grid: Grid) -> float:
        return grid.h / 2 if self.eps_x is None else self.eps_x

    def floor_u(self, u) -> float:
        if self.eps_u is not None:
            return self.eps_u
        scale = float(np.max(np.abs(u))) if np.size(u) else 0.0
        return max(self.eps_u_rel * scale, 1e-300)


@dataclass
class EnergyBreakdown:
    rho_grad: float
    hardy: float
    source: float
    singular: float
    total: float
    lam: float

    def row(self, it: int, residual: float) -> str:
        vals = (self.lam, self.rho_grad, self.hardy, self.source, self.singular, self.total, residual)
        return f"{it}," + ",".join(repr(float(v)) for v in vals)


@dataclass
class FiberTerms:
    """``Phi(t) = sum c t**e`` split into its four groups."""

    groups: dict = field(default_factory=dict)   # name -> (coef, expo)

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([c for c, _ in self.groups.values()])

    @property
    def expo(self) -> np.ndarray:
        return np.concatenate([e for _, e in self.groups.values()])

    def packed(self):
        coef, expo = self.coef, self.expo
        return np.ascontiguousarray(coef), np.ascontiguousarray(expo)

    def moments(self, t, group: str | None = None) -> np.ndarray:
        """Rows ``(Phi, t Phi', t^2 Phi'' + t Phi')`` at each ``t``."""
        if group is None:
            c, e = self.packed()
        else:
            c, e = self.groups[group]
        return kernels.powsum_moments(c, e, t)

    def phi(self, t):
        return self.moments(t)[:, 0]

    def dphi(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.moments(t)[:, 1] / t

    def ddphi(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = self.moments(t)
        return (m[:, 2] - m[:, 1]) / (t * t)


def _pos_pow(a: np.ndarray, e) -> np.ndarray:
    """``a**e`` for ``a >= 0``, with ``0**e = 0`` for every ``e`` (also ``e <= 0``)."""
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = np.power(a[nz], np.broadcast_to(e, a.shape)[nz])
    return out


class Functional:
    """The discrete energy for fixed exponents, ``lam`` and regularisation.

    Node data are gathered once; the methods take full grid-shaped fields.
    """

    def __init__(self, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None):
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        self.es = es
        self.grid = g = es.grid
        self.lam = float(lam)
        self.reg = reg or RegularizationPolicy()
        self.vol = g.cell_volume
        I, S = g.interior, g.support
        self._I, self._S = I, S
        self.pI, self.qI, self.rI = es.p[I], es.q[I], es.r[I]
        self.mu1I, self.mu2I = es.mu1[I], es.mu2[I]
        self.sI, self.betaI = es.s[I], es.beta[I]
        self.m1I, self.m2I = es.m1[I], es.m2[I]
        self.pS, self.qS, self.rS = es.p[S], es.q[S], es.r[S]
        self.mu1S, self.mu2S = es.mu1[S], es.mu2[S]
        rx = np.maximum(g.radius[I], self.reg.floor_x(g))
        hw = float(es.hardy_weight)
        self.wp = hw * rx ** (-self.pI)
        self.wq = hw * self.mu1I * rx ** (-self.qI)
        self.wr = hw * self.mu2I * rx ** (-self.rI)
        self._classes = None

    # -- node data ------------------------------------------------------------

    def _grad(self, u):
        g = forward_gradient(self.grid, u)[:, self._S]
        return g, np.sqrt(np.sum(g * g, axis=0))

    # -- scalar functionals ---------------------------------------------------

    def breakdown(self, u) -> EnergyBreakdown:
        u = np.asarray(u, dtype=float)
        _, gm = self._grad(u)
        a = np.abs(u[self._I])
        v = self.vol
        rho = np.sum(_pos_pow(gm, self.pS) / self.pS + self.mu1S * _pos_pow(gm, self.qS) / self.qS
                     + self.mu2S * _pos_pow(gm, self.rS) / self.rS) * v
        hardy = np.sum(self.wp * _pos_pow(a, self.pI) / self.pI + self.wq * _pos_pow(a, self.qI) / self.qI
                       + self.wr * _pos_pow(a, self.rI) / self.rI) * v
        source = np.sum(self.m1I * _pos_pow(a, self.sI) / self.sI) * v
        e_sing = 1 - self.betaI
        singular = self.lam * np.sum(self.m2I * _pos_pow(a, e_sing) / e_sing) * v
        rho, hardy, source, singular = map(float, (rho, hardy, source, singular))
        return EnergyBreakdown(rho, hardy, source, singular, rho + hardy - source - singular, self.lam)

    def __call__(self, u) -> float:
        return self.breakdown(u).total

    def nehari_parts(self, u) -> dict:
        """Terms of ``<J'(u), u>`` (``first``) and of its ray derivative (``second``)."""
        u = np.asarray(u, dtype=float)
        _, gm = self._grad(u)
        a = np.abs(u[self._I])
        v = self.vol
        gp, gq, gr = _pos_pow(gm, self.pS), self.mu1S * _pos_pow(gm, self.qS), self.mu2S * _pos_pow(gm, self.rS)
        hp, hq, hr = self.wp * _pos_pow(a, self.pI), self.wq * _pos_pow(a, self.qI), self.wr * _pos_pow(a, self.rI)
        src = self.m1I * _pos_pow(a, self.sI)
        e_sing = 1 - self.betaI
        sing = self.lam * self.m2I * _pos_pow(a, e_sing)
        first = {
            "rho": float(np.sum(gp + gq + gr)) * v,
            "hardy": float(np.sum(hp + hq + hr)) * v,
            "source": float(np.sum(src)) * v,
            "singular": float(np.sum(sing)) * v,
        }
        second = {
            "rho": float(np.sum(self.pS * gp + self.qS * gq + self.rS * gr)) * v,
            "hardy": float(np.sum(self.pI * hp + self.qI * hq + self.rI * hr)) * v,
            "source": float(np.sum(self.sI * src)) * v,
            "singular": float(np.sum(e_sing * sing)) * v,
        }
        return {"first": first, "second": second}

    def nehari_derivative(self, u) -> float:
        f = self.nehari_parts(u)["first"]
        return f["rho"] + f["hardy"] - f["source"] - f["singular"]

    def nehari_second(self, u) -> float:
        s = self.nehari_parts(u)["second"]
        return s["rho"] + s["hardy"] - s["source"] - s["singular"]

    # -- gradient ---------------------------------------------------------------

    def gradient(self, u) -> np.ndarray:
        """Residual field ``G`` with ``sum(G * phi) * h**N = dJ(u)[phi]``; zero off the interior."""
        u = np.asarray(u, dtype=float)
        grid = self.grid
        g, gm = self._grad(u)
        coeff = (_pos_pow(gm, self.pS - 2) + self.mu1S * _pos_pow(gm, self.qS - 2)
                 + self.mu2S * _pos_pow(gm, self.rS - 2))
        flux = np.zeros((grid.dim,) + grid.shape)
        flux[:, self._S] = coeff * g
        out = forward_gradient_adjoint(grid, flux)

        ui = u[self._I]
        a = np.abs(ui)
        sgn = np.sign(ui)
        local = sgn * (self.wp * _pos_pow(a, self.pI - 1) + self.wq * _pos_pow(a, self.qI - 1)
                       + self.wr * _pos_pow(a, self.rI - 1))
        local -= sgn * self.m1I * _pos_pow(a, self.sI - 1)
        if self.lam:
            floor = self.reg.floor_u(u)
            # u = 0 is approached from the positive cone
            direction = np.where(ui < 0, -1.0, 1.0)
            local -= self.lam * self.m2I * np.maximum(a, floor) ** (-self.betaI) * direction
        result = np.zeros(grid.shape)
        result[self._I] = out[self._I] + local
        return result

    # -- fibering --------------------------------------------------------------

    def _exponent_classes(self):
        """Per group: unique exponents and the node-term -> class index map."""
        if getattr(self, "_classes", None) is None:
            e_sing = 1 - self.betaI
            raw = {
                "rho": np.concatenate([self.pS, self.qS, self.rS]),
                "hardy": np.concatenate([self.pI, self.qI, self.rI]),
                "source": self.sI,
                "singular": e_sing,
            }
            self._classes = {k: np.unique(v, return_inverse=True) for k, v in raw.items()}
        return self._classes

    def fiber_terms(self, u) -> FiberTerms:
        """Coefficients of ``Phi(t) = J(t u)`` with equal exponents merged."""
        u = np.asarray(u, dtype=float)
        _, gm = self._grad(u)
        a = np.abs(u[self._I])
        v = self.vol
        pS, qS, rS = self.pS, self.qS, self.rS
        pI, qI, rI = self.pI, self.qI, self.rI
        e_sing = 1 - self.betaI
        coefs = {
            "rho": np.concatenate([_pos_pow(gm, pS) / pS, self.mu1S * _pos_pow(gm, qS) / qS,
                                   self.mu2S * _pos_pow(gm, rS) / rS]) * v,
            "hardy": np.concatenate([self.wp * _pos_pow(a, pI) / pI, self.wq * _pos_pow(a, qI) / qI,
                                     self.wr * _pos_pow(a, rI) / rI]) * v,
            "source": -self.m1I * _pos_pow(a, self.sI) / self.sI * v,
            "singular": -self.lam * self.m2I * _pos_pow(a, e_sing) / e_sing * v,
        }
        groups = {}
        for name, (expo, inverse) in self._exponent_classes().items():
            merged = np.bincount(inverse, weights=coefs[name], minlength=expo.size)
            groups[name] = _drop_zero(merged, expo)
        return FiberTerms(groups)


def _drop_zero(coef, expo):
    keep = coef != 0
    return np.ascontiguousarray(coef[keep]), np.ascontiguousarray(expo[keep])


# ---------------------------------------------------------------------------
# module-level operations


def energy(u, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None) -> EnergyBreakdown:
    return Functional(es, lam, reg).breakdown(u)


def energy_gradient(u, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None) -> np.ndarray:
    return Functional(es, lam, reg).gradient(u)


def nehari_derivative(u, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None) -> float:
    """``<J'(u), u>``."""
    return Functional(es, lam, reg).nehari_derivative(u)


def nehari_second(u, es: ExponentSet, lam: float, reg: RegularizationPolicy | None = None) -> float:
    """Ray derivative of ``<J'(tu), tu>`` at ``t = 1``; equals ``Phi''(1) + Phi'(1)``."""
    return Functional(es, lam, reg).nehari_second(u)


# ---------------------------------------------------------------------------
# Hardy-type inequalities


def hardy_functional(u, es: ExponentSet, reg: RegularizationPolicy | None = None,
                     weighted: bool = True) -> float:
    """``F(u)`` (``weighted``) or the same integral without the ``1/p``, ``1/q``, ``1/r`` factors."""
    g = es.grid
    reg = reg or RegularizationPolicy()
    I = g.interior
    a = np.abs(np.asarray(u, dtype=float))[I]
    rx = np.maximum(g.radius[I], reg.floor_x(g))
    p, q, r = es.p[I], es.q[I], es.r[I]
    terms = []
    for w, e in ((1.0, p), (es.mu1[I], q), (es.mu2[I], r)):
        t = w * _pos_pow(a / rx, e)
        terms.append(t / e if weighted else t)
    return float(np.sum(terms[0] + terms[1] + terms[2])) * g.cell_volume


def hardy_constant(t: float, n: int) -> float:
    """``(t / ((N - 2)(t - 1)))**t``."""
    if n < 3:
        raise DimensionUnsupported(f"Hardy constant needs N >= 3, got N={n}")
    return (t / ((n - 2) * (t - 1))) ** t


@dataclass
class HardyCheck:
    lhs: float
    rhs: float
    passed: bool
    details: dict = field(default_factory=dict)


def hardy_check_upper(u, es: ExponentSet, c_hat_m: float, reg: RegularizationPolicy | None = None) -> HardyCheck:
    """``F(u) <= C_N(p, r) ||u||_{1,T,0}**phi0``.

    ``C_N(p, r) = c_hat_m (1 + |mu1|_inf + |mu2|_inf) max(C_N(r+), C_N(p-)) / p-``,
    with ``phi0 = p-`` below unit norm and ``r+`` otherwise. ``c_hat_m``
    comes from :func:`mpnehari.spaces.estimate_embedding_constants`.
    """
    g = es.grid
    n = g.dim
    p_lo, r_hi = es.lo("p"), es.hi("r")
    c_r, c_p = hardy_constant(r_hi, n), hardy_constant(p_lo, n)
    mu1, mu2 = es.mu_sup
    const = c_hat_m * (1 + mu1 + mu2) * max(c_r, c_p) / p_lo
    u = g.restrict(u)
    lhs = hardy_functional(u, es, reg)
    norm = sobolev_norm(g, u, es)
    phi0 = p_lo if norm < 1 else r_hi
    rhs = const * norm ** phi0
    return HardyCheck(lhs, rhs, lhs <= rhs * (1 + 1e-9), {
        "C_N": const, "C_N_r": c_r, "C_N_p": c_p, "c_hat_M": c_hat_m,
        "norm": norm, "phi0": phi0,
    })


def hardy_check_lower(u, es: ExponentSet, reg: RegularizationPolicy | None = None) -> HardyCheck:
    """``sum |u|^h / |x|^h (unweighted) >= x_*^(-kappa) ||u||_T**tau``.

    ``x_*`` is the largest interior ``|x|`` rounded up to an integer, and
    ``tau`` is ``p-`` when ``||u||_T >= 1`` and ``r+`` below, matching which
    side of unit norm the modular/norm sandwich is used on. The ``x_*``
    power ``kappa`` is ``r+`` when ``x_* > 1`` and irrelevant otherwise.
    """
    g = es.grid
    u = g.restrict(u)
    lhs = hardy_functional(u, es, reg, weighted=False)
    norm = multiphase_norm(g, u, es)
    p_lo, r_hi = es.lo("p"), es.hi("r")
    tau = p_lo if norm >= 1 else r_hi
    r_max = float(g.radius[g.interior].max())
    x_star = float(max(1, math.ceil(r_max - 1e-12)))
    x_star_coordinate = g.dim * float(np.max(np.abs(g.points[g.interior])))
    rhs = x_star ** (-r_hi) * norm ** tau
    return HardyCheck(lhs, rhs, lhs >= rhs * (1 - 1e-9), {
        "norm_T": norm, "tau": tau, "case": "norm>=1" if norm >= 1 else "norm<1",
        "x_star": x_star, "x_star_coordinate": x_star_coordinate, "max_radius": r_max,
    })
