"""Energy minimisation on the two Nehari branches.

Each branch is minimised by projected descent: a Sobolev (discrete Dirichlet
Laplacian) preconditioned gradient step, clipping to the positive cone, and
radial re-projection onto the requested branch. Steps are accepted by Armijo
backtracking on the projected energy. Several positive starting directions
are tried and the lowest branch energy wins.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import math
import warnings

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .energy import RUNLOG_HEADER, Functional, RegularizationPolicy
from .grid import Grid, write_field_csv
from .nehari import (
    Branch, NoRoot, TOL_CLASS, TOL_ROOT, find_roots, lambda_bounds, nehari_scale, select_branch,
    T_SPAN, N_SCAN,
)
from .spaces import ExponentSet, HypothesisReport, sobolev_norm, validate

__all__ = [
    "SolverConfig", "BranchResult", "SolveReport", "SweepRow", "SweepResult",
    "BranchVanished", "DistinctnessFailure", "SMALL_LAMBDA_WARNING",
    "initial_battery", "minimize_branch", "solve_two", "lambda_sweep", "SWEEP_HEADER",
]

SWEEP_HEADER = "lambda,m_plus,m_minus,res_plus,res_minus,found_plus,found_minus,delta_obs"
SMALL_LAMBDA_WARNING = "lambda is not below the analytic threshold"


class BranchVanished(RuntimeError):
    def __init__(self, branch, lam: float):
        self.branch = Branch(branch)
        self.lam = lam
        super().__init__(f"no {self.branch} root from any starting direction at lambda={lam!r}")


class DistinctnessFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 500
    grad_tol: float = 1e-6
    energy_tol: float = 1e-10
    battery_size: int = 4
    seed: int = 0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    preconditioned: bool = True
    workers: int = 1
    reg: RegularizationPolicy = field(default_factory=RegularizationPolicy)

    def __post_init__(self):
        if self.max_iters < 1 or self.battery_size < 1 or self.max_backtracks < 1 or self.workers < 1:
            raise ValueError("iteration counts, battery size and workers must be >= 1")
        for name in ("grad_tol", "energy_tol", "armijo_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reg"] = {k: v for k, v in asdict(self.reg).items()}
        return d


# ---------------------------------------------------------------------------
# starting directions


def initial_battery(grid: Grid, size: int, seed: int = 0) -> list:
    """Strictly positive interior fields: radial bumps, then randomly perturbed ones.

    Member ``k`` depends only on ``(seed, k)``.
    """
    x = grid.points
    inner = x[grid.interior]
    centre = inner.mean(axis=0)
    half = float(np.sqrt(np.sum((inner - centre) ** 2, axis=1)).max()) + grid.h
    # scaled distance from the domain centre: below 1 on every interior node
    rho = np.sqrt(np.sum((x - centre) ** 2, axis=-1)) / half
    envelope = np.clip(1 - rho ** 2, 0, None)
    radii = (1.0, 0.5, 0.75, 0.35)
    children = np.random.SeedSequence(seed).spawn(size)
    out = []
    for k in range(size):
        R = radii[k % len(radii)]
        u = envelope * (np.clip(1 - (rho / R) ** 2, 0, None) + 0.05)
        if k >= len(radii):
            rng = np.random.default_rng(children[k])
            pert = np.ones(grid.shape)
            for _ in range(3):
                freq = rng.uniform(0.5, 2.0, grid.dim)
                phase = rng.uniform(0, 2 * np.pi)
                pert += 0.3 * rng.uniform(-1, 1) * np.cos(np.pi * np.sum(freq * (x - centre) / half, axis=-1)
                                                         + phase)
            u = u * np.clip(pert, 0.1, None)
        u = grid.restrict(u)
        out.append(u / np.max(u))
    return out


# ---------------------------------------------------------------------------
# preconditioner


class _Laplacian:
    """Dirichlet form ``sum |D+ u|^2 h^N`` on the interior unknowns."""

    def __init__(self, grid: Grid):
        self.grid = grid
        idx = -np.ones(grid.shape, dtype=np.int64)
        mask = grid.interior
        self.n = int(mask.sum())
        idx[mask] = np.arange(self.n)
        rows, cols = [np.arange(self.n)], [np.arange(self.n)]
        vals = [np.full(self.n, 2.0 * grid.dim)]
        for ax in range(grid.dim):
            a = [slice(None)] * grid.dim
            b = [slice(None)] * grid.dim
            a[ax], b[ax] = slice(0, -1), slice(1, None)
            i, j = idx[tuple(a)].ravel(), idx[tuple(b)].ravel()
            both = (i >= 0) & (j >= 0)
            i, j = i[both], j[both]
            rows += [i, j]
            cols += [j, i]
            vals += [-np.ones(i.size), -np.ones(i.size)]
        K = coo_matrix((np.concatenate(vals) / grid.h ** 2,
                        (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n))
        self.K = K.tocsc()
        self._lu = splu(self.K)

    def solve(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out[self.grid.interior] = self._lu.solve(g[self.grid.interior])
        return out

    def norm(self, u: np.ndarray) -> float:
        v = u[self.grid.interior]
        return math.sqrt(max(float(v @ (self.K @ v)), 0.0) * self.grid.cell_volume)


# ---------------------------------------------------------------------------
# branch minimisation


@dataclass
class BranchResult:
    branch: Branch
    u: np.ndarray
    energy: float
    iterations: int
    grad_norm: float          # relative dual-norm of the residual, see _dual_gradient
    nehari_residual: float    # |<J'(u), u>|
    nehari_scale: float
    delta_obs: float          # smallest ||u||_{1,T,0} over accepted iterates
    start_index: int
    converged: bool
    trace: list               # EnergyBreakdown rows, one per accepted iterate
    residual_trace: list
    starts: list              # per-start summary dicts


@dataclass
class _State:
    u: np.ndarray
    energy: float
    residual: float
    scale: float
    norm: float


def _project(f: Functional, es: ExponentSet, v: np.ndarray, branch: Branch):
    """Root of ``branch`` on the ray through ``v`` as a state, or ``None``."""
    if not np.any(v):
        return None
    norm_v = sobolev_norm(es.grid, v, es)
    if not norm_v > 0:
        return None
    terms = f.fiber_terms(v)
    try:
        roots, _ = find_roots(terms, T_SPAN[0] / norm_v, T_SPAN[1] / norm_v, N_SCAN, TOL_CLASS)
    except NoRoot:
        return None
    root = select_branch(roots, branch)
    if root is None:
        return None
    u = root.t * v
    # residual and class re-checked on the projected point itself
    t_terms = f.fiber_terms(u)
    phi, s1, s2 = t_terms.moments(1.0)[0]
    scale, rho = nehari_scale(t_terms, 1.0)
    d2 = s2 - s1
    ok_class = d2 > TOL_CLASS * rho if branch is Branch.MPLUS else d2 < -TOL_CLASS * rho
    if not ok_class:
        return None
    return _State(u=u, energy=float(phi), residual=float(abs(s1)), scale=float(scale),
                  norm=root.t * norm_v)


def _dual_gradient(f: Functional, lap: _Laplacian | None, u: np.ndarray, scale: float):
    """Descent direction ``d``, ``<G, d>`` and the relative residual norm."""
    G = f.gradient(u)
    vol = f.grid.cell_volume
    d = lap.solve(G) if lap is not None else G
    gd = float(np.sum(G * d)) * vol
    dual = math.sqrt(max(gd, 0.0))
    unorm = lap.norm(u) if lap is not None else math.sqrt(float(np.sum(u * u)) * vol)
    rel = dual * unorm / scale if scale > 0 else math.inf
    return d, gd, rel


def _descend(f: Functional, es: ExponentSet, lap, branch: Branch, u0: np.ndarray, cfg: SolverConfig):
    state = _project(f, es, u0, branch)
    if state is None:
        return None
    trace = [f.breakdown(state.u)]
    res_trace = [state.residual]
    delta = state.norm
    alpha = None
    converged = False
    steps = 0
    drop = math.inf
    while True:
        d, gd, rel = _dual_gradient(f, lap, state.u, state.scale)
        if not gd > 0 or (rel < cfg.grad_tol and drop <= cfg.energy_tol * max(abs(state.energy), 1e-300)):
            converged = True
            break
        if steps == cfg.max_iters:
            break
        if alpha is None:
            alpha = 0.1 * float(np.max(state.u)) / max(float(np.max(np.abs(d))), 1e-300)
        else:
            alpha = alpha / cfg.backtrack
        accepted = None
        for _ in range(cfg.max_backtracks):
            cand = _project(f, es, np.maximum(state.u - alpha * d, 0.0), branch)
            if cand is not None and cand.energy <= state.energy - cfg.armijo_c * alpha * gd:
                accepted = cand
                break
            alpha *= cfg.backtrack
        if accepted is None:
            # no admissible decrease left at working precision
            converged = rel < cfg.grad_tol
            break
        drop = state.energy - accepted.energy
        state = accepted
        steps += 1
        trace.append(f.breakdown(state.u))
        res_trace.append(state.residual)
        delta = min(delta, state.norm)
    return state, steps, rel, converged, trace, res_trace, delta


def minimize_branch(branch, es: ExponentSet, lam: float, cfg: SolverConfig | None = None, *,
                    starts: list | None = None, functional: Functional | None = None,
                    _lap=None) -> BranchResult:
    """Best-of-battery minimiser of the energy on ``branch`` (``Mplus`` or ``Mminus``)."""
    branch = Branch(branch)
    if branch is Branch.MZERO:
        raise ValueError("only Mplus and Mminus can be minimised")
    cfg = cfg or SolverConfig()
    star = lambda_bounds(es).lambda_star
    if star is not None and lam >= star:
        warnings.warn(f"{SMALL_LAMBDA_WARNING}: lambda={lam!r} >= {star!r}", RuntimeWarning, stacklevel=2)
    f = functional or Functional(es, lam, cfg.reg)
    lap = _lap if _lap is not None else (_Laplacian(es.grid) if cfg.preconditioned else None)
    starts = starts if starts is not None else initial_battery(es.grid, cfg.battery_size, cfg.seed)

    def run(k):
        return k, _descend(f, es, lap, branch, starts[k], cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            outcomes = list(pool.map(run, range(len(starts))))
    else:
        outcomes = [run(k) for k in range(len(starts))]

    best = None
    summary = []
    for k, out in outcomes:
        if out is None:
            summary.append({"start": k, "found": False})
            continue
        state, it, rel, conv, trace, res_trace, delta = out
        summary.append({"start": k, "found": True, "energy": state.energy, "iterations": it,
                        "grad_norm": rel, "converged": conv})
        # ties go to the lower index, so the choice is scheduling-independent
        if best is None or state.energy < best[1][0].energy:
            best = (k, out)
    if best is None:
        raise BranchVanished(branch, lam)
    k, (state, it, rel, conv, trace, res_trace, delta) = best
    return BranchResult(
        branch=branch, u=state.u, energy=state.energy, iterations=it, grad_norm=rel,
        nehari_residual=state.residual, nehari_scale=state.scale,
        delta_obs=min(o[1][6] for o in outcomes if o[1] is not None),
        start_index=k, converged=conv, trace=trace, residual_trace=res_trace, starts=summary,
    )


# ---------------------------------------------------------------------------
# both branches


@dataclass
class SolveReport:
    lam: float
    u_plus: np.ndarray
    u_minus: np.ndarray
    m_plus: float
    m_minus: float
    nehari_residuals: tuple
    nehari_scales: tuple
    iterations: tuple
    grad_norms: tuple
    converged: tuple
    delta_obs: float
    distance: float
    lambda_bounds: object
    hypothesis: HypothesisReport
    seed: int
    config: SolverConfig
    plus: BranchResult = field(repr=False, default=None)
    minus: BranchResult = field(repr=False, default=None)

    def to_keyvalue(self) -> str:
        def r(v):
            return repr(float(v))
        lines = [
            f"lambda={r(self.lam)}",
            f"m_plus={r(self.m_plus)}",
            f"m_minus={r(self.m_minus)}",
            f"nehari_residual_plus={r(self.nehari_residuals[0])}",
            f"nehari_residual_minus={r(self.nehari_residuals[1])}",
            f"nehari_scale_plus={r(self.nehari_scales[0])}",
            f"nehari_scale_minus={r(self.nehari_scales[1])}",
            f"iterations_plus={self.iterations[0]}",
            f"iterations_minus={self.iterations[1]}",
            f"grad_norm_plus={r(self.grad_norms[0])}",
            f"grad_norm_minus={r(self.grad_norms[1])}",
            f"converged_plus={str(self.converged[0]).lower()}",
            f"converged_minus={str(self.converged[1]).lower()}",
            f"delta_obs={r(self.delta_obs)}",
            f"distance_plus_minus={r(self.distance)}",
            f"seed={self.seed}",
        ]
        for k, v in self.config.to_dict().items():
            if isinstance(v, dict):
                lines += [f"config.{k}.{kk}={vv!r}" for kk, vv in v.items()]
            else:
                lines.append(f"config.{k}={v!r}")
        lines.append(self.lambda_bounds.to_keyvalue().rstrip("\n"))
        lines.append(self.hypothesis.to_keyvalue().rstrip("\n"))
        return "\n".join(lines) + "\n"

    def write(self, directory, grid: Grid) -> dict:
        from pathlib import Path
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"report": d / "report.txt", "u_plus": d / "u_plus.csv", "u_minus": d / "u_minus.csv",
                 "runlog_plus": d / "runlog_plus.csv", "runlog_minus": d / "runlog_minus.csv"}
        paths["report"].write_text(self.to_keyvalue())
        write_field_csv(grid, self.u_plus, paths["u_plus"])
        write_field_csv(grid, self.u_minus, paths["u_minus"])
        for key, res in (("runlog_plus", self.plus), ("runlog_minus", self.minus)):
            rows = [RUNLOG_HEADER] + [b.row(i, rr) for i, (b, rr) in
                                      enumerate(zip(res.trace, res.residual_trace))]
            paths[key].write_text("\n".join(rows) + "\n")
        return paths


def solve_two(es: ExponentSet, lam: float, cfg: SolverConfig | None = None) -> SolveReport:
    """Minimisers on M+ and M-, checked to be distinct."""
    cfg = cfg or SolverConfig()
    f = Functional(es, lam, cfg.reg)
    lap = _Laplacian(es.grid) if cfg.preconditioned else None
    starts = initial_battery(es.grid, cfg.battery_size, cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plus = minimize_branch(Branch.MPLUS, es, lam, cfg, starts=starts, functional=f, _lap=lap)
        minus = minimize_branch(Branch.MMINUS, es, lam, cfg, starts=starts, functional=f, _lap=lap)
    if caught:
        warnings.warn(str(caught[0].message), RuntimeWarning, stacklevel=2)
    dist = sobolev_norm(es.grid, plus.u - minus.u, es)
    if not dist > 10 * cfg.grad_tol:
        raise DistinctnessFailure(f"||u_plus - u_minus|| = {dist:.3e} <= {10 * cfg.grad_tol:.3e}")
    return SolveReport(
        lam=float(lam), u_plus=plus.u, u_minus=minus.u, m_plus=f(plus.u), m_minus=f(minus.u),
        nehari_residuals=(plus.nehari_residual, minus.nehari_residual),
        nehari_scales=(plus.nehari_scale, minus.nehari_scale),
        iterations=(plus.iterations, minus.iterations),
        grad_norms=(plus.grad_norm, minus.grad_norm),
        converged=(plus.converged, minus.converged),
        delta_obs=min(plus.delta_obs, minus.delta_obs), distance=dist,
        lambda_bounds=lambda_bounds(es), hypothesis=validate(es), seed=cfg.seed, config=cfg,
        plus=plus, minus=minus,
    )


# ---------------------------------------------------------------------------
# lambda sweep


@dataclass
class SweepRow:
    lam: float
    m_plus: float | None
    m_minus: float | None
    res_plus: float | None
    res_minus: float | None
    found_plus: bool
    found_minus: bool
    delta_obs: float | None

    def csv(self) -> str:
        def v(x):
            return "" if x is None else repr(float(x))
        return ",".join([v(self.lam), v(self.m_plus), v(self.m_minus), v(self.res_plus),
                         v(self.res_minus), str(self.found_plus).lower(),
                         str(self.found_minus).lower(), v(self.delta_obs)])


@dataclass
class SweepResult:
    rows: list
    lambda_star_emp: float | None
    lambda_star_analytic: float | None
    anomaly: bool

    def to_csv(self) -> str:
        return "\n".join([SWEEP_HEADER] + [r.csv() for r in self.rows]) + "\n"

    def summary(self) -> str:
        def v(x):
            return "none" if x is None else repr(float(x))
        return (f"lambda_star_emp={v(self.lambda_star_emp)}\n"
                f"lambda_star_analytic={v(self.lambda_star_analytic)}\n"
                f"anomaly={str(self.anomaly).lower()}\n")


def lambda_sweep(es: ExponentSet, lambdas, cfg: SolverConfig | None = None) -> SweepResult:
    """Run both branches per lambda; failures are recorded, not raised."""
    cfg = cfg or SolverConfig()
    lambdas = [float(v) for v in lambdas]
    if any(v <= 0 for v in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda list must be positive and strictly increasing")
    star = lambda_bounds(es).lambda_star
    rows = []
    if lambdas:
        lap = _Laplacian(es.grid) if cfg.preconditioned else None
        starts = initial_battery(es.grid, cfg.battery_size, cfg.seed)
    for lam in lambdas:
        f = Functional(es, lam, cfg.reg)
        found = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for br in (Branch.MPLUS, Branch.MMINUS):
                try:
                    found[br] = minimize_branch(br, es, lam, cfg, starts=starts, functional=f, _lap=lap)
                except BranchVanished:
                    found[br] = None
        p, m = found[Branch.MPLUS], found[Branch.MMINUS]
        deltas = [x.delta_obs for x in (p, m) if x is not None]
        rows.append(SweepRow(
            lam=lam, m_plus=p.energy if p else None, m_minus=m.energy if m else None,
            res_plus=p.nehari_residual if p else None, res_minus=m.nehari_residual if m else None,
            found_plus=p is not None, found_minus=m is not None,
            delta_obs=min(deltas) if deltas else None,
        ))
    both = [r.lam for r in rows if r.found_plus and r.found_minus]
    emp = max(both) if both else None
    # the analytic bound is sufficient, so losing a branch below it is suspicious
    anomaly = star is not None and any(r.lam < star and not (r.found_plus and r.found_minus) for r in rows)
    return SweepResult(rows, emp, star, anomaly)
