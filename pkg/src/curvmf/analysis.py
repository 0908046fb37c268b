"""Residuals, inequality deficits, sharpness sequences and the lambda / perturbation experiments."""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov

from .exceptions import DomainError
from .meanfield import (
    EXP_GUARD,
    F_chi,
    ProblemSpec,
    _evaluate,
    project_mean_zero,
    residual_weights,
)
from .minimize import SolverConfig, minimize, project_symmetric, _relaxed

EIGHT_PI = 8.0 * math.pi


def thread_count() -> int:
    """Worker cap from CURVMF_THREADS (default: cpu count)."""
    raw = os.environ.get("CURVMF_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            warnings.warn(f"ignoring CURVMF_THREADS={raw!r}", RuntimeWarning, stacklevel=2)
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map over independent work items."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# residuals


def gauss_bonnet_residual(spec: ProblemSpec, v) -> float:
    """|int K e^v + int_bdry h e^{v/2} - 2 pi chi|."""
    v = np.asarray(v, dtype=float)
    a, w = spec.ops.vertex_areas, spec.ops.boundary_weights
    total = (spec.K * np.exp(v)) @ a + (spec.h * np.exp(0.5 * v[spec.ops.boundary_vertices])) @ w
    return abs(float(total) - 2 * math.pi * spec.chi)


def pde_residual(spec: ProblemSpec, u, *, per_node: bool = False):
    """Weighted sup-norm of the projected gradient of J: the weak-form residual of the mean-field system.

    Same quantity the minimizer's grad_tol test uses.
    """
    st = _evaluate(spec, np.asarray(u, dtype=float), strict=not _relaxed(spec))
    r = np.abs(st.grad / residual_weights(spec.ops))
    return r if per_node else float(r.max())


# ---------------------------------------------------------------------------
# deficits


def _shifted_exp_integrals(ops, u):
    """(log-shift m, int e^{u-m}, int_bdry e^{(u-m)/2})."""
    m = float(u.max())
    m = m if m > EXP_GUARD else 0.0
    A = float(np.exp(u - m) @ ops.vertex_areas)
    B = float(np.exp(0.5 * (u[ops.boundary_vertices] - m)) @ ops.boundary_weights)
    return m, A, B


def log_boundary_term(ops, u) -> float:
    """log( sqrt(B^2 + 8 pi A) + B ) with A = int e^u, B = int_bdry e^{u/2}."""
    m, A, B = _shifted_exp_integrals(ops, u)
    return 0.5 * m + math.log(math.sqrt(B * B + EIGHT_PI * A) + B)


def tm_deficit(mesh, ops, u, constant: float = 1.0 / (16 * math.pi)) -> float:
    """log(sqrt(B^2 + 8 pi A) + B) - constant * int |grad u|^2, after zero-mean projection."""
    u = project_mean_zero(ops, u)
    return log_boundary_term(ops, u) - constant * float(u @ (ops.stiffness @ u))


def tm_symmetric_deficit(mesh, orbits, ops, u, eps: float) -> float:
    """Same as tm_deficit with the improved constant (1 + eps) / (32 pi); u must be orbit-symmetric."""
    u = np.asarray(u, dtype=float)
    gap = float(np.max(np.abs(project_symmetric(orbits, u) - u)))
    if gap > 1e-10 * (1.0 + float(np.max(np.abs(u)))):
        raise ValueError(f"field is not symmetric under the orbit map (max gap {gap:.3e})")
    return tm_deficit(mesh, ops, u, constant=(1.0 + eps) / (32 * math.pi))


def elementary_bound(alpha, beta):
    """(lhs, rhs) of sqrt(beta^2 + 8 pi alpha) + beta <= (sqrt(1 + 8 pi) + 1) max(sqrt(alpha), beta)."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    lhs = np.sqrt(beta**2 + EIGHT_PI * alpha) + beta
    rhs = (math.sqrt(1 + EIGHT_PI) + 1) * np.maximum(np.sqrt(alpha), beta)
    return lhs, rhs


def _require_nonpositive_K(spec):
    if np.any(spec.K > 0):
        raise ValueError("the trace quotient needs K <= 0 everywhere")
    if not np.any(spec.K < 0):
        raise ValueError("the trace quotient needs K not identically zero")


def quotient_max(spec: ProblemSpec) -> float:
    """D_M = max over boundary vertices of |h| / sqrt|K|."""
    Kb = np.abs(spec.K_boundary)
    with np.errstate(divide="ignore"):
        q = np.where(Kb > 0, np.abs(spec.h) / np.sqrt(Kb), np.where(spec.h == 0, 0.0, np.inf))
    return float(q.max())


def trace_quotient(spec: ProblemSpec, u) -> float:
    """(int_bdry h e^{u/2})^2 / int |K| e^u."""
    _require_nonpositive_K(spec)
    u = np.asarray(u, dtype=float)
    m = float(u.max())
    m = m if m > EXP_GUARD else 0.0
    den = float((np.abs(spec.K) * np.exp(u - m)) @ spec.ops.vertex_areas)
    num = float((spec.h * np.exp(0.5 * (u[spec.ops.boundary_vertices] - m))) @ spec.ops.boundary_weights)
    return num * num / den


def trace_deficit(spec: ProblemSpec, u, eps: float) -> float:
    u = np.asarray(u, dtype=float)
    E = float(u @ (spec.ops.stiffness @ u))
    return trace_quotient(spec, u) - 0.25 * (quotient_max(spec) + eps) ** 2 * E


@dataclass
class DeficitReport:
    family: str
    records: list  # (parameter, lhs, rhs, deficit)
    seed: Optional[int] = None
    concentrates_as: str = "decreasing"  # how the sweep parameter moves toward concentration

    @property
    def deficits(self) -> np.ndarray:
        return np.array([r[3] for r in self.records], dtype=float)

    @property
    def parameters(self) -> np.ndarray:
        return np.array([r[0] for r in self.records], dtype=float)

    @property
    def max_deficit(self) -> float:
        return float(self.deficits.max())

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.deficits)))

    @property
    def monotonicity(self) -> str:
        d = np.diff(self.deficits)
        if np.all(d > 0):
            return "increasing"
        if np.all(d < 0):
            return "decreasing"
        return "non-monotone"

    def growth_rate(self, tail: float = 0.5) -> float:
        """Least-squares slope of the deficit over the tail of a sweep.

        Abscissa: log(1/p) for sweeps concentrating as p decreases (bubble scales),
        log(1 + p) for sweeps concentrating as p increases (amplitudes).
        """
        p, d = self.parameters, self.deficits
        k = max(2, int(round(len(p) * tail)))
        x = -np.log(p[-k:]) if self.concentrates_as == "decreasing" else np.log1p(p[-k:])
        return float(np.polyfit(x, d[-k:], 1)[0])

    def verdict(self, rate_tol: float = 0.1) -> str:
        if not self.finite:
            return "non-finite"
        if len(self.records) >= 4 and self.growth_rate() > rate_tol:
            return "unbounded"
        return "bounded"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["parameter", "lhs", "rhs", "deficit"])
            for rec in self.records:
                wr.writerow([f"{float(x):.17g}" for x in rec])

    def summary(self) -> dict:
        return {
            "experiment": self.family,
            "verdict": self.verdict(),
            "max_deficit": self.max_deficit,
            "samples": len(self.records),
            "seed": self.seed,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def deficit_report(family, ops, fields, params, constant, seed=None, concentrates_as="decreasing") -> DeficitReport:
    """Tabulate lhs = log term, rhs = constant * E and their difference for each field."""

    def one(u):
        u = project_mean_zero(ops, u)
        lhs = log_boundary_term(ops, u)
        rhs = constant * float(u @ (ops.stiffness @ u))
        return lhs, rhs

    rows = parallel_map(one, fields)
    return DeficitReport(family, [(float(p), l, r, l - r) for p, (l, r) in zip(params, rows)], seed, concentrates_as)


def trace_report(family, spec, fields, params, eps, seed=None, concentrates_as="increasing") -> DeficitReport:
    coef = 0.25 * (quotient_max(spec) + eps) ** 2

    def one(u):
        u = np.asarray(u, dtype=float)
        return trace_quotient(spec, u), coef * float(u @ (spec.ops.stiffness @ u))

    rows = parallel_map(one, fields)
    return DeficitReport(family, [(float(p), l, r, l - r) for p, (l, r) in zip(params, rows)], seed, concentrates_as)


# ---------------------------------------------------------------------------
# test-field batteries


class DistanceBank:
    """Cache of single-source edge-path distance fields."""

    def __init__(self, mesh):
        self.mesh = mesh
        self._cache = {}

    def __call__(self, vertex: int) -> np.ndarray:
        vertex = int(vertex)
        if vertex not in self._cache:
            self._cache[vertex] = self.mesh.distance_from([vertex])
        return self._cache[vertex]


def random_smooth_field(bank: DistanceBank, rng, *, n_modes=4, amplitude=1.0, length=None) -> np.ndarray:
    """Sum of c_k cos(d_k / l_k + phase_k) over random source vertices; low-frequency by construction."""
    mesh = bank.mesh
    L = float(mesh.edge_lengths.sum() / mesh.edge_count) * 8 if length is None else length
    u = np.zeros(mesh.vertex_count)
    for _ in range(n_modes):
        src = rng.integers(mesh.vertex_count)
        scale = L * (1.0 + 3.0 * rng.random())
        u += rng.normal() * np.cos(bank(src) / scale + 2 * math.pi * rng.random())
    return amplitude * u / math.sqrt(n_modes)


def random_battery(spec_or_mesh, n: int, seed: int, *, amplitude=1.0, orbits=None, bank=None):
    """n zero-mean random smooth fields (orbit-averaged when orbits is given)."""
    mesh = spec_or_mesh.mesh if isinstance(spec_or_mesh, ProblemSpec) else spec_or_mesh
    bank = DistanceBank(mesh) if bank is None else bank
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        amp = amplitude * (0.1 + 2.0 * rng.random())
        u = random_smooth_field(bank, rng, amplitude=amp)
        if orbits is not None:
            u = project_symmetric(orbits, u)
        out.append(u)
    return out


def bubble_field(distance: np.ndarray, eps: float) -> np.ndarray:
    """-2 log(eps^2 + d^2) + 2 log eps: a conformal bubble of scale eps around d = 0."""
    return 2.0 * math.log(eps) - 2.0 * np.log(eps * eps + distance**2)


def symmetric_bubble(bank: DistanceBank, orbits, center: int, eps: float) -> np.ndarray:
    """log of the sum of e^{bubble} over the orbit of `center`: k spikes, orbit-symmetric."""
    centers = sorted({int(orbits.power(p)[center]) for p in range(orbits.order)})
    stack = np.stack([bubble_field(bank(c), eps) for c in centers])
    top = stack.max(axis=0)
    return top + np.log(np.exp(stack - top).sum(axis=0))


def cap_spike(bank: DistanceBank, center: int, radius: float, amplitude: float) -> np.ndarray:
    d = bank(center)
    s = np.clip(1.0 - (d / radius) ** 2, 0.0, None)
    return amplitude * s**2


# ---------------------------------------------------------------------------
# sharpness constructions


@dataclass(eq=False)
class SharpnessSequence:
    n_values: np.ndarray
    fields: list = field(repr=False)
    Q: np.ndarray = None  # trace quotients
    E: np.ndarray = None  # Dirichlet energies
    D0: float = 0.0
    construction: str = "first"

    def __post_init__(self):
        if np.any(np.diff(self.n_values) <= 0):
            raise ValueError("n values must be strictly increasing")

    @property
    def values(self) -> np.ndarray:
        return self.Q - 0.25 * self.D0**2 * self.E

    def strictly_increasing(self, n_from=None) -> bool:
        sel = self.n_values >= (n_from if n_from is not None else self.n_values[0])
        return bool(np.all(np.diff(self.values[sel]) > 0))

    def growth_factor(self) -> float:
        """Last value over first value."""
        return float(self.values[-1] / self.values[0])

    def log_coefficient(self) -> float:
        """Coefficient b in a least-squares fit values ~ a + b log n + c / n."""
        n = self.n_values.astype(float)
        A = np.stack([np.ones_like(n), np.log(n), 1.0 / n], axis=1)
        return float(np.linalg.lstsq(A, self.values, rcond=None)[0][1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["n", "Q", "E", "value"])
            for n, q, e, v in zip(self.n_values, self.Q, self.E, self.values):
                wr.writerow([int(n), f"{q:.17g}", f"{e:.17g}", f"{v:.17g}"])


def xi(n: float, t):
    return -2.0 * np.log1p(n * np.asarray(t, dtype=float))


def smooth_cutoff(t, delta: float):
    """1 on [0, delta/2], 0 beyond delta, C-infinity in between."""
    s = np.clip((np.asarray(t, dtype=float) - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)

    def psi(x):
        with np.errstate(divide="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = psi(1.0 - s), psi(s)
    return a / (a + b)


def boundary_distance(mesh, component: int = 0) -> np.ndarray:
    loops = mesh.boundary_loops
    if not 0 <= component < len(loops):
        raise ValueError(f"boundary component {component} does not exist ({len(loops)} loops)")
    return mesh.distance_from(loops[component])


def sharpness_sequence(
    spec: ProblemSpec,
    D0: float,
    n_list,
    *,
    construction: str = "first",
    delta: Optional[float] = None,
    component: int = 0,
    distance: Optional[np.ndarray] = None,
) -> SharpnessSequence:
    """Boundary-concentrating fields and the trace-quotient functional along them.

    first:  u_n = xi_n(min(d, delta))
    second: u_n = zeta(d) xi_n(d) + (1 - zeta(d)) xi_n(delta), zeta a smooth cutoff equal to 1 on [0, delta/2]
    with xi_n(t) = -2 log(1 + n t) and d the distance to the chosen boundary component.
    Both are continued by the constant xi_n(delta) beyond the tube rather than by 0,
    so the region away from the boundary contributes O(n^-2) to int e^u.
    """
    d = boundary_distance(spec.mesh, component) if distance is None else np.asarray(distance, dtype=float)
    delta = float(d.max()) if delta is None else float(delta)
    n_values = np.asarray(sorted(int(n) for n in n_list))
    if n_values[0] <= 0:
        raise ValueError("n must be positive")
    if 2.0 * math.log1p(n_values[-1] * delta) > 2 * EXP_GUARD:
        raise ValueError("n beyond the overflow guard")
    fields, Q, E = [], [], []
    for n in n_values:
        if construction == "first":
            u = xi(n, np.minimum(d, delta))
        elif construction == "second":
            z = smooth_cutoff(d, delta)
            u = z * xi(n, d) + (1.0 - z) * xi(n, delta)
        else:
            raise ValueError(f"unknown construction {construction!r}")
        fields.append(u)
        Q.append(trace_quotient(spec, u))
        E.append(float(u @ (spec.ops.stiffness @ u)))
    return SharpnessSequence(n_values, fields, np.array(Q), np.array(E), float(D0), construction)


# ---------------------------------------------------------------------------
# chi < 0 auxiliaries


def f_alpha_minus_one(chi: int, t):
    """F_chi(-1, t) for chi < 0; vectorized over t."""
    if chi >= 0:
        raise ValueError("f is defined for negative Euler characteristic")
    t = np.asarray(t, dtype=float)
    out = np.array([F_chi(chi, -1.0, float(x)) for x in t.ravel()])
    return out.reshape(t.shape) if t.ndim else float(out[0])


@dataclass(frozen=True)
class FBoundReport:
    eps: float
    C_eps: float  # max of f(t) - (2 + eps) t_+^2 over the grid
    t_grid: tuple

    def holds(self, C: float) -> bool:
        return self.C_eps <= C


def f_bound_check(chi: int, eps: float = 0.1, t_grid=None) -> FBoundReport:
    t = np.linspace(-50.0, 50.0, 2001) if t_grid is None else np.asarray(t_grid, dtype=float)
    gap = f_alpha_minus_one(chi, t) - (2 + eps) * np.maximum(t, 0.0) ** 2
    return FBoundReport(eps, float(gap.max()), (float(t[0]), float(t[-1]), len(t)))


def jensen_lower_bound(spec: ProblemSpec, u):
    """(lhs, rhs) = (int |K| e^u, |Sigma| exp(mean of log|K|)) for zero-mean u and K <= 0."""
    if np.any(spec.K > 0):
        raise ValueError("Jensen bound needs K <= 0")
    u = project_mean_zero(spec.ops, u)
    a = spec.ops.vertex_areas
    lhs = float((np.abs(spec.K) * np.exp(u)) @ a)
    if np.any(spec.K == 0):
        warnings.warn("K vanishes at some vertices; the log-singular bound is reported as 0", RuntimeWarning, stacklevel=2)
        return lhs, 0.0
    rhs = spec.ops.area * math.exp(float(np.log(np.abs(spec.K)) @ a) / spec.ops.area)
    return lhs, rhs


# ---------------------------------------------------------------------------
# lambda sweep and perturbation


@dataclass(frozen=True)
class LambdaRow:
    lam: float
    J_min: float
    grad_norm: float  # sqrt of the Dirichlet energy of u_star
    sup_norm: float
    converged: bool
    termination: str
    iterations: int


@dataclass
class LambdaSweep:
    rows: list
    results: list = field(repr=False, default_factory=list)

    def nonincreasing(self, tol: float = 1e-9) -> bool:
        J = np.array([r.J_min for r in self.rows])
        return bool(np.all(np.diff(J) <= tol * (1 + np.abs(J[:-1]))))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lambda", "J_min", "grad_norm", "sup_norm", "converged", "termination", "iterations"])
            for r in self.rows:
                wr.writerow([f"{r.lam:.17g}", f"{r.J_min:.17g}", f"{r.grad_norm:.17g}", f"{r.sup_norm:.17g}",
                             int(r.converged), r.termination, r.iterations])


def lambda_sweep(spec: ProblemSpec, lambdas, config: Optional[SolverConfig] = None, u0=None) -> LambdaSweep:
    """Minimize J_lambda for each lambda; non-convergence is recorded, not raised."""
    if spec.chi <= 0:
        raise ValueError("the lambda family is defined for chi > 0")
    cfg = SolverConfig() if config is None else config
    lambdas = sorted(float(x) for x in lambdas)

    def one(lam):
        res = minimize(spec.with_lambda(lam), cfg, u0=u0)
        u = res.u_star
        return res, LambdaRow(
            lam,
            res.J_star,
            math.sqrt(max(float(u @ (spec.ops.stiffness @ u)), 0.0)),
            float(np.max(np.abs(u))),
            res.converged,
            res.termination,
            res.iterations,
        )

    out = parallel_map(one, lambdas)
    return LambdaSweep([r for _, r in out], [s for s, _ in out])


@dataclass(frozen=True)
class PerturbationRow:
    delta: float
    converged: bool
    termination: str
    sup_distance: float  # between normalized solutions
    sign_changing_K: bool
    domain_rejections: int
    newton_converged: bool = False
    newton_distance: float = float("nan")  # critical point found by Newton-Krylov from the symmetric solution
    newton_residual: float = float("nan")


@dataclass
class PerturbationReport:
    base_converged: bool
    rows: list

    def slope(self, route: str = "minimize") -> float:
        """log-log slope of the distance against delta over the nonzero deltas (route: minimize or newton)."""
        key = {"minimize": "sup_distance", "newton": "newton_distance"}[route]
        pts = [(r.delta, getattr(r, key)) for r in self.rows if r.delta > 0 and getattr(r, key) > 0]
        if len(pts) < 2:
            return float("nan")
        x = np.log([p[0] for p in pts])
        y = np.log([p[1] for p in pts])
        return float(np.polyfit(x, y, 1)[0])


def unit_perturbation(mesh, seed: int):
    """A random smooth field of unit sup-norm (not symmetric in general)."""
    rng = np.random.default_rng(seed)
    p = random_smooth_field(DistanceBank(mesh), rng, n_modes=3)
    return p / np.max(np.abs(p))


def perturbation_experiment(
    spec0: ProblemSpec, deltas=(0.0, 1e-3, 1e-2), config: Optional[SolverConfig] = None, seed: int = 0,
    K_direction=None, h_direction=None,
) -> PerturbationReport:
    """Solve the symmetric problem, then re-solve without symmetry for K + delta p, h + delta q."""
    cfg = SolverConfig() if config is None else config
    base_cfg = SolverConfig(**{**cfg.__dict__, "symmetric": True})
    free_cfg = SolverConfig(**{**cfg.__dict__, "symmetric": False})
    base = minimize(spec0, base_cfg)
    pK = unit_perturbation(spec0.mesh, seed) if K_direction is None else np.asarray(K_direction, dtype=float)
    ph = (unit_perturbation(spec0.mesh, seed + 1)[spec0.ops.boundary_vertices]
          if h_direction is None else np.asarray(h_direction, dtype=float))
    rows = []
    for delta in deltas:
        spec = spec0.with_curvature(K=spec0.K + delta * pK, h=spec0.h + delta * ph)
        res = minimize(spec, free_cfg, u0=base.u_star)
        dist = float(np.max(np.abs(res.v_star - base.v_star))) if res.v_star is not None else float("nan")
        ok, ndist, nres = _newton_critical_point(spec, base, free_cfg.tolerance(spec.vertex_count))
        rows.append(PerturbationRow(float(delta), res.converged, res.termination, dist,
                                    bool(np.any(spec.K < 0)), res.domain_rejections, ok, ndist, nres))
    return PerturbationReport(base.converged, rows)


def _newton_critical_point(spec, base, tol):
    """Solve grad J = 0 (plus zero mean) by Newton-Krylov from the symmetric solution.

    The symmetric minimizer can be a saddle of the full energy, in which case
    descent escapes; this route follows the nearby critical point instead.
    Returns (converged, sup distance of normalized solutions, weighted residual).
    """
    a, area = spec.ops.vertex_areas, spec.ops.area
    w = residual_weights(spec.ops)

    def F(u):
        try:
            st = _evaluate(spec, u, strict=True)
        except DomainError:
            return np.full_like(u, 1e6)
        return (st.grad + a * (a @ u) / area) / w

    try:
        with np.errstate(invalid="ignore"):
            u = newton_krylov(F, base.u_star, f_tol=tol, maxiter=50)
        st = _evaluate(spec, u, strict=True)
    except (NoConvergence, DomainError, ValueError):
        return False, float("nan"), float("nan")
    if not st.C > 0:
        return False, float("nan"), float("nan")
    res = float(np.max(np.abs(st.grad / w)))
    v = u + 2.0 * math.log(st.C)
    return res <= tol, float(np.max(np.abs(v - base.v_star))), res
