"""Domain-guarded limited-memory quasi-Newton minimization of the mean-field energy."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .exceptions import ConsistencyError, DomainError, InfeasibleSpecError
from .meanfield import (
    DEGENERATE_C,
    MeanFieldState,
    ProblemSpec,
    _evaluate,
    find_domain_point,
    project_mean_zero,
    project_tangent,
    residual_weights,
    sign_conditions,
)

TERMINATIONS = ("grad_tol", "stalled", "max_iters", "domain_boundary")
TRACE_COLUMNS = ("iter", "J", "grad_norm", "alpha", "beta", "C", "step", "domain_margin")


@dataclass
class SolverConfig:
    grad_tol: Optional[float] = None  # None -> 1e-8 * sqrt(vertex_count)
    max_iters: int = 10_000
    memory: int = 10
    domain_margin: float = 1e-10
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    symmetric: bool = False
    seed: int = 0
    max_backtracks: int = 60
    stall_window: int = 8

    def __post_init__(self):
        for name in ("max_iters", "memory", "max_backtracks", "stall_window"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not self.domain_margin > 0:
            raise ValueError("domain_margin must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")

    def tolerance(self, vertex_count: int) -> float:
        return 1e-8 * math.sqrt(vertex_count) if self.grad_tol is None else float(self.grad_tol)


@dataclass(eq=False)
class SolveResult:
    u_star: np.ndarray
    v_star: Optional[np.ndarray]
    C_star: float
    J_star: float
    iterations: int
    converged: bool
    termination: str
    sign_used: str = "n/a"
    degenerate: bool = False
    alpha: float = float("nan")
    beta: float = float("nan")
    residual: float = float("nan")
    domain_margin: float = float("nan")
    domain_rejections: int = 0
    trace: list = field(default_factory=list, repr=False)


def project_symmetric(orbits, u) -> np.ndarray:
    """Average nodal values over symmetry orbits."""
    u = np.asarray(u, dtype=float)
    if orbits is None:
        return u.copy()
    acc = u.copy()
    for p in range(1, orbits.order):
        acc += u[orbits.power(p)]
    return acc / orbits.order


def _relaxed(spec: ProblemSpec) -> bool:
    """chi = 0 with sign-definite K: F is defined wherever alpha != 0, which always holds."""
    K = spec.K
    return spec.chi == 0 and spec.lam is None and np.any(K != 0) and (np.all(K >= 0) or np.all(K <= 0))


class _Preconditioner:
    """x -> P (L + M)^{-1} P x with P the tangent projection."""

    def __init__(self, ops):
        self.ops = ops
        A = (ops.stiffness + sparse.diags(ops.vertex_areas)).tocsc()
        self.lu = splu(A)

    def __call__(self, g):
        return project_tangent(self.ops, self.lu.solve(project_tangent(self.ops, g)))


def weighted_residual(spec: ProblemSpec, state: MeanFieldState) -> float:
    return float(np.max(np.abs(state.grad / residual_weights(spec.ops))))


def minimize(spec: ProblemSpec, config: Optional[SolverConfig] = None, u0=None) -> SolveResult:
    """Minimize J (or J_lambda when spec.lam is set) over zero-mean fields.

    Trial points outside the domain, or closer to its boundary than
    config.domain_margin in relative terms, are rejected by step halving.
    For chi = 0 with sign-definite K the domain is relaxed to alpha != 0 and
    the sign of C at the minimizer is resolved afterwards.
    """
    cfg = SolverConfig() if config is None else config
    relaxed = _relaxed(spec)
    if not relaxed:
        feas = sign_conditions(spec)
        if not feas.feasible:
            raise InfeasibleSpecError(f"domain is empty: {feas.clause}", feas)
    if cfg.symmetric and spec.orbits is None:
        raise ValueError("symmetric minimization needs spec.orbits")
    orbits = spec.orbits if cfg.symmetric else None
    ops = spec.ops
    tol = cfg.tolerance(spec.vertex_count)
    weights = residual_weights(ops)

    def prepare(u):
        return project_mean_zero(ops, project_symmetric(orbits, u))

    def evaluate(u):
        st = _evaluate(spec, u, strict=not relaxed)
        if not relaxed and st.domain.relative_margin < cfg.domain_margin:
            raise DomainError("trial point too close to the domain boundary", st.domain)
        if not math.isfinite(st.J):
            raise DomainError("non-finite energy")
        if orbits is not None:
            st.grad[:] = project_tangent(ops, project_symmetric(orbits, st.grad))
        return st

    if u0 is None:
        u = np.zeros(spec.vertex_count) if relaxed else find_domain_point(spec)
    else:
        u = np.asarray(u0, dtype=float)
    u = prepare(u)
    state = evaluate(u)

    H0 = _Preconditioner(ops)
    hist = deque(maxlen=cfg.memory)
    trace = []

    def log(it, st, step):
        res = float(np.max(np.abs(st.grad / weights)))
        trace.append((it, st.J, res, st.alpha, st.beta, st.C, step, st.domain.relative_margin))
        return res

    res = log(0, state, 0.0)
    termination = "max_iters"
    small_moves = 0
    rejections = 0
    it = 0
    while True:
        if res <= tol:
            termination = "grad_tol"
            break
        if it >= cfg.max_iters:
            break
        it += 1
        g = state.grad
        # two-loop recursion
        q = g.copy()
        coeffs = []
        for s, y, rho in reversed(hist):
            a_ = rho * (s @ q)
            q -= a_ * y
            coeffs.append(a_)
        r = H0(q)
        if hist:
            s, y, _ = hist[-1]
            Hy = H0(y)
            r *= (s @ y) / (y @ Hy)
        for (s, y, rho), a_ in zip(hist, reversed(coeffs)):
            b_ = rho * (y @ r)
            r += (a_ - b_) * s
        d = -r
        slope = g @ d
        if not slope < 0:
            hist.clear()
            d = -H0(g)
            slope = g @ d
        if not hist:
            # first step: cap the nodal change at 1
            d *= min(1.0, 1.0 / max(np.max(np.abs(d)), 1e-300))
            slope = g @ d

        step = 1.0
        accepted = None
        domain_hits = 0
        for _ in range(cfg.max_backtracks):
            trial = prepare(state.u + step * d)
            try:
                cand = evaluate(trial)
            except DomainError:
                domain_hits += 1
                rejections += 1
                step *= cfg.backtrack_factor
                continue
            slack = 1e-13 * (1.0 + abs(state.J))
            if cand.J <= state.J + cfg.armijo_c * step * slope + slack:
                accepted = cand
                break
            step *= cfg.backtrack_factor
        if accepted is None:
            termination = "domain_boundary" if domain_hits > 0 and domain_hits >= cfg.max_backtracks // 2 else "stalled"
            break

        s = accepted.u - state.u
        y = accepted.grad - state.grad
        sy = s @ y
        if sy > 1e-12 * math.sqrt((s @ s) * (y @ y)):
            hist.append((s, y, 1.0 / sy))
        dJ = state.J - accepted.J
        small_moves = small_moves + 1 if dJ <= 1e-15 * (1.0 + abs(state.J)) else 0
        state = accepted
        res = log(it, state, step)
        if small_moves >= cfg.stall_window and res > tol:
            termination = "stalled"
            break

    result = SolveResult(
        u_star=state.u,
        v_star=None,
        C_star=state.C,
        J_star=state.J,
        iterations=it,
        converged=termination == "grad_tol",
        termination=termination,
        alpha=state.alpha,
        beta=state.beta,
        residual=res,
        domain_margin=state.domain.relative_margin,
        domain_rejections=rejections,
        trace=trace,
    )
    if spec.chi == 0 and spec.lam is None:
        return resolve_sign(spec, result)
    result.v_star = state.u + 2.0 * (math.log(state.C) if state.C > 0 else float("nan"))
    return result


def resolve_sign(spec: ProblemSpec, result: SolveResult) -> SolveResult:
    """chi = 0: decide whether the minimizer solves the problem for h or for -h.

    C > threshold -> h; C < -threshold -> -h; otherwise the degenerate flag is
    set and the state is left unnormalized.
    """
    if spec.chi != 0:
        raise ValueError("sign resolution applies to chi = 0 only")
    alpha, beta = result.alpha, result.beta
    C = -beta / alpha
    thr = DEGENERATE_C * (1.0 + abs(beta) / abs(alpha))
    result.C_star = C
    if C > thr:
        result.sign_used = "h"
        result.v_star = result.u_star + 2.0 * math.log(C)
    elif C < -thr:
        result.sign_used = "minus_h"
        result.v_star = result.u_star + 2.0 * math.log(-C)
    else:
        total_h = float(spec.h @ spec.ops.boundary_weights)
        scale = float(np.abs(spec.h) @ spec.ops.boundary_weights)
        if abs(total_h) > 1e-10 * max(scale, 1e-300):
            raise ConsistencyError(
                f"C = {C:.3e} is degenerate although the boundary integral of h is {total_h:.6g}"
            )
        result.sign_used = "n/a"
        result.degenerate = True
        result.v_star = result.u_star.copy()
    return result


def trace_rows(result: SolveResult):
    return [dict(zip(TRACE_COLUMNS, row)) for row in result.trace]
