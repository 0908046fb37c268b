"""Mean-field reformulation of the prescribed Gaussian/geodesic curvature problem.

Notation used throughout:

    alpha = integral of K e^u over the surface
    beta  = integral of h e^{u/2} over the boundary

The energy is J(u) = 1/2 int |grad u|^2 - F(alpha, beta) on zero-mean fields,
with F depending on the sign of the Euler characteristic. Everything routes
through the constant C(u), the larger root of C^2 alpha + C beta = 2 pi chi,
so that dF/dalpha = 2 C^2 and dF/dbeta = 4 C hold by construction.

The chi < 0 branch is evaluated as the mirror image of the chi > 0 branch
under (alpha, beta) -> (-alpha, -beta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import ConstructionError, DomainError, NonGeometricBranchError
from .mesh import IntrinsicMesh, SymmetryOrbits
from .operators import OperatorSet, assemble_operators

EXP_GUARD = 700.0
DEGENERATE_C = 1e-8


# ---------------------------------------------------------------------------
# problem data


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    mesh: IntrinsicMesh
    ops: OperatorSet
    K: np.ndarray  # per vertex
    h: np.ndarray  # per boundary vertex, aligned with mesh.boundary_vertices
    chi: int
    rho_bar: float
    orbits: Optional[SymmetryOrbits] = None
    lam: Optional[float] = None

    @classmethod
    def create(cls, mesh, K, h, *, ops=None, orbits=None, chi=None, lam=None):
        ops = assemble_operators(mesh) if ops is None else ops
        K = np.broadcast_to(np.asarray(K, dtype=float), (mesh.vertex_count,)).copy()
        h = np.broadcast_to(np.asarray(h, dtype=float), (len(ops.boundary_vertices),)).copy()
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(h))):
            raise ValueError("curvature data must be finite")
        topo = mesh.euler_characteristic()
        if chi is not None and int(chi) != topo:
            raise ValueError(f"chi={chi} does not match the mesh Euler characteristic {topo}")
        if lam is not None and not lam > 0:
            raise ValueError("lambda must be positive")
        return cls(mesh, ops, K, h, topo, 4 * math.pi * topo / ops.area, orbits, lam)

    @property
    def K_boundary(self) -> np.ndarray:
        return self.K[self.ops.boundary_vertices]

    @property
    def vertex_count(self) -> int:
        return self.mesh.vertex_count

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def with_curvature(self, K=None, h=None) -> "ProblemSpec":
        return ProblemSpec.create(
            self.mesh,
            self.K if K is None else K,
            self.h if h is None else h,
            ops=self.ops,
            orbits=self.orbits,
            lam=self.lam,
        )

    def with_lambda(self, lam) -> "ProblemSpec":
        return ProblemSpec.create(self.mesh, self.K, self.h, ops=self.ops, orbits=self.orbits, lam=lam)


@dataclass(frozen=True)
class DomainStatus:
    member: bool
    margin: float
    relative_margin: float
    branch: str


@dataclass(frozen=True, eq=False)
class MeanFieldState:
    u: np.ndarray
    alpha: float
    beta: float
    log_shift: float
    domain: DomainStatus
    C: float
    J: float
    grad: np.ndarray  # projected onto the zero-mean tangent space
    raw_grad: np.ndarray = field(repr=False, default=None)

    @property
    def domain_ok(self) -> bool:
        return self.domain.member


# ---------------------------------------------------------------------------
# projections


def project_mean_zero(ops: OperatorSet, u) -> np.ndarray:
    """Subtract the area-weighted mean."""
    u = np.asarray(u, dtype=float)
    return u - (ops.vertex_areas @ u) / ops.area


def project_tangent(ops: OperatorSet, g) -> np.ndarray:
    """Euclidean projection onto {x : sum_i area_i x_i = 0}."""
    a = ops.vertex_areas
    return g - ((g @ a) / (a @ a)) * a


def residual_weights(ops: OperatorSet) -> np.ndarray:
    """Relative nodal weights (mean 1) from interior areas plus boundary lengths."""
    w = ops.vertex_areas + ops.boundary_scatter(ops.boundary_weights)
    return w / w.mean()


# ---------------------------------------------------------------------------
# alpha, beta with overflow guard


@dataclass(frozen=True, eq=False)
class Integrals:
    alpha: float  # scaled by e^{-shift}
    beta: float  # scaled by e^{-shift/2}
    shift: float
    alpha_abs: float
    beta_abs: float
    eu: np.ndarray
    ehalf: np.ndarray

    @property
    def true_alpha(self) -> float:
        with np.errstate(over="ignore"):
            return float(self.alpha * np.exp(self.shift))

    @property
    def true_beta(self) -> float:
        with np.errstate(over="ignore"):
            return float(self.beta * np.exp(0.5 * self.shift))


def scaled_integrals(spec: ProblemSpec, u) -> Integrals:
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.vertex_count,):
        raise ValueError(f"field has shape {u.shape}, expected ({spec.vertex_count},)")
    top = float(u.max())
    shift = top if top > EXP_GUARD else 0.0
    eu = np.exp(u - shift)
    ehalf = np.exp(0.5 * (u[spec.ops.boundary_vertices] - shift))
    a, w = spec.ops.vertex_areas, spec.ops.boundary_weights
    return Integrals(
        alpha=float((spec.K * eu) @ a),
        beta=float((spec.h * ehalf) @ w),
        shift=shift,
        alpha_abs=float((np.abs(spec.K) * eu) @ a),
        beta_abs=float((np.abs(spec.h) * ehalf) @ w),
        eu=eu,
        ehalf=ehalf,
    )


def compute_alpha_beta(spec: ProblemSpec, u):
    """(int K e^u, int_bdry h e^{u/2}) by lumped quadrature."""
    it = scaled_integrals(spec, u)
    return it.true_alpha, it.true_beta


# ---------------------------------------------------------------------------
# branch algebra


def _branch(chi: int, lam: Optional[float] = None):
    """(kind, scale): scale is 8 pi |chi| or lambda."""
    if lam is not None:
        if chi <= 0:
            raise ValueError("the lambda family is only defined for chi > 0")
        return "positive", float(lam)
    if chi > 0:
        return "positive", 8 * math.pi * chi
    if chi < 0:
        return "negative", 8 * math.pi * -chi
    return "zero", 0.0


BRANCH_NAMES = {"positive": "chi_pos", "zero": "chi_zero", "negative": "chi_neg"}


def _chi_of(spec_or_chi):
    if isinstance(spec_or_chi, ProblemSpec):
        return spec_or_chi.chi, spec_or_chi.lam
    return int(spec_or_chi), None


def check_domain(spec_or_chi, alpha: float, beta: float, *, lam=None, alpha_abs=None, beta_abs=None) -> DomainStatus:
    """Membership of (alpha, beta) in the open set where F is defined and C > 0.

    chi > 0: alpha > -beta_+^2 / (8 pi chi)
    chi = 0: alpha * beta < 0
    chi < 0: alpha < beta_-^2 / (8 pi |chi|)

    `relative_margin` divides by the same expression built from |K| and |h|
    (when given), so it lives in [-1, 1] and tends to 0 at the boundary.
    """
    chi, spec_lam = _chi_of(spec_or_chi)
    lam = spec_lam if lam is None else lam
    kind, s = _branch(chi, lam)
    a_abs = abs(alpha) if alpha_abs is None else alpha_abs
    b_abs = abs(beta) if beta_abs is None else beta_abs
    if kind == "zero":
        margin = -alpha * beta
        scale = a_abs * b_abs
    else:
        if kind == "negative":
            alpha, beta = -alpha, -beta
        margin = alpha + max(beta, 0.0) ** 2 / s
        scale = a_abs + b_abs**2 / s
    rel = margin / scale if scale > 0 else 0.0
    return DomainStatus(bool(margin > 0), float(margin), float(rel), BRANCH_NAMES[kind])


def _positive_C(s: float, alpha: float, beta: float) -> float:
    disc = beta * beta + s * alpha
    if disc < 0 or (beta <= 0 and alpha <= 0):
        raise DomainError(f"(alpha, beta)=({alpha:.6g}, {beta:.6g}) outside the domain")
    root = math.sqrt(disc)
    if beta >= 0:
        den = root + beta
        if den <= 0:
            raise DomainError("degenerate denominator in C")
        return 0.5 * s / den
    return (root - beta) / (2 * alpha)


def compute_C(chi, alpha: float, beta: float, lam=None) -> float:
    """Larger root of C^2 alpha + C beta = 2 pi chi (lambda/4 in place of 2 pi chi for the lambda family)."""
    chi, spec_lam = _chi_of(chi)
    lam = spec_lam if lam is None else lam
    kind, s = _branch(chi, lam)
    if kind == "zero":
        if alpha == 0:
            raise DomainError("C undefined: alpha = 0 with chi = 0")
        return -beta / alpha
    if kind == "negative":
        return _positive_C(s, -alpha, -beta)
    return _positive_C(s, alpha, beta)


def _F_from_C(kind, s, beta, C):
    if kind == "zero":
        return 2 * beta * C
    if kind == "positive":
        return s * math.log(0.5 * s / C) + 2 * beta * C
    return -s * math.log(0.5 * s / C) + 2 * beta * C


def F_chi(chi, alpha: float, beta: float, lam=None) -> float:
    chi, spec_lam = _chi_of(chi)
    lam = spec_lam if lam is None else lam
    kind, s = _branch(chi, lam)
    if kind != "zero":
        status = check_domain(chi, alpha, beta, lam=lam)
        if not status.member:
            raise DomainError(f"(alpha, beta) outside the {status.branch} domain", status)
    return _F_from_C(kind, s, beta, compute_C(chi, alpha, beta, lam))


def dF_chi(chi, alpha: float, beta: float, lam=None):
    """(dF/dalpha, dF/dbeta) = (2 C^2, 4 C)."""
    chi, spec_lam = _chi_of(chi)
    lam = spec_lam if lam is None else lam
    kind, _ = _branch(chi, lam)
    if kind != "zero":
        status = check_domain(chi, alpha, beta, lam=lam)
        if not status.member:
            raise DomainError(f"(alpha, beta) outside the {status.branch} domain", status)
    C = compute_C(chi, alpha, beta, lam)
    return 2 * C * C, 4 * C


# ---------------------------------------------------------------------------
# energy and gradient


def _evaluate(spec: ProblemSpec, u, lam=None, strict=True) -> MeanFieldState:
    u = np.asarray(u, dtype=float)
    lam = spec.lam if lam is None else lam
    it = scaled_integrals(spec, u)
    status = check_domain(spec.chi, it.alpha, it.beta, lam=lam, alpha_abs=it.alpha_abs, beta_abs=it.beta_abs)
    if strict and not status.member:
        raise DomainError(
            f"state outside the {status.branch} domain (relative margin {status.relative_margin:.3e})", status
        )
    kind, s = _branch(spec.chi, lam)
    Cs = compute_C(spec.chi, it.alpha, it.beta, lam)
    signed = 0.0 if kind == "zero" else (s if kind == "positive" else -s)
    F = _F_from_C(kind, s, it.beta, Cs) + 0.5 * signed * it.shift
    Lu = spec.ops.stiffness @ u
    J = 0.5 * float(u @ Lu) - F
    a, w = spec.ops.vertex_areas, spec.ops.boundary_weights
    raw = Lu - 2 * Cs * Cs * spec.K * it.eu * a
    raw[spec.ops.boundary_vertices] -= 2 * Cs * spec.h * it.ehalf * w
    C = Cs * math.exp(-0.5 * it.shift)
    return MeanFieldState(
        u=u,
        alpha=it.true_alpha,
        beta=it.true_beta,
        log_shift=it.shift,
        domain=status,
        C=C,
        J=J,
        grad=project_tangent(spec.ops, raw),
        raw_grad=raw,
    )


def energy(spec: ProblemSpec, u, *, strict: bool = True) -> MeanFieldState:
    """J(u) and its projected gradient.

    `u` should already have zero area-weighted mean. With strict=False the
    domain gate is skipped and only F has to be defined (chi = 0: alpha != 0),
    which is what the sign-resolution route minimizes over.
    """
    return _evaluate(spec, u, lam=None, strict=strict)


def lambda_energy(spec: ProblemSpec, u, lam: float) -> float:
    return _evaluate(spec, u, lam=lam).J


def lambda_gradient(spec: ProblemSpec, u, lam: float) -> np.ndarray:
    return _evaluate(spec, u, lam=lam).grad


def lambda_state(spec: ProblemSpec, u, lam: float) -> MeanFieldState:
    return _evaluate(spec, u, lam=lam)


def log_C(spec: ProblemSpec, u) -> float:
    it = scaled_integrals(spec, u)
    Cs = compute_C(spec, it.alpha, it.beta)
    if Cs <= 0:
        raise NonGeometricBranchError(f"C(u) = {Cs:.6g} <= 0: non-geometric branch (see resolve_sign)")
    return math.log(Cs) - 0.5 * it.shift


def normalize_solution(spec: ProblemSpec, u) -> np.ndarray:
    """v = u + 2 log C(u); satisfies int K e^v + int h e^{v/2} = 2 pi chi exactly."""
    it = scaled_integrals(spec, u)
    status = check_domain(spec, it.alpha, it.beta)
    if spec.chi != 0 and not status.member:
        raise DomainError("cannot normalize a state outside the domain", status)
    return np.asarray(u, dtype=float) + 2.0 * log_C(spec, u)


def is_degenerate(C: float, alpha: float = 1.0, beta: float = 0.0) -> bool:
    return abs(C) <= DEGENERATE_C * (1.0 + abs(beta) / max(abs(alpha), 1e-300))


# ---------------------------------------------------------------------------
# feasibility (non-emptiness of the domain)


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    clause: str
    branch: str


def sign_conditions(spec: ProblemSpec) -> Feasibility:
    K, h = spec.K, spec.h
    if spec.chi > 0:
        if np.any(K > 0):
            return Feasibility(True, "K > 0 somewhere", "chi_pos")
        if np.any(h > 0):
            return Feasibility(True, "h > 0 somewhere on the boundary", "chi_pos")
        return Feasibility(False, "chi > 0 needs K > 0 somewhere or h > 0 somewhere; neither holds", "chi_pos")
    if spec.chi < 0:
        if np.any(K < 0):
            return Feasibility(True, "K < 0 somewhere", "chi_neg")
        if np.any(h < 0):
            return Feasibility(True, "h < 0 somewhere on the boundary", "chi_neg")
        return Feasibility(False, "chi < 0 needs K < 0 somewhere or h < 0 somewhere; neither holds", "chi_neg")
    if K.max() > 0 and h.min() < 0:
        return Feasibility(True, "K(x) > 0 > h(y) for some x, y", "chi_zero")
    if K.min() < 0 and h.max() > 0:
        return Feasibility(True, "K(x) < 0 < h(y) for some x, y", "chi_zero")
    return Feasibility(False, "chi = 0 needs K(x) h(y) < 0 for some x, y; no such pair", "chi_zero")


def _doubling(cap):
    amp = 1.0
    while amp < cap:
        yield amp
        amp *= 2.0
    yield float(cap)


def _accept(spec, u, min_rel):
    it = scaled_integrals(spec, u)
    st = check_domain(spec, it.alpha, it.beta, alpha_abs=it.alpha_abs, beta_abs=it.beta_abs)
    return st.member and st.relative_margin >= min_rel


def _signed_bump_search(spec, sign, min_rel, cap):
    """chi != 0: bump where sign*K > 0, else on boundary vertices where sign*h > 0."""
    K, h = sign * spec.K, sign * spec.h
    a, w = spec.ops.vertex_areas, spec.ops.boundary_weights
    bverts = spec.ops.boundary_vertices
    s = 8 * math.pi * abs(spec.chi)
    V = spec.vertex_count
    if K.max() > 0:
        support = np.array([int(np.argmax(K))])
    else:
        order = np.argsort(-h, kind="stable")
        order = order[h[order] > 0]
        if len(order) == 0:
            raise ConstructionError("constructive search failed: no admissible bump support")
        # leading e^A coefficient of the margin for each prefix of boundary vertices
        coef = np.cumsum(K[bverts[order]] * a[bverts[order]]) + np.cumsum(h[order] * w[order]) ** 2 / s
        best = int(np.argmax(coef))
        if coef[best] <= 0:
            raise ConstructionError("constructive search failed: boundary bump cannot dominate the area term")
        support = bverts[order[: best + 1]]
    for amp in _doubling(cap):
        u = np.zeros(V)
        u[support] = amp
        if _accept(spec, u, min_rel):
            return project_mean_zero(spec.ops, u)
    raise ConstructionError(f"constructive search failed: amplitude cap {cap} exceeded")


def _two_bump_search(spec, s_alpha, min_rel, cap):
    """chi = 0: aim for sign(alpha) = s_alpha and sign(beta) = -s_alpha."""
    K, h = spec.K, spec.h
    bverts = spec.ops.boundary_vertices
    V = spec.vertex_count
    on_bdry = np.zeros(V, dtype=bool)
    on_bdry[bverts] = True
    beta_set = bverts[(-s_alpha) * h > 0]
    cand = np.flatnonzero((s_alpha * K > 0) & ~on_bdry)
    if len(cand) == 0:
        cand = np.flatnonzero(s_alpha * K > 0)
    if len(cand) == 0 or len(beta_set) == 0:
        return None
    peak = int(cand[np.argmax(s_alpha * K[cand])])
    for amp2 in [0.0] + list(_doubling(cap)):
        u = np.zeros(V)
        u[beta_set] = amp2
        it = scaled_integrals(spec, u)
        if (-s_alpha) * it.beta <= 0:
            continue
        for amp1 in [0.0] + list(_doubling(cap)):
            u1 = u.copy()
            u1[peak] = max(amp1, u1[peak]) if amp1 > 0 else u1[peak]
            if _accept(spec, u1, min_rel):
                return project_mean_zero(spec.ops, u1)
    return None


def find_domain_point(spec: ProblemSpec, *, min_relative_margin: float = 1e-10, cap: float = 600.0) -> np.ndarray:
    """A zero-mean field inside the domain, built from nodal bumps of doubling amplitude."""
    zero = np.zeros(spec.vertex_count)
    if _accept(spec, zero, min_relative_margin):
        return zero
    feas = sign_conditions(spec)
    if not feas.feasible:
        raise ConstructionError(f"domain is empty: {feas.clause}")
    if spec.chi != 0:
        return _signed_bump_search(spec, 1.0 if spec.chi > 0 else -1.0, min_relative_margin, cap)
    for s_alpha in (1.0, -1.0):
        u = _two_bump_search(spec, s_alpha, min_relative_margin, cap)
        if u is not None:
            return u
    raise ConstructionError("constructive search failed for chi = 0")
