"""Tangent/normal splitting, the Cauchy-Riemann operator and conformalization.

Tangent fields are ambient R^3-valued fields with v . x = 0.  Trace-free
symmetric 2-tensors are stored by their frame components (T11, T12) in the
orthonormal frame (e1, e2) = (d/dtheta, (1/sin theta) d/dphi), with
T22 = -T11.  Tensor inner products use the full Frobenius contraction
``<S, T> = int 2 (S11 T11 + S12 T12) dx``.

The operator D maps a tangent field to the trace-free part of its Lie
derivative of the round metric::

    (Dv)_11 = v_{1,1} - v_{2,2},    (Dv)_12 = v_{1,2} + v_{2,1}

with v_{i,j} = e_i . dv(e_j).  Its kernel is the six-dimensional space of
conformal Killing fields.  Inversion works on the Hodge potentials
v = grad a + x cross grad b with 2 <= l <= L-1, which is exactly the
kernel-orthogonal complement at that resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ConformalizationFailedError, DomainError, RegimeError, SolverError
from .geometry import Immersion, make_immersion
from .sphere import (
    AmbientField,
    QuadratureGrid,
    ScalarField,
    degrees,
    eigenvalues,
    evaluate_points,
    lp_norm,
    n_coeffs,
    sobolev_norm,
    surface_gradient,
)

TANGENCY_TOL = 1e-8
CG_TOL = 1e-12
CG_MAXITER = 500
CONFORMAL_TOL = 1e-8
CONFORMAL_MAXITER = 50
RHO_MAX_DEVIATION = 1.0
STALL_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class Decomposition:
    """h = v + z n with n = x the round normal."""

    h: AmbientField
    v: AmbientField
    z: ScalarField


@dataclass(frozen=True, eq=False)
class TracelessTensorField:
    grid: QuadratureGrid
    t11: np.ndarray
    t12: np.ndarray

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    def inner(self, other) -> float:
        return float(self.grid.integrate_values(2.0 * (self.t11 * other.t11 + self.t12 * other.t12)))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def pointwise_norm(self):
        return np.sqrt(2.0 * (self.t11**2 + self.t12**2))

    def __add__(self, other):
        return TracelessTensorField(self.grid, self.t11 + other.t11, self.t12 + other.t12)

    def __sub__(self, other):
        return TracelessTensorField(self.grid, self.t11 - other.t11, self.t12 - other.t12)

    def __neg__(self):
        return TracelessTensorField(self.grid, -self.t11, -self.t12)

    def __mul__(self, s):
        return TracelessTensorField(self.grid, s * self.t11, s * self.t12)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# splitting and conformal Killing fields
# ---------------------------------------------------------------------------


def decompose(h: AmbientField) -> Decomposition:
    x = h.grid.unit_points
    z = np.sum(h.values * x, axis=0)
    return Decomposition(h=h, v=AmbientField(h.grid, h.values - z * x), z=ScalarField(h.grid, z))


def ckf_basis(grid: QuadratureGrid):
    """Rotation generators e_k cross x (k = 1..3), then grad x^i (i = 1..3)."""
    x = grid.unit_points
    basis = []
    for k in range(3):
        e = np.zeros((3, 1, 1))
        e[k] = 1.0
        basis.append(AmbientField(grid, np.cross(e, x, axis=0)))
    for i in range(3):
        e = np.zeros((3, 1, 1))
        e[i] = 1.0
        basis.append(AmbientField(grid, e - x[i] * x))
    return basis


def kernel_projection(v: AmbientField) -> AmbientField:
    """L2-orthogonal projection onto the span of the conformal Killing fields."""
    basis = ckf_basis(v.grid)
    B = np.stack([b.values for b in basis])
    w = v.grid.weights
    gram = np.einsum("aijk,bijk,jk->ab", B, B, w)
    rhs = np.einsum("aijk,ijk,jk->a", B, v.values, w)
    coef = np.linalg.solve(gram, rhs)
    return AmbientField(v.grid, np.einsum("a,aijk->ijk", coef, B))


# ---------------------------------------------------------------------------
# D and Q
# ---------------------------------------------------------------------------


def _frame_gradient(field: AmbientField):
    grid = field.grid
    c = field.coeffs
    return grid.synthesize_kind(c, "d1"), grid.synthesize_kind(c, "d2")


def cr_apply(v: AmbientField) -> TracelessTensorField:
    """D v for a tangent field ``v``."""
    grid = v.grid
    normal = np.max(np.abs(np.sum(v.values * grid.unit_points, axis=0)))
    if normal > TANGENCY_TOL:
        raise DomainError(f"field is not tangent: max |v . n| = {normal:.3e}")
    dv1, dv2 = _frame_gradient(v)
    e1, e2 = grid.e_theta, grid.e_phi
    v11 = np.sum(e1 * dv1, axis=0)
    v22 = np.sum(e2 * dv2, axis=0)
    v12 = np.sum(e1 * dv2, axis=0)
    v21 = np.sum(e2 * dv1, axis=0)
    return TracelessTensorField(grid, v11 - v22, v12 + v21)


def q_form(h: AmbientField) -> TracelessTensorField:
    """Q(dh): Q11 = -(|h1|^2 - |h2|^2)/2, Q12 = -h1 . h2."""
    h1, h2 = _frame_gradient(h)
    return TracelessTensorField(
        h.grid,
        -0.5 * (np.sum(h1 * h1, axis=0) - np.sum(h2 * h2, axis=0)),
        -np.sum(h1 * h2, axis=0),
    )


def conformal_part(imm: Immersion) -> TracelessTensorField:
    """Trace-free part of the pullback metric, (g)_0 = Dv - Q(dh)."""
    g11, g12, g22 = imm.metric
    return TracelessTensorField(imm.grid, 0.5 * (g11 - g22), g12)


# ---------------------------------------------------------------------------
# potential representation of kernel-orthogonal tangent fields
# ---------------------------------------------------------------------------


def _potential_mask(L):
    l = degrees(L)
    return ((l >= 2) & (l <= L - 1)).astype(float)


def _apply_potentials(c, grid):
    """D(grad a + x cross grad b) for potentials c = (a, b), each flat (L+1)^2."""
    h11 = grid.synthesize_kind(c, "h11")
    h12 = grid.synthesize_kind(c, "h12")
    h22 = grid.synthesize_kind(c, "h22")
    diff = h11 - h22
    return diff[0] - 2.0 * h12[1], 2.0 * h12[0] + diff[1]


def _apply_potentials_transpose(s11, s12, grid):
    t11 = grid.synthesize_kind_transpose(np.stack([s11, s12]), "h11")
    t22 = grid.synthesize_kind_transpose(np.stack([s11, s12]), "h22")
    t12 = grid.synthesize_kind_transpose(np.stack([s11, s12]), "h12")
    a = t11[0] - t22[0] + 2.0 * t12[1]
    b = -2.0 * t12[0] + t11[1] - t22[1]
    return np.stack([a, b])


def tangent_from_potentials(c, grid: QuadratureGrid) -> AmbientField:
    """grad a + x cross grad b as an ambient field; ``c`` has shape (2, (L+1)^2)."""
    c = np.asarray(c, dtype=float)
    d1 = grid.synthesize_kind(c, "d1")
    d2 = grid.synthesize_kind(c, "d2")
    v_theta = d1[0] - d2[1]
    v_phi = d2[0] + d1[1]
    return AmbientField(grid, v_theta * grid.e_theta + v_phi * grid.e_phi)


def potentials_operator(grid: QuadratureGrid):
    """(apply, transpose) of D restricted to potentials, for adjoint checks."""

    def apply(c):
        t11, t12 = _apply_potentials(c, grid)
        return TracelessTensorField(grid, t11, t12)

    def transpose(T):
        w2 = 2.0 * grid.weights
        return _apply_potentials_transpose(w2 * T.t11, w2 * T.t12, grid) * _potential_mask(grid.band_limit)

    return apply, transpose


def cr_adjoint(T: TracelessTensorField) -> AmbientField:
    """D* T as a tangent field, exact against tangent fields with potentials of degree <= L-1."""
    grid = T.grid
    L = grid.band_limit
    w2 = 2.0 * grid.weights
    lam = eigenvalues(L)
    mask = ((degrees(L) >= 1) & (degrees(L) <= L - 1)).astype(float)
    rhs = _apply_potentials_transpose(w2 * T.t11, w2 * T.t12, grid) * mask
    return tangent_from_potentials(rhs / np.where(lam > 0, lam, 1.0), grid)


@dataclass(frozen=True, eq=False)
class CRSolveResult:
    v: AmbientField
    potentials: np.ndarray
    iterations: int
    residual: float
    stability_constant: float


def cr_solve_detailed(Q: TracelessTensorField) -> CRSolveResult:
    """Least-squares solution of Dv = Q orthogonal to the conformal Killing fields.

    Conjugate gradients on the normal equations in potential space with a
    diagonal preconditioner from the closed-form spectrum of D*D.
    """
    grid = Q.grid
    L = grid.band_limit
    n = n_coeffs(L)
    mask = _potential_mask(L)
    lam = eigenvalues(L)
    w2 = 2.0 * grid.weights
    diag = np.where(mask > 0, 2.0 * lam * (lam - 2.0), 1.0)
    precond = np.concatenate([1.0 / diag, 1.0 / diag])

    def normal(x):
        c = x.reshape(2, n) * mask
        t11, t12 = _apply_potentials(c, grid)
        return (_apply_potentials_transpose(w2 * t11, w2 * t12, grid) * mask).ravel()

    rhs = (_apply_potentials_transpose(w2 * Q.t11, w2 * Q.t12, grid) * mask).ravel()
    q_norm = Q.norm()
    if not np.any(rhs):
        zero = AmbientField(grid, np.zeros((3,) + grid.shape))
        return CRSolveResult(zero, np.zeros((2, n)), 0, 0.0, 0.0)
    counter = [0]

    def count(_):
        counter[0] += 1

    A = LinearOperator((2 * n, 2 * n), matvec=normal, dtype=float)
    M = LinearOperator((2 * n, 2 * n), matvec=lambda r: precond * r, dtype=float)
    x, info = cg(A, rhs, rtol=CG_TOL, atol=0.0, maxiter=CG_MAXITER, M=M, callback=count)
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge in {CG_MAXITER} iterations")
    c = x.reshape(2, n) * mask
    v = tangent_from_potentials(c, grid)
    # Dv - Q' is orthogonal-complement free, so the normal-equation residual measures it
    proj_resid = float(np.linalg.norm(normal(x) - rhs) / np.linalg.norm(rhs))
    stab = sobolev_norm(v, 1) / q_norm if q_norm > 0 else 0.0
    return CRSolveResult(v, c, counter[0], proj_resid, stab)


def cr_solve(Q: TracelessTensorField) -> AmbientField:
    """Kernel-orthogonal tangent v with Dv equal to the range projection of Q."""
    return cr_solve_detailed(Q).v


# ---------------------------------------------------------------------------
# conformalization of star-shaped surfaces
# ---------------------------------------------------------------------------


def _radial_lift(rho_coeffs, v, x, iters=100):
    """Points rho(psi) psi on the surface whose tangent part at x equals v."""
    vv = np.sum(v * v, axis=0)
    s = np.ones_like(vv)
    for _ in range(iters):
        psi = (x + s * v) / np.sqrt(1.0 + s * s * vv)
        r = evaluate_points(rho_coeffs, psi)
        s_new = np.sqrt(1.0 + s * s * vv) / r
        done = np.max(np.abs(s_new - s)) <= 1e-15 * np.max(np.abs(s_new))
        s = s_new
        if done:
            break
    psi = (x + s * v) / np.sqrt(1.0 + s * s * vv)
    return evaluate_points(rho_coeffs, psi) * psi


def conformalize(
    rho: ScalarField,
    *,
    center=None,
    initial: Immersion | None = None,
    keep_kernel: bool = False,
    tol: float = CONFORMAL_TOL,
    max_iter: int = CONFORMAL_MAXITER,
    max_deviation: float = RHO_MAX_DEVIATION,
    history: list | None = None,
):
    """Conformal parametrization of the star-shaped surface {center + rho(p) p}.

    Picard iteration v <- cr_solve(Q(dh)) followed by a radial lift that
    keeps every iterate on the surface.  Iteration stops at ``tol``, after
    ``max_iter`` steps, or once the defect stalls at the resolution floor of
    the grid.  ``initial`` warm-starts from an
    existing parametrization; with ``keep_kernel`` its conformal Killing
    component is preserved so the Mobius gauge of the start survives.
    Returns ``(immersion, iterations)``.
    """
    grid = rho.grid
    if np.min(rho.values) <= 0.0:
        raise DomainError("rho must be positive")
    dev = sobolev_norm(rho - 1.0, 2)
    if dev > max_deviation:
        raise RegimeError(f"||rho - 1||_W22 = {dev:.3e} exceeds {max_deviation}")
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    c3 = center.reshape(3, 1, 1)
    x = grid.unit_points
    rho_c = rho.coeffs.data
    if initial is None:
        f = AmbientField(grid, rho.values * x + c3)
    else:
        f = initial.f
    imm = make_immersion(f)
    defect = initial_defect = imm.conformal_defect
    if history is not None:
        history.append(defect)
    k = 0
    rises = 0
    kernel = None
    if keep_kernel:
        kernel = kernel_projection(decompose(AmbientField(grid, f.values - c3 - x)).v).values
    while defect > tol and k < max_iter:
        h = AmbientField(grid, f.values - c3 - x)
        v = cr_solve(q_form(h)).values
        if kernel is not None:
            v = v + kernel
        f = AmbientField(grid, _radial_lift(rho_c, v, x) + c3)
        imm = make_immersion(f)
        k += 1
        new = imm.conformal_defect
        if history is not None:
            history.append(new)
        change = (new - defect) / defect
        rises = rises + 1 if change > STALL_TOL else 0
        if rises >= 2:
            raise ConformalizationFailedError(
                f"conformal defect increased twice in a row (now {new:.3e})"
            )
        defect = new
        if abs(change) <= STALL_TOL:
            # a plateau above the starting defect is divergence, not the resolution floor
            if defect > (1.0 + STALL_TOL) * initial_defect:
                raise ConformalizationFailedError(f"iteration stalled at conformal defect {defect:.3e}")
            # resolution floor: the remaining defect lives above the band limit
            break
    return imm, k


# ---------------------------------------------------------------------------
# normal deviation
# ---------------------------------------------------------------------------


def nu_residual(imm: Immersion, dec: Decomposition) -> dict:
    """nu = n_f - n and the L^p norms of nu + grad z for p = 2, 4."""
    nu = AmbientField(imm.grid, imm.unit_normal.values - imm.grid.unit_points)
    r = nu + surface_gradient(dec.z)
    return {"nu": nu, "residual_Lp": {2: lp_norm(r, 2), 4: lp_norm(r, 4)}}
