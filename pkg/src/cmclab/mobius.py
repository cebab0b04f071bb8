"""Mobius group of S^2, the gauge energy and its minimization.

A Mobius transformation is stored as ``phi = R o phi_v`` with R a rotation
and ``phi_v`` the boost

    phi_v(x) = ((1 - |v|^2) x + 2 (1 + v.x) v) / (1 + |v|^2 + 2 v.x),   |v| < 1.

The gauge energy of a map f is E(a, phi) = int |f o phi + a - f0|^2 dx with
f o phi evaluated spectrally at the warped nodes.  Minimization runs
Gauss-Newton in the 9-parameter chart (a, omega, v), where rotations are
updated on the left by exp(omega).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DomainError, OptimizationFailedError, RegimeError
from .sphere import AmbientField, degrees, evaluate_with_gradient, sup_norm
from .tangent import ckf_basis, decompose

ETA = 1e-3
A_MAX = 10.0
GRAD_TOL = 1e-10
MAX_ITERS = 200
N_RESTARTS = 8
REGIME_BOUND = 0.5


@dataclass(frozen=True, eq=False)
class MobiusElement:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if R.shape != (3, 3) or v.shape != (3,):
            raise DomainError("rotation must be 3x3 and v a 3-vector")
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-12 or np.linalg.det(R) <= 0.0:
            raise DomainError("rotation is not a proper orthogonal matrix")
        if np.linalg.norm(v) > 1.0 - ETA:
            raise DomainError(f"|v| = {np.linalg.norm(v):.6f} exceeds 1 - eta = {1.0 - ETA}")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_rotvec(cls, rotvec, v=(0.0, 0.0, 0.0)):
        return cls(Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix(), np.asarray(v, dtype=float))

    def __call__(self, x):
        return np.einsum("ij,j...->i...", self.rotation, apply_phi_v(self.v, x))


@dataclass(frozen=True, eq=False)
class GaugeParams:
    mobius: MobiusElement = field(default_factory=MobiusElement)
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (3,):
            raise DomainError("translation must be a 3-vector")
        if np.linalg.norm(a) > A_MAX:
            raise DomainError(f"|a| = {np.linalg.norm(a):.3f} exceeds {A_MAX}")
        object.__setattr__(self, "a", a)

    @classmethod
    def identity(cls):
        return cls()


def apply_phi_v(v, x):
    """Boost phi_v applied to unit vectors ``x`` with the Cartesian axis first."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    vv = float(v @ v)
    if vv >= 1.0:
        raise DomainError(f"|v| must be < 1, got {np.sqrt(vv):.6f}")
    vb = v.reshape((3,) + (1,) * (x.ndim - 1))
    vx = np.sum(vb * x, axis=0)
    num = (1.0 - vv) * x + 2.0 * (1.0 + vx) * vb
    return num / (1.0 + vv + 2.0 * vx)


def _phi_v_jacobian(v, x):
    """d phi_v(x) / d v with shape (3, 3, ...) indexed [output, parameter]."""
    vv = float(v @ v)
    vb = v.reshape((3,) + (1,) * (x.ndim - 1))
    vx = np.sum(vb * x, axis=0)
    N = (1.0 - vv) * x + 2.0 * (1.0 + vx) * vb
    d = 1.0 + vv + 2.0 * vx
    eye = np.eye(3).reshape((3, 3) + (1,) * (x.ndim - 1))
    dN = -2.0 * x[:, None] * vb[None, :] + 2.0 * vb[:, None] * x[None, :] + 2.0 * (1.0 + vx) * eye
    dd = 2.0 * vb + 2.0 * x
    return dN / d - N[:, None] * dd[None, :] / d**2


def compose(f: AmbientField, params: GaugeParams) -> AmbientField:
    """f o phi + a, resampled spectrally at the warped nodes."""
    y = params.mobius(f.grid.unit_points)
    vals, _ = evaluate_with_gradient(f.coeffs, y)
    return AmbientField(f.grid, vals + params.a.reshape(3, 1, 1))


def gauge_energy(f: AmbientField, params: GaugeParams) -> float:
    r = compose(f, params).values - f.grid.unit_points
    return float(f.grid.integrate_values(np.sum(r * r, axis=0)))


def _residual_jacobian(f, R, v, a):
    grid = f.grid
    x = grid.unit_points
    pv = apply_phi_v(v, x)
    y = np.einsum("ij,j...->i...", R, pv)
    vals, grads = evaluate_with_gradient(f.coeffs, y)  # grads[k, :, ...] = grad f^k
    r = vals + a.reshape(3, 1, 1) - x
    n = x.shape[1:]
    J = np.zeros((3, 9) + n)
    J[:, 0:3] = np.eye(3).reshape((3, 3) + (1,) * len(n))
    # d y / d omega = -[y]_x, so Df(y) (-[y]_x) has columns grad f^k . (e_j x y)
    for j in range(3):
        e = np.zeros((3, 1, 1))
        e[j] = 1.0
        dy = np.cross(e, y, axis=0)
        J[:, 3 + j] = np.sum(grads * dy[None], axis=1)
    dphi = np.einsum("ij,jk...->ik...", R, _phi_v_jacobian(v, x))
    J[:, 6:9] = np.einsum("kj...,jp...->kp...", grads, dphi)
    return r, J


def _energy(f, R, v, a):
    x = f.grid.unit_points
    y = np.einsum("ij,j...->i...", R, apply_phi_v(v, x))
    vals, _ = evaluate_with_gradient(f.coeffs, y)
    r = vals + a.reshape(3, 1, 1) - x
    return float(f.grid.integrate_values(np.sum(r * r, axis=0)))


@dataclass(frozen=True, eq=False)
class GaugeResult:
    params: GaugeParams
    normalized: AmbientField
    energy: float
    identity_energy: float
    gradient_norm: float
    iterations: int
    restarts: int
    aliasing: float


def _gauss_newton(f, R, v, a, max_iters, tol):
    w = f.grid.weights.ravel()
    E = _energy(f, R, v, a)
    gnorm = np.inf
    for it in range(max_iters + 1):
        r, J = _residual_jacobian(f, R, v, a)
        r, J = r.reshape(3, -1), J.reshape(3, 9, -1)
        JtWr = np.einsum("kpn,kn,n->p", J, r, w)
        gnorm = float(np.linalg.norm(2.0 * JtWr))
        if gnorm <= tol or it == max_iters:
            return R, v, a, E, gnorm, it
        H = np.einsum("kpn,kqn,n->pq", J, J, w)
        step = -np.linalg.solve(H + 1e-14 * np.trace(H) * np.eye(9), JtWr)
        slope = 2.0 * JtWr @ step
        t = 1.0
        accepted = False
        for _ in range(50):
            v_new = v + t * step[6:9]
            a_new = a + t * step[0:3]
            if np.linalg.norm(v_new) <= 1.0 - ETA and np.linalg.norm(a_new) <= A_MAX:
                R_new = Rotation.from_rotvec(t * step[3:6]).as_matrix() @ R
                E_new = _energy(f, R_new, v_new, a_new)
                if E_new <= E + 1e-4 * t * slope or E_new <= E * (1.0 + 1e-14):
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            return R, v, a, E, gnorm, it
        R = Rotation.from_matrix(R_new).as_matrix()
        v, a, E = v_new, a_new, E_new
    return R, v, a, E, gnorm, max_iters


def minimize_gauge_detailed(
    f: AmbientField,
    *,
    max_iters: int = MAX_ITERS,
    tol: float = GRAD_TOL,
    restarts: int = N_RESTARTS,
    seed: int = 0,
    regime_bound: float = REGIME_BOUND,
    initial: GaugeParams | None = None,
) -> GaugeResult:
    """Local minimizer of the gauge energy with a stationarity certificate."""
    grid = f.grid
    dev = sup_norm(f - AmbientField.identity(grid))
    if dev > regime_bound:
        raise RegimeError(f"||f - f0||_inf = {dev:.3e} exceeds {regime_bound}")
    E0 = _energy(f, np.eye(3), np.zeros(3), np.zeros(3))
    start = initial or GaugeParams.identity()
    starts = [(start.mobius.rotation, start.mobius.v, start.a)]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(
            (
                Rotation.from_rotvec(rng.normal(scale=0.1, size=3)).as_matrix(),
                rng.normal(scale=0.05, size=3),
                rng.normal(scale=0.05, size=3),
            )
        )
    best = None
    for k, (R, v, a) in enumerate(starts):
        R, v, a, E, gnorm, its = _gauss_newton(f, R, v, a, max_iters, tol)
        cand = (R, v, a, E, gnorm, its, k)
        if best is None or (gnorm > tol, E) < (best[4] > tol, best[3]):
            best = cand
        if gnorm <= tol and E <= E0 * (1.0 + 1e-12):
            break
    R, v, a, E, gnorm, its, k = best
    params = GaugeParams(MobiusElement(R, v), a)
    if gnorm > tol or E > E0 * (1.0 + 1e-12):
        raise OptimizationFailedError(
            f"gauge minimization stalled at gradient norm {gnorm:.3e} after {its} iterations",
            best=(params, E, gnorm),
        )
    normalized = compose(f, params)
    c = normalized.coeffs
    aliasing = float(np.sqrt(np.sum(c[:, degrees(grid.band_limit) > grid.band_limit - 2] ** 2)))
    return GaugeResult(params, normalized, E, E0, gnorm, its, k, aliasing)


def minimize_gauge(f: AmbientField, **kwargs):
    """(GaugeParams, f o phi0 + a0) at a stationary point of the gauge energy."""
    res = minimize_gauge_detailed(f, **kwargs)
    return res.params, res.normalized


def orthogonality_residuals(h: AmbientField) -> dict:
    """Integrals of h against constants and of its tangent/normal parts
    against the conformal Killing fields and coordinate functions."""
    grid = h.grid
    dec = decompose(h)
    basis = ckf_basis(grid)
    r_const = grid.integrate_values(h.values)
    r_rot = np.array([grid.integrate_values(np.sum(dec.v.values * b.values, axis=0)) for b in basis[:3]])
    r_grad = np.array([grid.integrate_values(np.sum(dec.v.values * b.values, axis=0)) for b in basis[3:]])
    r_zx = grid.integrate_values(dec.z.values * grid.unit_points)
    return {"r_const": r_const, "r_rot": r_rot, "r_grad": r_grad, "r_zx": r_zx}
