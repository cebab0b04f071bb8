"""Differential geometry of immersions f: S^2 -> R^3 sampled on a quadrature grid.

All tangent quantities are expressed in the orthonormal round frame
(e1, e2) = (d/dtheta, (1/sin theta) d/dphi), so the metric components
``g_ij = df(e_i) . df(e_j)`` equal the identity for the standard embedding and
``sqrt(det g)`` is the area element relative to the round measure dx.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ImmersionDegenerateError, OrientationError
from .sphere import AmbientField, ScalarField

DEGENERACY_THRESHOLD = 1e-6
ROUND_VOLUME = 4.0 * np.pi / 3.0


@dataclass(frozen=True, eq=False)
class Immersion:
    """An immersion of S^2 with its derived geometry.

    ``metric`` holds (g11, g12, g22) and ``frame_derivatives`` holds
    (df(e1), df(e2)), each of shape (3, n_theta, n_phi).
    """

    f: AmbientField
    frame_derivatives: tuple
    metric: tuple
    area_element: ScalarField
    unit_normal: AmbientField
    mean_curvature: ScalarField
    conformal_factor: ScalarField
    conformal_defect: float

    @property
    def grid(self):
        return self.f.grid

    def integrate(self, values):
        """Integral of grid values against the induced area measure."""
        return float(self.grid.integrate_values(np.asarray(values) * self.area_element.values))


@dataclass(frozen=True)
class GeometrySummary:
    area: float
    volume: float
    willmore: float
    H_bar: float
    cmc_defect_L2: float


def traceless_metric(g11, g12, g22):
    """Trace-free part (T11, T12) of a frame metric; T22 = -T11."""
    return 0.5 * (g11 - g22), g12


def make_immersion(f: AmbientField, threshold: float = DEGENERACY_THRESHOLD) -> Immersion:
    """Compute metric, outward normal, mean curvature and conformal data of ``f``.

    H follows from the second fundamental form, so ``f`` need not be
    conformal.  The normal is oriented so the enclosed volume is positive,
    which makes H = 2 on the unit sphere.
    """
    grid = f.grid
    fc = f.coeffs
    f1 = grid.synthesize_kind(fc, "d1")
    f2 = grid.synthesize_kind(fc, "d2")
    g11 = np.sum(f1 * f1, axis=0)
    g12 = np.sum(f1 * f2, axis=0)
    g22 = np.sum(f2 * f2, axis=0)
    cross = np.cross(f1, f2, axis=0)
    J = np.sqrt(np.sum(cross**2, axis=0))
    if np.min(J) < threshold:
        raise ImmersionDegenerateError(
            f"area element {np.min(J):.3e} below threshold {threshold:.1e}"
        )
    n = cross / J
    if grid.integrate_values(np.sum(f.values * n, axis=0) * J) < 0.0:
        n = -n
    II11 = np.sum(grid.synthesize_kind(fc, "h11") * n, axis=0)
    II12 = np.sum(grid.synthesize_kind(fc, "h12") * n, axis=0)
    II22 = np.sum(grid.synthesize_kind(fc, "h22") * n, axis=0)
    det = g11 * g22 - g12 * g12
    H = -(g22 * II11 - 2.0 * g12 * II12 + g11 * II22) / det
    T11, T12 = traceless_metric(g11, g12, g22)
    defect = float(np.sqrt(grid.integrate_values(2.0 * (T11**2 + T12**2))))
    return Immersion(
        f=f,
        frame_derivatives=(f1, f2),
        metric=(g11, g12, g22),
        area_element=ScalarField(grid, J),
        unit_normal=AmbientField(grid, n),
        mean_curvature=ScalarField(grid, H),
        conformal_factor=ScalarField(grid, 0.5 * np.log(J)),
        conformal_defect=defect,
    )


def with_mean_curvature(imm: Immersion, H: ScalarField) -> Immersion:
    """Copy of ``imm`` carrying a substituted mean curvature (negative controls)."""
    return replace(imm, mean_curvature=H)


def support_function(imm: Immersion) -> ScalarField:
    """phi = n_f . f."""
    return imm.unit_normal.dot(imm.f)


def area(imm: Immersion) -> float:
    return imm.integrate(1.0)


def volume(imm: Immersion) -> float:
    """Enclosed volume through the flux (1/3) int f . n_f dmu."""
    return imm.integrate(support_function(imm).values) / 3.0


def geometry_summary(imm: Immersion) -> GeometrySummary:
    H = imm.mean_curvature.values
    A = area(imm)
    H_bar = imm.integrate(H) / A
    return GeometrySummary(
        area=A,
        volume=volume(imm),
        willmore=imm.integrate(H**2),
        H_bar=H_bar,
        cmc_defect_L2=float(np.sqrt(imm.integrate((H - H_bar) ** 2))),
    )


def normalize_volume(imm: Immersion) -> Immersion:
    """Rescale so the enclosed volume equals 4 pi / 3."""
    vol = volume(imm)
    if not vol > 0.0:
        raise OrientationError(f"enclosed volume must be positive, got {vol:.6e}")
    lam = (ROUND_VOLUME / vol) ** (1.0 / 3.0)
    if lam == 1.0:
        return imm
    return make_immersion(lam * imm.f)


def minkowski_residual(imm: Immersion) -> float:
    """int H (n_f . f) dmu - 2 area, zero for every closed surface."""
    return imm.integrate(imm.mean_curvature.values * support_function(imm).values) - 2.0 * area(imm)


def h2_splitting_residual(imm: Immersion) -> float:
    """int H^2 - (int (H - H_bar)^2 + H_bar^2 area), an algebraic identity."""
    s = geometry_summary(imm)
    return s.willmore - (s.cmc_defect_L2**2 + s.H_bar**2 * s.area)


def willmore_threshold_check(imm: Immersion, alpha: float) -> dict:
    """Compare the Willmore energy with the sub-two-spheres bound 32 pi (1 - alpha)."""
    if not 0.0 < alpha < 0.5:
        raise ConfigurationError(f"alpha must lie in (0, 1/2), got {alpha}")
    s = geometry_summary(imm)
    threshold = 32.0 * np.pi * (1.0 - alpha)
    return {
        "willmore": s.willmore,
        "threshold": threshold,
        "passes": bool(s.willmore < threshold),
        "single_bubble_product": s.H_bar**2 * s.area,
    }
