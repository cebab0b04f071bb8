"""Energy identities, expansion residuals and the linear rigidity ratio.

Every quantity refers to a normalized immersion f = f0 + h, where f0 is the
standard embedding, and to the splitting h = v + z n of ``tangent``.
Integrals without a measure use the round measure dx; integrals against
dmu use the induced area element.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GaugeError, PreconditionError, RegimeError
from .geometry import (
    ROUND_VOLUME,
    Immersion,
    geometry_summary,
    h2_splitting_residual,
    make_immersion,
    minkowski_residual,
    support_function,
    volume,
    with_mean_curvature,
)
from .mobius import orthogonality_residuals
from .sphere import (
    MAX_BAND_LIMIT,
    AmbientField,
    ScalarField,
    build_grid,
    eigenvalues,
    laplacian,
    project_degrees,
    resample,
    sobolev_norm,
    sup_norm,
    surface_gradient,
)
from .tangent import Decomposition, conformal_part, cr_apply, decompose, nu_residual, q_form

VOLUME_TOL = 1e-8
DEFECT_MAX = 1e-6
DELTA_MAX = 0.5
RATIO_FLOOR = 1e-12
CALIBRATION_FACTOR = 10.0


def deviation(imm: Immersion) -> AmbientField:
    """h = f - f0."""
    return imm.f - AmbientField.identity(imm.grid)


def _dirichlet_density(field: AmbientField):
    """Pointwise |grad F|^2 summed over components."""
    grid = field.grid
    d1 = grid.synthesize_kind(field.coeffs, "d1")
    d2 = grid.synthesize_kind(field.coeffs, "d2")
    return np.sum(d1 * d1 + d2 * d2, axis=0)


def _refine(field, extra):
    return resample(field, build_grid(field.grid.band_limit + extra))


def _overintegrated(imm: Immersion) -> Immersion:
    """The same band-limited surface on a 2x grid, for integrals of non-polynomial densities.

    A substituted mean curvature (see ``with_mean_curvature``) is carried
    over as its band-limited offset from the computed one.
    """
    L = imm.grid.band_limit
    fine = make_immersion(resample(imm.f, build_grid(min(2 * L, MAX_BAND_LIMIT))))
    offset = imm.mean_curvature - make_immersion(imm.f).mean_curvature
    if np.any(offset.values):
        fine = with_mean_curvature(fine, fine.mean_curvature + resample(offset, fine.grid))
    return fine


# ---------------------------------------------------------------------------
# energy identities
# ---------------------------------------------------------------------------


def energy_excess(h: AmbientField, dec: Decomposition):
    """(E_def, E_id1, E_id2), three evaluations of int |grad f|^2 - |grad f0|^2."""
    grid = h.grid
    f0 = AmbientField.identity(grid)
    f = f0 + h
    grad_h2 = grid.integrate_values(_dirichlet_density(h))
    E_def = grid.integrate_values(_dirichlet_density(f) - _dirichlet_density(f0))
    E_id1 = 4.0 * grid.integrate_values(dec.z.values) + grad_h2
    lap_f = laplacian(f)
    E_id2 = -2.0 * grid.integrate_values(np.sum(lap_f.values * h.values, axis=0)) - grad_h2
    return float(E_def), float(E_id1), float(E_id2)


def flux_volume_residual(imm: Immersion) -> float:
    """int (f . f1 x f2 - f0 . e1 x e2) dx - 3 (|Omega| - 4 pi / 3)."""
    grid = imm.grid
    f1, f2 = imm.frame_derivatives
    flux = grid.integrate_values(np.sum(imm.f.values * np.cross(f1, f2, axis=0), axis=0))
    return float(abs(flux) - 4.0 * np.pi - 3.0 * (volume(imm) - ROUND_VOLUME))


def _check_volume(imm):
    vol = volume(imm)
    if abs(vol - ROUND_VOLUME) > VOLUME_TOL:
        raise PreconditionError(f"enclosed volume {vol:.12f} is not normalized to 4 pi / 3")


def volume_balance(dec: Decomposition, imm: Immersion) -> float:
    """int z + int z^2 for a volume-normalized surface."""
    _check_volume(imm)
    grid = dec.z.grid
    return float(grid.integrate_values(dec.z.values + dec.z.values**2))


# ---------------------------------------------------------------------------
# expansion of |grad h|^2 and the quadratic form Q(z)
# ---------------------------------------------------------------------------


def grad_zn_pointwise_residual(h: AmbientField) -> float:
    """max | |grad(z n)|^2 - |grad z|^2 - 2 z^2 | on a grid where z n is resolved."""
    fine = _refine(h, 2)
    grid = fine.grid
    x = grid.unit_points
    z = np.sum(fine.values * x, axis=0)
    zf = ScalarField(grid, z)
    zn = AmbientField(grid, z * x)
    gz = surface_gradient(zf).values
    res = _dirichlet_density(zn) - np.sum(gz * gz, axis=0) - 2.0 * z**2
    return float(np.max(np.abs(res)))


def grad_expansion_residual(h: AmbientField, dec: Decomposition | None = None) -> float:
    """int |grad h|^2 - int (|grad z|^2 + 2 z^2).

    z = h . x carries one degree more than h, so the z-terms are evaluated
    on a grid refined by one band.
    """
    grid = h.grid
    fine = _refine(h, 1)
    fg = fine.grid
    z = np.sum(fine.values * fg.unit_points, axis=0)
    gz = surface_gradient(ScalarField(fg, z)).values
    zpart = fg.integrate_values(np.sum(gz * gz, axis=0) + 2.0 * z**2)
    return float(grid.integrate_values(_dirichlet_density(h)) - zpart)


def quad_form_and_gap(z: ScalarField) -> dict:
    """Q(z) = int |grad z|^2 - 2 z^2 and the spectral gap beyond l = 1."""
    grid = z.grid
    gz = surface_gradient(z).values
    grad2 = np.sum(gz * gz, axis=0)
    Qz = grid.integrate_values(grad2 - 2.0 * z.values**2)
    low = project_degrees(z, 0, 1)
    high = z - low
    gh = surface_gradient(high).values
    gap = grid.integrate_values(np.sum(gh * gh, axis=0) - 6.0 * high.values**2)
    low_norm = float(np.sqrt(grid.integrate_values(low.values**2)))
    return {"Qz": float(Qz), "gap_residual": float(gap), "low_mode_norm": low_norm}


def low_modes(z: ScalarField) -> dict:
    grid = z.grid
    return {
        "abs_int_z": float(abs(grid.integrate_values(z.values))),
        "abs_int_zx": float(np.linalg.norm(grid.integrate_values(z.values * grid.unit_points))),
    }


# ---------------------------------------------------------------------------
# mean curvature controls
# ---------------------------------------------------------------------------


def hbar_control(imm: Immersion) -> dict:
    """H_bar - 2, phi_bar - 1 and the identity (2 - H_bar phi_bar) area = int (H - H_bar)(phi - phi_bar) dmu."""
    _check_volume(imm)
    s = geometry_summary(imm)
    phi = support_function(imm).values
    H = imm.mean_curvature.values
    phi_bar = imm.integrate(phi) / s.area
    lhs = (2.0 - s.H_bar * phi_bar) * s.area
    rhs = imm.integrate((H - s.H_bar) * (phi - phi_bar))
    fluct = s.cmc_defect_L2 * np.sqrt(imm.integrate((phi - phi_bar) ** 2))
    return {
        "hbar_minus_2": s.H_bar - 2.0,
        "phi_bar_minus_1": phi_bar - 1.0,
        "fluct_bound": float(fluct),
        "identity_residual": float(lhs - rhs),
    }


def vec_defect(imm: Immersion) -> dict:
    """int |H_vec + 2 f|^2 dmu with H_vec = -H n_f, and its reduction."""
    H = imm.mean_curvature.values
    n = imm.unit_normal.values
    f = imm.f.values
    total = imm.integrate(np.sum((-H * n + 2.0 * f) ** 2, axis=0))
    t1 = imm.integrate(H**2 - 4.0)
    t2 = imm.integrate(np.sum(f * f, axis=0) - 1.0)
    return {
        "total": total,
        "term_H2_minus_4": t1,
        "term_x2_minus_1": t2,
        "reduction_residual": total - (t1 + 4.0 * t2),
    }


# ---------------------------------------------------------------------------
# curvature equation and conformal factor
# ---------------------------------------------------------------------------


def _tensor_ambient(T11, T12, grid):
    """Trace-free frame tensor as a 3x3 ambient matrix field (9 components)."""
    e1, e2 = grid.e_theta, grid.e_phi
    M = T11 * (e1[:, None] * e1[None, :] - e2[:, None] * e2[None, :]) + T12 * (
        e1[:, None] * e2[None, :] + e2[:, None] * e1[None, :]
    )
    return M.reshape((9,) + grid.shape)


def conformal_defect_w12(imm: Immersion) -> float:
    """W^{1,2} norm of the trace-free pullback metric."""
    g0 = conformal_part(imm)
    M = _tensor_ambient(g0.t11, g0.t12, imm.grid)
    grid = imm.grid
    c = grid.analyze_values(M)
    lam = eigenvalues(grid.band_limit)
    return float(np.sqrt(np.sum((1.0 + lam) * c**2)))


def curvature_equation_residual(imm: Immersion) -> float:
    """|| Delta h - (H_vec e^{2u} + 2 f0) ||_L2 with H_vec = -H n_f."""
    grid = imm.grid
    h = deviation(imm)
    e2u = np.exp(2.0 * imm.conformal_factor.values)
    rhs = -imm.mean_curvature.values * imm.unit_normal.values * e2u + 2.0 * grid.unit_points
    r = laplacian(h).values - rhs
    return float(np.sqrt(grid.integrate_values(np.sum(r * r, axis=0))))


def conformal_factor_residual(imm: Immersion) -> float:
    """max | 2 (e^{2u} - 1) - 2 grad f0 . grad h - |grad h|^2 | over the nodes."""
    grid = imm.grid
    h = deviation(imm)
    d1h = grid.synthesize_kind(h.coeffs, "d1")
    d2h = grid.synthesize_kind(h.coeffs, "d2")
    cross = np.sum(grid.e_theta * d1h + grid.e_phi * d2h, axis=0)
    r = 2.0 * (np.exp(2.0 * imm.conformal_factor.values) - 1.0) - 2.0 * cross - np.sum(d1h**2 + d2h**2, axis=0)
    return float(np.max(np.abs(r)))


def cr_identity_residual(imm: Immersion) -> dict:
    """||Dv - Q(dh)|| and its distance to the trace-free metric (g)_0.

    v = h - (h . x) x carries two degrees more than h, so D and Q are
    evaluated on a grid refined by two bands.
    """
    h = deviation(imm)
    fine = _refine(h, 2)
    dec = decompose(fine)
    Dv = cr_apply(dec.v)
    Q = q_form(fine)
    g0 = conformal_part(make_immersion(_refine(imm.f, 2)))
    lhs = Dv - Q
    return {"dv_minus_q": lhs.norm(), "identity_residual": (lhs - g0).norm(), "q_norm": Q.norm()}


# ---------------------------------------------------------------------------
# calibration and the full report
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def round_calibration(band_limit: int) -> dict:
    """Discretization-limited residuals of the standard embedding at one band limit."""
    imm = make_immersion(AmbientField.identity(build_grid(band_limit)))
    return {
        "curvature_equation": curvature_equation_residual(imm),
        "minkowski": abs(minkowski_residual(_overintegrated(imm))),
        "conformal_factor": conformal_factor_residual(imm),
        "cmc_defect": geometry_summary(imm).cmc_defect_L2,
    }


def curvature_tolerance(imm: Immersion) -> float:
    """10x the round-sphere residual plus 10x the W^{1,2} size of (g)_0.

    Delta_{S^2} f = e^{2u} Delta_g f only holds for exactly conformal f; the
    second term bounds the departure caused by a residual conformal defect.
    """
    cal = round_calibration(imm.grid.band_limit)["curvature_equation"]
    return CALIBRATION_FACTOR * (cal + conformal_defect_w12(imm))


@dataclass(frozen=True)
class DiagnosticsReport:
    """Residuals, norms and the rigidity ratio of one normalized surface."""

    L: int
    delta: float
    u_inf: float
    cmc_defect: float
    H_bar: float
    area: float
    volume: float
    willmore: float
    conformal_defect: float
    E_def: float
    E_id1: float
    E_id2: float
    vol_balance: float
    flux_volume_residual: float
    grad_exp_residual: float
    grad_zn_pointwise_residual: float
    quad_form_Qz: float
    low_mode: dict
    low_mode_norm: float
    spectral_gap_residual: float
    hbar_minus_2: float
    phi_bar_minus_1: float
    hbar_fluct_bound: float
    hbar_identity_residual: float
    vec_defect_sq: float
    vec_defect_terms: dict
    vec_reduction_residual: float
    nu_residuals: dict
    orthogonality: dict
    minkowski_residual: float
    h2_splitting_residual: float
    curvature_equation_residual: float
    curvature_tolerance: float
    conformal_factor_residual: float
    cr_identity: dict
    coercivity_margin: float
    rigidity_ratio: float | None
    ratio_defined: bool

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def stability_report(imm: Immersion, *, defect_max: float = DEFECT_MAX, delta_max: float = DELTA_MAX) -> DiagnosticsReport:
    """Assemble every identity residual, scaling quantity and the rigidity ratio."""
    if imm.conformal_defect > defect_max:
        raise GaugeError(f"conformal defect {imm.conformal_defect:.3e} exceeds {defect_max:.1e}")
    _check_volume(imm)
    h = deviation(imm)
    delta = sobolev_norm(h, 2)
    if delta > delta_max:
        raise RegimeError(f"||h||_W22 = {delta:.3e} exceeds {delta_max}")
    dec = decompose(h)
    s = geometry_summary(imm)
    E_def, E_id1, E_id2 = energy_excess(h, dec)
    qg = quad_form_and_gap(dec.z)
    hb = hbar_control(imm)
    vd = vec_defect(imm)
    nu = nu_residual(imm, dec)["residual_Lp"]
    orth = orthogonality_residuals(h)
    u_inf = sup_norm(imm.conformal_factor)
    # H, J and n are not band-limited, so the exact integral identities are
    # checked with over-integration to separate them from aliasing
    fine = _overintegrated(imm)
    floor = max(RATIO_FLOOR, CALIBRATION_FACTOR * round_calibration(imm.grid.band_limit)["cmc_defect"])
    defined = s.cmc_defect_L2 > floor
    return DiagnosticsReport(
        L=imm.grid.band_limit,
        delta=delta,
        u_inf=u_inf,
        cmc_defect=s.cmc_defect_L2,
        H_bar=s.H_bar,
        area=s.area,
        volume=s.volume,
        willmore=s.willmore,
        conformal_defect=imm.conformal_defect,
        E_def=E_def,
        E_id1=E_id1,
        E_id2=E_id2,
        vol_balance=volume_balance(dec, imm),
        flux_volume_residual=flux_volume_residual(imm),
        grad_exp_residual=grad_expansion_residual(h, dec),
        grad_zn_pointwise_residual=grad_zn_pointwise_residual(h),
        quad_form_Qz=qg["Qz"],
        low_mode=low_modes(dec.z),
        low_mode_norm=qg["low_mode_norm"],
        spectral_gap_residual=qg["gap_residual"],
        hbar_minus_2=hb["hbar_minus_2"],
        phi_bar_minus_1=hb["phi_bar_minus_1"],
        hbar_fluct_bound=hb["fluct_bound"],
        hbar_identity_residual=hbar_control(fine)["identity_residual"],
        vec_defect_sq=vd["total"],
        vec_defect_terms={"H2_minus_4": vd["term_H2_minus_4"], "x2_minus_1": vd["term_x2_minus_1"]},
        vec_reduction_residual=vec_defect(fine)["reduction_residual"],
        nu_residuals={"L2": nu[2], "L4": nu[4]},
        orthogonality={k: np.asarray(v).tolist() for k, v in orth.items()},
        minkowski_residual=minkowski_residual(fine),
        h2_splitting_residual=h2_splitting_residual(imm),
        curvature_equation_residual=curvature_equation_residual(imm),
        curvature_tolerance=curvature_tolerance(imm),
        conformal_factor_residual=conformal_factor_residual(imm),
        cr_identity=cr_identity_residual(imm),
        coercivity_margin=6.0 - 2.0 * (s.H_bar - 1.0),
        rigidity_ratio=(delta + u_inf) / s.cmc_defect_L2 if defined else None,
        ratio_defined=bool(defined),
    )
