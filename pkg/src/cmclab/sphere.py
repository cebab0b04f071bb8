"""Quadrature, spherical-harmonic transforms and spectral calculus on S^2.

Real orthonormal harmonics without the Condon-Shortley phase::

    Y_{l,0}  = P_l^0(cos t)
    Y_{l,m}  = sqrt(2) P_l^m(cos t) cos(m p)      m > 0
    Y_{l,-m} = sqrt(2) P_l^m(cos t) sin(m p)      m > 0

with P_l^m scaled so every Y has unit L2 norm on the unit sphere.  In this
convention Y_{1,1}, Y_{1,-1}, Y_{1,0} are sqrt(3/4pi) times x, y, z.

Coefficients are stored flat, ``coeffs[l*l + l + m]`` for 0 <= l <= L and
|m| <= l, so a band limit L gives ``(L+1)**2`` entries.

Grids use L+1 Gauss-Legendre colatitudes and 2L+2 equispaced longitudes,
which integrates every product of harmonics of total degree <= 2L exactly.
No node sits on a pole.  Tangent-plane quantities use the orthonormal frame
``e1 = d/dtheta``, ``e2 = (1/sin theta) d/dphi``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import roots_legendre

from .errors import ConfigurationError, ResolutionError

MIN_BAND_LIMIT = 4
MAX_BAND_LIMIT = 256

# frame-derivative kinds: (theta table, phi factor)
#   val  f               d1   d f / d theta        d2   (1/sin) d f / d phi
#   h11  Hess(e1, e1)    h12  Hess(e1, e2)         h22  Hess(e2, e2)
# where Hess is the covariant Hessian of the round metric.
KINDS = ("val", "d1", "d2", "h11", "h12", "h22")
_DPHI_KINDS = frozenset({"d2", "h12"})
_POINT_CHUNK = 2048


def n_coeffs(band_limit: int) -> int:
    return (band_limit + 1) ** 2


def lm_index(l: int, m: int) -> int:
    """Flat position of the (l, m) coefficient."""
    if abs(m) > l:
        raise ValueError(f"|m| must not exceed l, got l={l}, m={m}")
    return l * l + l + m


def degrees(band_limit: int) -> np.ndarray:
    """Degree l of every flat coefficient slot."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(band_limit + 1)])


def orders(band_limit: int) -> np.ndarray:
    """Order m of every flat coefficient slot."""
    return np.concatenate([np.arange(-l, l + 1) for l in range(band_limit + 1)])


def eigenvalues(band_limit: int) -> np.ndarray:
    """Laplace-Beltrami eigenvalue l(l+1) of every flat coefficient slot."""
    l = degrees(band_limit)
    return (l * (l + 1)).astype(float)


# ---------------------------------------------------------------------------
# associated Legendre functions
# ---------------------------------------------------------------------------


def _legendre(cos_t, sin_t, lmax, nderiv=0):
    """Normalized P_l^m(cos t) and up to two theta derivatives.

    Returns an array of shape (nderiv+1, lmax+1, lmax+2, n) indexed
    [derivative, l, m, point]; entries with m > l are zero.  Derivatives use
    the ladder relation in m, which never divides by sin t.
    """
    n = cos_t.shape[0]
    P = np.zeros((lmax + 1, lmax + 2, n))
    pmm = np.full(n, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = pmm * np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_t
        P[m, m] = pmm
        if m + 1 <= lmax:
            P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * cos_t * pmm
    for l in range(2, lmax + 1):
        m = np.arange(l - 1)
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
        P[l, : l - 1] = a[:, None] * (cos_t * P[l - 1, : l - 1] - b[:, None] * P[l - 2, : l - 1])

    out = [P]
    if nderiv:
        l = np.arange(lmax + 1)[:, None]
        m = np.arange(1, lmax + 1)[None, :]
        up = np.sqrt(np.clip((l + m) * (l - m + 1), 0, None))[..., None]
        down = np.sqrt(np.clip((l - m) * (l + m + 1), 0, None))[..., None]
        mask = (np.arange(lmax + 2)[None, :] <= np.arange(lmax + 1)[:, None])[..., None]
        for _ in range(nderiv):
            src = out[-1]
            d = np.zeros_like(src)
            d[:, 0] = -np.sqrt(l * (l + 1.0)) * src[:, 1]
            d[:, 1 : lmax + 1] = 0.5 * (up * src[:, 0:lmax] - down * src[:, 2 : lmax + 2])
            out.append(d * mask)
    return np.stack(out)


def _kind_tables(cos_t, sin_t, lmax, kinds):
    """Theta tables (lmax+1, lmax+1, n) for each requested derivative kind."""
    nderiv = 2 if any(k.startswith("h") for k in kinds) else (1 if "d1" in kinds else 0)
    leg = _legendre(cos_t, sin_t, lmax, nderiv)[:, :, : lmax + 1]
    P = leg[0]
    m = np.arange(lmax + 1)[None, :, None].astype(float)
    inv_sin = 1.0 / np.where(sin_t == 0.0, np.finfo(float).tiny, sin_t)
    cot = cos_t * inv_sin
    tables = {}
    for kind in kinds:
        if kind == "val":
            tables[kind] = P
        elif kind == "d1":
            tables[kind] = leg[1]
        elif kind == "d2":
            tables[kind] = P * inv_sin
        elif kind == "h11":
            tables[kind] = leg[2]
        elif kind == "h12":
            tables[kind] = (leg[1] - cot * P) * inv_sin
        elif kind == "h22":
            tables[kind] = -(m * m) * P * inv_sin**2 + cot * leg[1]
        else:
            raise ValueError(f"unknown derivative kind {kind!r}")
    return tables


# ---------------------------------------------------------------------------
# flat <-> (cos, sin) coefficient blocks
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _block_index(lmax):
    ls, ms = np.tril_indices(lmax + 1)
    pos = ls * ls + ls + ms
    sel = ms > 0
    return ls, ms, pos, ls[sel], ms[sel], (ls * ls + ls - ms)[sel]


def _split(coeffs, lmax):
    ls, ms, pos, ls_s, ms_s, neg = _block_index(lmax)
    lead = coeffs.shape[:-1]
    A = np.zeros(lead + (lmax + 1, lmax + 1))
    B = np.zeros(lead + (lmax + 1, lmax + 1))
    A[..., ls, ms] = coeffs[..., pos]
    B[..., ls_s, ms_s] = coeffs[..., neg]
    return A, B


def _merge(A, B, lmax):
    ls, ms, pos, ls_s, ms_s, neg = _block_index(lmax)
    out = np.zeros(A.shape[:-2] + (n_coeffs(lmax),))
    out[..., pos] = A[..., ls, ms]
    out[..., neg] = B[..., ls_s, ms_s]
    return out


def _pad(coeffs, band_limit):
    """Zero-pad or check a flat coefficient array to the given band limit."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    have = int(round(np.sqrt(n))) - 1
    if n_coeffs(have) != n:
        raise ValueError(f"coefficient length {n} is not a square")
    if have > band_limit:
        raise ResolutionError(f"coefficients of band limit {have} exceed grid band limit {band_limit}")
    if have == band_limit:
        return coeffs
    out = np.zeros(coeffs.shape[:-1] + (n_coeffs(band_limit),))
    out[..., :n] = coeffs
    return out


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Gauss-Legendre x uniform product grid on S^2.

    Arrays on the grid have trailing shape (n_theta, n_phi); ambient vectors
    put the Cartesian component first.
    """

    band_limit: int
    n_theta: int
    n_phi: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @cached_property
    def sin_theta(self):
        return np.sin(self.theta)[:, None] * np.ones(self.n_phi)

    @cached_property
    def cos_theta(self):
        return np.cos(self.theta)[:, None] * np.ones(self.n_phi)

    @cached_property
    def nodes(self):
        """(n_theta * n_phi, 2) array of (theta, phi) pairs."""
        t, p = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.stack([t.ravel(), p.ravel()], axis=1)

    @cached_property
    def unit_points(self):
        st, ct = self.sin_theta, self.cos_theta
        p = self.phi[None, :]
        return np.stack([st * np.cos(p), st * np.sin(p), ct])

    @cached_property
    def e_theta(self):
        st, ct = self.sin_theta, self.cos_theta
        p = self.phi[None, :]
        return np.stack([ct * np.cos(p), ct * np.sin(p), -st])

    @cached_property
    def e_phi(self):
        p = self.phi[None, :] * np.ones((self.n_theta, 1))
        return np.stack([-np.sin(p), np.cos(p), np.zeros_like(p)])

    @cached_property
    def _trig(self):
        m = np.arange(self.band_limit + 1)[:, None]
        norm = np.where(m == 0, 1.0, np.sqrt(2.0))
        C = norm * np.cos(m * self.phi[None, :])
        S = norm * np.sin(m * self.phi[None, :])
        return C, S

    @cached_property
    def _tables(self):
        ct = np.cos(self.theta)
        st = np.sin(self.theta)
        return _kind_tables(ct, st, self.band_limit, KINDS)

    def synthesize_kind(self, coeffs, kind="val"):
        """Values of a frame derivative of the band-limited function with ``coeffs``.

        ``coeffs`` may carry leading batch axes.
        """
        L = self.band_limit
        A, B = _split(_pad(coeffs, L), L)
        T = self._tables[kind]
        C, S = self._trig
        Am = np.einsum("...lm,lmi->...mi", A, T, optimize=True)
        Bm = np.einsum("...lm,lmi->...mi", B, T, optimize=True)
        if kind in _DPHI_KINDS:
            m = np.arange(L + 1)[:, None]
            return np.einsum("...mi,mj->...ij", -m * Am, S) + np.einsum("...mi,mj->...ij", m * Bm, C)
        return np.einsum("...mi,mj->...ij", Am, C) + np.einsum("...mi,mj->...ij", Bm, S)

    def synthesize_kind_transpose(self, values, kind="val"):
        """Exact transpose of :meth:`synthesize_kind` (no quadrature weights)."""
        L = self.band_limit
        T = self._tables[kind]
        C, S = self._trig
        Vc = np.einsum("...ij,mj->...mi", values, C)
        Vs = np.einsum("...ij,mj->...mi", values, S)
        if kind in _DPHI_KINDS:
            m = np.arange(L + 1)[:, None]
            Vc, Vs = -m * Vs, m * Vc
        A = np.einsum("lmi,...mi->...lm", T, Vc, optimize=True)
        B = np.einsum("lmi,...mi->...lm", T, Vs, optimize=True)
        return _merge(A, B, L)

    def analyze_values(self, values):
        """Quadrature projection of grid values onto Y_{lm}, l <= L."""
        return self.synthesize_kind_transpose(np.asarray(values) * self.weights, "val")

    def integrate_values(self, values):
        return np.einsum("...ij,ij->...", values, self.weights)


@functools.lru_cache(maxsize=None)
def build_grid(band_limit: int) -> QuadratureGrid:
    """Gauss-Legendre x uniform grid exact for harmonic products of degree <= 2L."""
    if not isinstance(band_limit, (int, np.integer)) or isinstance(band_limit, bool):
        raise ConfigurationError(f"band limit must be an integer, got {band_limit!r}")
    if not MIN_BAND_LIMIT <= band_limit <= MAX_BAND_LIMIT:
        raise ConfigurationError(
            f"band limit must lie in [{MIN_BAND_LIMIT}, {MAX_BAND_LIMIT}], got {band_limit}"
        )
    L = int(band_limit)
    x, w = roots_legendre(L + 1)
    order = np.argsort(-x)  # ascending colatitude
    x, w = x[order], w[order]
    theta = np.arctan2(np.sqrt((1.0 - x) * (1.0 + x)), x)
    n_phi = 2 * L + 2
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    weights = np.outer(w, np.full(n_phi, 2.0 * np.pi / n_phi))
    for arr in (theta, phi, weights):
        arr.setflags(write=False)
    return QuadratureGrid(L, L + 1, n_phi, theta, phi, weights)


# ---------------------------------------------------------------------------
# field types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Flat real harmonic coefficients; ``data[l*l + l + m]`` holds (l, m)."""

    band_limit: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (n_coeffs(self.band_limit),):
            raise ValueError(f"expected {n_coeffs(self.band_limit)} coefficients, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    def __getitem__(self, lm):
        l, m = lm
        return self.data[lm_index(l, m)]

    def __len__(self):
        return self.data.shape[0]

    @classmethod
    def zeros(cls, band_limit):
        return cls(band_limit, np.zeros(n_coeffs(band_limit)))

    @classmethod
    def single(cls, band_limit, l, m, value=1.0):
        c = np.zeros(n_coeffs(band_limit))
        c[lm_index(l, m)] = value
        return cls(band_limit, c)


def _check_grid(a, b):
    if a.grid is not b.grid:
        raise ValueError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a real function on a quadrature grid."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values of shape {values.shape} do not match grid {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def coeffs(self) -> SpectralCoeffs:
        return SpectralCoeffs(self.grid.band_limit, self.grid.analyze_values(self.values))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _check_grid(self, other)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _check_grid(self, other)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            _check_grid(self, other)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * other)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class AmbientField:
    """Samples of a map S^2 -> R^3; ``values`` has shape (3, n_theta, n_phi)."""

    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (3,) + self.grid.shape:
            raise ValueError(f"values of shape {values.shape} do not match grid {(3,) + self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def coeffs(self) -> np.ndarray:
        """(3, (L+1)^2) array of component coefficients."""
        c = self.grid.analyze_values(self.values)
        c.setflags(write=False)
        return c

    @property
    def components(self):
        return tuple(ScalarField(self.grid, v) for v in self.values)

    @classmethod
    def from_components(cls, a, b, c):
        _check_grid(a, b)
        _check_grid(a, c)
        return cls(a.grid, np.stack([a.values, b.values, c.values]))

    @classmethod
    def identity(cls, grid):
        """The standard embedding f0(x) = x."""
        return cls(grid, grid.unit_points)

    @classmethod
    def constant(cls, grid, vec):
        vec = np.asarray(vec, dtype=float).reshape(3, 1, 1)
        return cls(grid, np.broadcast_to(vec, (3,) + grid.shape))

    def dot(self, other):
        if isinstance(other, AmbientField):
            _check_grid(self, other)
            other = other.values
        else:
            other = np.asarray(other)
            if other.shape == (3,):
                other = other.reshape(3, 1, 1)
        return ScalarField(self.grid, np.sum(self.values * other, axis=0))

    def norm(self):
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=0)))

    def __add__(self, other):
        if isinstance(other, AmbientField):
            _check_grid(self, other)
            return AmbientField(self.grid, self.values + other.values)
        return AmbientField(self.grid, self.values + np.asarray(other, dtype=float).reshape(3, 1, 1))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, AmbientField):
            _check_grid(self, other)
            return AmbientField(self.grid, self.values - other.values)
        return AmbientField(self.grid, self.values - np.asarray(other, dtype=float).reshape(3, 1, 1))

    def __neg__(self):
        return AmbientField(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            _check_grid(self, other)
            return AmbientField(self.grid, self.values * other.values)
        return AmbientField(self.grid, self.values * other)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def analyze(field: ScalarField) -> SpectralCoeffs:
    return field.coeffs


def synthesize(coeffs: SpectralCoeffs, grid: QuadratureGrid) -> ScalarField:
    """Sample a band-limited function on ``grid``."""
    if coeffs.band_limit > grid.band_limit:
        raise ResolutionError(
            f"coefficients of band limit {coeffs.band_limit} exceed grid band limit {grid.band_limit}"
        )
    field = ScalarField(grid, grid.synthesize_kind(coeffs.data))
    padded = _pad(coeffs.data, grid.band_limit)
    field.__dict__["coeffs"] = SpectralCoeffs(grid.band_limit, padded)
    return field


def ylm(grid: QuadratureGrid, l: int, m: int) -> ScalarField:
    """Y_{l,m} sampled on ``grid``."""
    return synthesize(SpectralCoeffs.single(grid.band_limit, l, m), grid)


def _coeff_array(field):
    return field.coeffs.data if isinstance(field, ScalarField) else field.coeffs


def _rebuild(field, coeffs):
    grid = field.grid
    if isinstance(field, ScalarField):
        return synthesize(SpectralCoeffs(grid.band_limit, coeffs), grid)
    return AmbientField(grid, grid.synthesize_kind(coeffs))


def laplacian(field):
    """Round Laplace-Beltrami operator; Delta Y_{lm} = -l(l+1) Y_{lm}."""
    lam = eigenvalues(field.grid.band_limit)
    return _rebuild(field, -lam * _coeff_array(field))


def project_degrees(field, lmin=0, lmax=None):
    """Keep only the harmonic content with lmin <= l <= lmax."""
    L = field.grid.band_limit
    lmax = L if lmax is None else lmax
    l = degrees(L)
    keep = (l >= lmin) & (l <= lmax)
    return _rebuild(field, _coeff_array(field) * keep)


def frame_derivatives(coeffs, grid: QuadratureGrid, kinds=("d1", "d2")):
    """Dict of frame derivatives of a band-limited (possibly batched) function."""
    return {k: grid.synthesize_kind(coeffs, k) for k in kinds}


def surface_gradient(field: ScalarField) -> AmbientField:
    """Tangential gradient as an ambient R^3-valued field."""
    grid = field.grid
    d = frame_derivatives(field.coeffs.data, grid)
    return AmbientField(grid, d["d1"] * grid.e_theta + d["d2"] * grid.e_phi)


def ambient_differential(field: AmbientField):
    """(dF(e1), dF(e2)), each of shape (3, n_theta, n_phi)."""
    d = frame_derivatives(field.coeffs, field.grid)
    return d["d1"], d["d2"]


def integrate(field):
    """Quadrature integral over S^2 (a 3-vector for ambient fields)."""
    return field.grid.integrate_values(field.values)


def l2_inner(a, b) -> float:
    _check_grid(a, b)
    return float(np.sum(a.grid.integrate_values(a.values * b.values)))


def lp_norm(field, p=2.0) -> float:
    """L^p norm over the round sphere of |field| (pointwise Euclidean norm)."""
    vals = field.values if isinstance(field, ScalarField) else np.sqrt(np.sum(field.values**2, axis=0))
    return float(field.grid.integrate_values(np.abs(vals) ** p) ** (1.0 / p))


def sobolev_norm(field, order: int = 0) -> float:
    """W^{s,2} norm: sqrt(sum_{l,m} (1 + l(l+1))^s |c_lm|^2), summed over components."""
    if order not in (0, 1, 2):
        raise ValueError(f"Sobolev order must be 0, 1 or 2, got {order}")
    lam = eigenvalues(field.grid.band_limit)
    c = _coeff_array(field)
    return float(np.sqrt(np.sum((1.0 + lam) ** order * c**2)))


def resample(field, grid: QuadratureGrid):
    """Re-sample the band-limited content of ``field`` on another grid.

    Coarser targets truncate the expansion.
    """
    c = _coeff_array(field)
    L = min(field.grid.band_limit, grid.band_limit)
    c = c[..., : n_coeffs(L)]
    if isinstance(field, ScalarField):
        return synthesize(SpectralCoeffs(L, c), grid)
    return AmbientField(grid, grid.synthesize_kind(c))


def sup_norm(field) -> float:
    """max |field| over a grid refined 2x by resampling the coefficients."""
    fine = build_grid(min(2 * field.grid.band_limit, MAX_BAND_LIMIT))
    vals = resample(field, fine).values
    if isinstance(field, AmbientField):
        vals = np.sqrt(np.sum(vals**2, axis=0))
    return float(np.max(np.abs(vals)))


# ---------------------------------------------------------------------------
# evaluation at arbitrary points
# ---------------------------------------------------------------------------


def angles_of(points):
    """(theta, phi) of unit vectors with Cartesian axis first."""
    x, y, z = points
    return np.arctan2(np.hypot(x, y), z), np.arctan2(y, x)


def evaluate(coeffs, theta, phi, kinds=("val",)):
    """Frame derivatives of a band-limited function at arbitrary points.

    ``coeffs`` has shape (..., (L+1)^2); ``theta`` and ``phi`` share any
    shape.  Returns a dict kind -> array of shape (...,) + theta.shape.
    Only ``val``, ``d1`` and ``d2`` are supported off-grid.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    L = int(round(np.sqrt(coeffs.shape[-1]))) - 1
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    shape = theta.shape
    t, p = theta.ravel(), phi.ravel()
    A, B = _split(coeffs, L)
    lead = coeffs.shape[:-1]
    out = {k: np.empty(lead + (t.size,)) for k in kinds}
    m = np.arange(L + 1)[:, None]
    norm = np.where(m == 0, 1.0, np.sqrt(2.0))
    for start in range(0, t.size, _POINT_CHUNK):
        sl = slice(start, start + _POINT_CHUNK)
        tables = _kind_tables(np.cos(t[sl]), np.sin(t[sl]), L, kinds)
        C = norm * np.cos(m * p[None, sl])
        S = norm * np.sin(m * p[None, sl])
        for kind in kinds:
            T = tables[kind]
            Am = np.einsum("...lm,lmp->...mp", A, T, optimize=True)
            Bm = np.einsum("...lm,lmp->...mp", B, T, optimize=True)
            if kind in _DPHI_KINDS:
                val = np.sum(-m * Am * S + m * Bm * C, axis=-2)
            else:
                val = np.sum(Am * C + Bm * S, axis=-2)
            out[kind][..., sl] = val
    return {k: v.reshape(lead + shape) for k, v in out.items()}


def evaluate_points(coeffs, points):
    """Values of a band-limited function at unit vectors ``points`` (3, ...)."""
    theta, phi = angles_of(np.asarray(points))
    return evaluate(coeffs, theta, phi, ("val",))["val"]


def evaluate_with_gradient(coeffs, points):
    """Values and ambient tangential gradients at unit vectors ``points``.

    Returns (values, grad) with grad of shape (..., 3) + points.shape[1:].
    """
    points = np.asarray(points)
    theta, phi = angles_of(points)
    d = evaluate(coeffs, theta, phi, ("val", "d1", "d2"))
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
    e_t = np.stack([ct * cp, ct * sp, -st])
    e_p = np.stack([-sp, cp, np.zeros_like(sp)])
    # broadcast (..., n) against (3, n)
    d1 = np.expand_dims(d["d1"], axis=-1 - theta.ndim)
    d2 = np.expand_dims(d["d2"], axis=-1 - theta.ndim)
    return d["val"], d1 * e_t + d2 * e_p
