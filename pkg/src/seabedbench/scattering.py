"""Variable-density Helmholtz scattering on rough two-layer templates.

The scattered field is computed in a contrast-source formulation against a
homogeneous-water background: the analytic incident plane wave is exact for
the background, so the right-hand side -(L_medium - L_water) p_in is supported
only where the medium differs from water.  The operator is the Sturm-Liouville
form of the variable-density Helmholtz equation,

    div((1/rho) grad p) + (ktilde^2 / rho) p = 0,
    ktilde = omega/c - i alpha_np,

with the attenuating branch Im(ktilde) < 0 because the incident wave's
e^{-i k . r} spatial convention makes that the decaying one.  It is
discretized with a 5-point conservative stencil on a uniform grid.  Complex
coordinate stretching (PML, quadratic profile) is applied on all four sides
with the material coefficients continued outward.  Rough interfaces are
handled by local coefficient assignment: face coefficients use the
series-averaged density along the flux path and the diagonal term uses the
cell-averaged complex potential, so no boundary-fitted meshing is needed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import brentq

from .environments import HighFreqTemplate, RoughnessSpec, attenuation_to_nepers
from .roughness import SurfaceProfile, flat_surface, generate_surface

DEFAULT_NODES_PER_WAVELENGTH = 12.0
DEFAULT_PML_WAVELENGTHS = 1.5
PML_TARGET_REFLECTION = 1e-4
# fixed vertical extent of the solve region; holds every catalog thickness
# plus margin below, and observation circles (z0=1, r=2.5 wavelengths) above
DEFAULT_Z_TOP = 1.4
DEFAULT_Z_BOTTOM = -1.35

WATER, TOP_SEDIMENT, BOTTOM_SEDIMENT = 0, 1, 2


class GeometryError(ValueError):
    """Raised when an interface leaves the solve region."""


class SamplingError(ValueError):
    """Raised for sample points in the PML or outside the grid."""


class SolverError(RuntimeError):
    """Raised when the linear solve fails its residual contract."""


@dataclass(frozen=True)
class IncidentSpec:
    """Incident plane wave: direction vector k_theta = k (sin t, -cos t)."""

    angle: float
    wavenumber: float

    @classmethod
    def from_template(cls, template: HighFreqTemplate) -> "IncidentSpec":
        return cls(angle=template.incident_angle, wavenumber=template.wavenumber)

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.sin(self.angle), -math.cos(self.angle)])

    @property
    def vector(self) -> np.ndarray:
        return self.wavenumber * self.direction


def incident_field(spec: IncidentSpec, points) -> np.ndarray:
    """exp(-i k_theta . (x, z)) at each point; points has shape (..., 2)."""
    pts = np.asarray(points, dtype=float)
    phase = pts[..., 0] * spec.vector[0] + pts[..., 1] * spec.vector[1]
    return np.exp(-1j * phase)


@dataclass(frozen=True)
class LayeredDomain:
    """Template geometry plus discretization and PML choices."""

    template: HighFreqTemplate
    surface: SurfaceProfile
    bottom_surface: SurfaceProfile | None = None   # roughness of the second interface
    nodes_per_wavelength: float = DEFAULT_NODES_PER_WAVELENGTH
    pml_wavelengths: float = DEFAULT_PML_WAVELENGTHS
    z_top: float = DEFAULT_Z_TOP
    z_bottom: float = DEFAULT_Z_BOTTOM

    def __post_init__(self):
        if self.nodes_per_wavelength < 8:
            raise ValueError("nodes_per_wavelength must be at least 8")
        if self.z_top <= 0 or self.z_bottom >= 0:
            raise ValueError("z extent must bracket the mean interface z = 0")

    def grid_step(self) -> float:
        t = self.template
        slowest = min(t.water_speed, t.top_speed, t.bottom_speed)
        return slowest / t.frequency / self.nodes_per_wavelength


def domain_for_template(template: HighFreqTemplate, surface: SurfaceProfile | None = None,
                        surface_points: int = 1024, **kwargs) -> LayeredDomain:
    """Build a LayeredDomain, generating the rough interface from the template's
    roughness spec when no profile is supplied."""
    if surface is None:
        r = template.roughness
        if r.rms_height == 0.0:
            surface = flat_surface(template.width)
        else:
            surface = generate_surface(template.width, surface_points,
                                       r.rms_height, r.corr_length, r.seed)
    return LayeredDomain(template=template, surface=surface, **kwargs)


@dataclass
class DiscreteSystem:
    """Assembled sparse complex system for the scattered field."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    x: np.ndarray
    z: np.ndarray
    h: float
    pml_cells: int
    material: np.ndarray          # node material labels, shape (nx, nz)
    template: HighFreqTemplate
    surface: SurfaceProfile
    incident_vector: tuple = (0.0, 0.0)   # discrete incident wavevector

    @property
    def n_unknowns(self) -> int:
        return self.rhs.size


@dataclass
class FieldSolution:
    """Complex scattered pressure on the grid with an interpolation contract."""

    x: np.ndarray
    z: np.ndarray
    values: np.ndarray            # (nx, nz) complex
    h: float
    pml_cells: int
    residual: float
    material: np.ndarray | None = None
    template: HighFreqTemplate | None = None
    incident_vector: tuple = (0.0, 0.0)
    _interp: object = field(default=None, repr=False, compare=False)
    _grad_interp: object = field(default=None, repr=False, compare=False)

    @property
    def n_unknowns(self) -> int:
        return self.values.size

    def physical_bounds(self):
        p = self.pml_cells
        return (self.x[p], self.x[-1 - p]), (self.z[p], self.z[-1 - p])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_FIELD_MAGIC)
            fh.write(struct.pack("<IIIId", 1, self.x.size, self.z.size, self.pml_cells, self.h))
            fh.write(struct.pack("<dddd", self.x[0], self.x[-1], self.z[0], self.z[-1]))
            fh.write(struct.pack("<d", self.residual))
            fh.write(self.values.astype(np.complex128).tobytes())
            mat = self.material if self.material is not None else np.zeros_like(self.values, dtype=np.uint8)
            fh.write(mat.astype(np.uint8).tobytes())

    @classmethod
    def load(cls, path) -> "FieldSolution":
        with open(path, "rb") as fh:
            if fh.read(4) != _FIELD_MAGIC:
                raise SolverError(f"{path}: not a field solution file")
            header = "<IIIId"
            _v, nx, nz, pml_cells, h = struct.unpack(header, fh.read(struct.calcsize(header)))
            x0, x1, z0, z1 = struct.unpack("<dddd", fh.read(32))
            (residual,) = struct.unpack("<d", fh.read(8))
            values = np.frombuffer(fh.read(16 * nx * nz), dtype=np.complex128).reshape(nx, nz)
            material = np.frombuffer(fh.read(nx * nz), dtype=np.uint8).reshape(nx, nz)
        return cls(x=np.linspace(x0, x1, nx), z=np.linspace(z0, z1, nz),
                   values=values.copy(), h=h, pml_cells=pml_cells,
                   residual=residual, material=material.copy())


_FIELD_MAGIC = b"SBFS"


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _material_fields(domain: LayeredDomain, xs: np.ndarray, zs: np.ndarray):
    """(rho, ktilde^2) at arbitrary sample points; xs/zs broadcast together."""
    t = domain.template
    f_top = np.interp(xs, domain.surface.x, domain.surface.f)
    if domain.bottom_surface is not None:
        f_bot = -t.top_thickness + np.interp(xs, domain.bottom_surface.x, domain.bottom_surface.f)
    else:
        f_bot = -t.top_thickness
    omega = 2.0 * math.pi * t.frequency
    alpha = attenuation_to_nepers(t.attenuation, "dB_per_m_per_kHz", t.frequency)

    in_water = zs > f_top
    in_bottom = zs <= f_bot
    rho = np.where(in_water, t.water_density,
                   np.where(in_bottom, t.bottom_density, t.top_density))
    # under the e^{-i k . r} travel convention of the incident field the
    # attenuating branch is Im(ktilde) < 0
    ktil = np.where(in_water, omega / t.water_speed + 0j,
                    np.where(in_bottom, omega / t.bottom_speed - 1j * alpha,
                             omega / t.top_speed - 1j * alpha))
    return rho, ktil**2


def _water_fields(template: HighFreqTemplate, shape):
    omega = 2.0 * math.pi * template.frequency
    rho = np.full(shape, template.water_density)
    k2 = np.full(shape, (omega / template.water_speed) ** 2, dtype=complex)
    return rho, k2


def _sigma_max(h: float, n_pml: int, c_ref: float) -> float:
    return 3.0 * c_ref * math.log(1.0 / PML_TARGET_REFLECTION) / (2.0 * n_pml * h)


def _pml_stretch(axis: np.ndarray, h: float, n_pml: int, omega: float, c_ref: float,
                 at_midpoints: bool) -> np.ndarray:
    """Complex stretch s = 1 - i sigma/omega with a quadratic sigma ramp.

    The minus sign absorbs outgoing waves of the e^{-i k . r} spatial
    convention used by the incident field.
    """
    length = n_pml * h
    sigma_max = _sigma_max(h, n_pml, c_ref)
    pts = axis[:-1] + 0.5 * h if at_midpoints else axis
    lo = axis[n_pml]
    hi = axis[-1 - n_pml]
    depth = np.maximum(lo - pts, 0.0) + np.maximum(pts - hi, 0.0)
    sigma = sigma_max * (np.minimum(depth / length, 1.0)) ** 2
    return 1.0 - 1j * sigma / omega


def _stretched_axis(axis: np.ndarray, h: float, n_pml: int, omega: float, c_ref: float) -> np.ndarray:
    """Complex node coordinates xi - i * integral(sigma)/omega.

    Evaluating the incident plane wave at these coordinates continues it
    analytically into the PML, so the contrast source stays consistent with
    the stretched operator there.
    """
    length = n_pml * h
    sigma_max = _sigma_max(h, n_pml, c_ref)
    lo = axis[n_pml]
    hi = axis[-1 - n_pml]
    below = np.maximum(lo - axis, 0.0)
    above = np.maximum(axis - hi, 0.0)
    integral = sigma_max / (3.0 * length**2) * (above**3 - below**3)  # signed along +axis
    return axis - 1j * integral / omega


def _band_coefficients(domain: LayeredDomain, x, z, h, n_pml, water: bool):
    """Face and diagonal coefficients of the stretched 5-point operator."""
    t = domain.template
    omega = 2.0 * math.pi * t.frequency
    sx_n = _pml_stretch(x, h, n_pml, omega, t.water_speed, at_midpoints=False)
    sz_n = _pml_stretch(z, h, n_pml, omega, t.water_speed, at_midpoints=False)
    sx_f = _pml_stretch(x, h, n_pml, omega, t.water_speed, at_midpoints=True)
    sz_f = _pml_stretch(z, h, n_pml, omega, t.water_speed, at_midpoints=True)

    offsets = (np.arange(4) + 0.5) / 4.0

    # x-faces: horizontal flux path from (x_i, z_j) to (x_{i+1}, z_j)
    xs = x[:-1, None, None] + offsets[None, None, :] * h
    zs = z[None, :, None]
    if water:
        rho = np.full((x.size - 1, z.size, offsets.size), t.water_density)
    else:
        rho, _ = _material_fields(domain, np.broadcast_to(xs, (x.size - 1, z.size, 4)),
                                  np.broadcast_to(zs, (x.size - 1, z.size, 4)))
    ax = sz_n[None, :] / (rho.mean(axis=2) * sx_f[:, None]) / h**2

    # z-faces: vertical flux path from (x_i, z_j) to (x_i, z_{j+1})
    xs = x[:, None, None]
    zs = z[None, :-1, None] + offsets[None, None, :] * h
    if water:
        rho = np.full((x.size, z.size - 1, offsets.size), t.water_density)
    else:
        rho, _ = _material_fields(domain, np.broadcast_to(xs, (x.size, z.size - 1, 4)),
                                  np.broadcast_to(zs, (x.size, z.size - 1, 4)))
    az = sx_n[:, None] / (rho.mean(axis=2) * sz_f[None, :]) / h**2

    # diagonal: cell-averaged ktilde^2 / rho over a 3x3 dual-cell sample
    d3 = np.array([-h / 3.0, 0.0, h / 3.0])
    xs = (x[:, None, None, None] + d3[None, None, :, None])
    zs = (z[None, :, None, None] + d3[None, None, None, :])
    if water:
        pot = np.full((x.size, z.size, 3, 3), (omega / t.water_speed) ** 2 / t.water_density,
                      dtype=complex)
    else:
        rho, k2 = _material_fields(domain, np.broadcast_to(xs, (x.size, z.size, 3, 3)),
                                   np.broadcast_to(zs, (x.size, z.size, 3, 3)))
        pot = k2 / rho
    diag_pot = sx_n[:, None] * sz_n[None, :] * pot.mean(axis=(2, 3))
    return ax, az, diag_pot


def _operator(ax, az, diag_pot) -> sp.csc_matrix:
    nx, nz = diag_pot.shape
    diag = diag_pot.astype(complex).copy()
    diag[:-1, :] -= ax
    diag[1:, :] -= ax
    diag[:, :-1] -= az
    diag[:, 1:] -= az

    main = diag.ravel()
    east = ax.ravel().astype(complex)           # couples (i, j) <-> (i+1, j)
    north_full = np.zeros((nx, nz), dtype=complex)
    north_full[:, :-1] = az                      # couples (i, j) <-> (i, j+1)
    north = north_full.ravel()[:-1]              # zero across column wrap
    return sp.diags([main, east, east, north, north], [0, nz, -nz, 1, -1], format="csc")


def assemble(domain: LayeredDomain) -> DiscreteSystem:
    """Assemble the contrast-source system for the scattered field."""
    t = domain.template
    h = domain.grid_step()
    lam_w = t.water_wavelength
    n_pml = int(math.ceil(domain.pml_wavelengths * lam_w / h))

    f = domain.surface.f
    if f.max() >= domain.z_top - 2 * lam_w or f.min() <= domain.z_bottom + 2 * lam_w:
        raise GeometryError("rough interface exits the solve region")
    if f.min() <= -t.top_thickness:
        raise GeometryError("rough interface crosses the second interface")

    nx = int(round(t.width / h)) + 1 + 2 * n_pml
    nz = int(round((domain.z_top - domain.z_bottom) / h)) + 1 + 2 * n_pml
    x = (np.arange(nx) - n_pml) * h
    z = domain.z_bottom + (np.arange(nz) - n_pml) * h

    ax_m, az_m, dg_m = _band_coefficients(domain, x, z, h, n_pml, water=False)
    ax_w, az_w, dg_w = _band_coefficients(domain, x, z, h, n_pml, water=True)
    A_med = _operator(ax_m, az_m, dg_m)
    A_wat = _operator(ax_w, az_w, dg_w)

    spec = IncidentSpec.from_template(t)
    omega = 2.0 * math.pi * t.frequency
    direction = spec.direction
    k_num = discrete_wavenumber(spec.wavenumber, h, direction)
    vector = k_num * direction
    x_c = _stretched_axis(x, h, n_pml, omega, t.water_speed)
    z_c = _stretched_axis(z, h, n_pml, omega, t.water_speed)
    phase = vector[0] * x_c[:, None] + vector[1] * z_c[None, :]
    p_in = np.exp(-1j * phase).ravel()
    rhs = A_wat @ p_in - A_med @ p_in

    pts = np.stack(np.meshgrid(x, z, indexing="ij"), axis=-1)

    f_top = np.interp(pts[..., 0], domain.surface.x, domain.surface.f)
    material = np.where(pts[..., 1] > f_top, WATER,
                        np.where(pts[..., 1] <= -t.top_thickness, BOTTOM_SEDIMENT,
                                 TOP_SEDIMENT)).astype(np.uint8)

    return DiscreteSystem(matrix=A_med, rhs=rhs, x=x, z=z, h=h, pml_cells=n_pml,
                          material=material, template=t, surface=domain.surface,
                          incident_vector=(float(vector[0]), float(vector[1])))


def solve_scattered(system: DiscreteSystem, residual_limit: float = 1e-8) -> FieldSolution:
    """Direct sparse factorization of the assembled system."""
    b = system.rhs
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        u = np.zeros_like(b)
        residual = 0.0
    else:
        lu = spla.splu(system.matrix)
        u = lu.solve(b)
        residual = float(np.linalg.norm(system.matrix @ u - b) / norm_b)
        if not math.isfinite(residual) or residual > residual_limit:
            raise SolverError(f"linear solve failed its residual contract: {residual:.3e}")
    nx, nz = system.x.size, system.z.size
    return FieldSolution(x=system.x, z=system.z, values=u.reshape(nx, nz), h=system.h,
                         pml_cells=system.pml_cells, residual=residual,
                         material=system.material, template=system.template,
                         incident_vector=system.incident_vector)


def solve_template(template: HighFreqTemplate, surface: SurfaceProfile | None = None,
                   **domain_kwargs) -> FieldSolution:
    """Convenience: domain build + assembly + solve in one call."""
    domain = domain_for_template(template, surface, **domain_kwargs)
    return solve_scattered(assemble(domain))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _gradient_4th(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order central differences, second-order one-sided at the edges."""
    g = np.zeros_like(values)
    v = np.moveaxis(values, axis, 0)
    out = np.moveaxis(g, axis, 0)
    out[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[1] = (v[2] - v[0]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    out[-2] = (v[-1] - v[-3]) / (2 * h)
    return g


def _check_inside(solution: FieldSolution, pts: np.ndarray) -> None:
    (x0, x1), (z0, z1) = solution.physical_bounds()
    bad = ((pts[:, 0] <= x0) | (pts[:, 0] >= x1) |
           (pts[:, 1] <= z0) | (pts[:, 1] >= z1))
    if np.any(bad):
        p = pts[np.argmax(bad)]
        raise SamplingError(f"sample point ({p[0]:.4f}, {p[1]:.4f}) lies in the PML or outside the grid")


def _interpolators(solution: FieldSolution):
    if solution._interp is None:
        solution._interp = RegularGridInterpolator(
            (solution.x, solution.z), solution.values, method="cubic")
    if solution._grad_interp is None:
        gx = _gradient_4th(solution.values, solution.h, axis=0)
        gz = _gradient_4th(solution.values, solution.h, axis=1)
        solution._grad_interp = (
            RegularGridInterpolator((solution.x, solution.z), gx, method="cubic"),
            RegularGridInterpolator((solution.x, solution.z), gz, method="cubic"),
        )
    return solution._interp, solution._grad_interp


def incident_on(solution: FieldSolution, points) -> np.ndarray:
    """The discrete incident wave the solution was solved against, at interior
    points; add it to the scattered field to reconstruct the total field."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vx, vz = solution.incident_vector
    return np.exp(-1j * (vx * pts[:, 0] + vz * pts[:, 1]))


def sample_field_gradient(solution: FieldSolution, points):
    """Interpolated field and Cartesian gradient components at interior points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _check_inside(solution, pts)
    interp, (gx, gz) = _interpolators(solution)
    return interp(pts), (gx(pts), gz(pts))


def sample_field(solution: FieldSolution, points, want_radial_derivative_about=None):
    """Interpolate the scattered field (and optionally its radial derivative).

    Points must lie strictly inside the non-PML region.  Returns the complex
    values, or a (values, radial_derivatives) pair when a circle center is
    given.  Interpolation is cubic; gradients are fourth-order differences of
    the grid field, interpolated the same way.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _check_inside(solution, pts)
    if want_radial_derivative_about is None:
        if solution._interp is None:
            solution._interp = RegularGridInterpolator(
                (solution.x, solution.z), solution.values, method="cubic")
        return solution._interp(pts)

    interp, (gx, gz) = _interpolators(solution)
    values = interp(pts)
    center = np.asarray(want_radial_derivative_about, dtype=float)
    rvec = pts - center[None, :]
    rnorm = np.linalg.norm(rvec, axis=1)
    if np.any(rnorm == 0):
        raise SamplingError("radial derivative undefined at the circle center")
    rhat = rvec / rnorm[:, None]
    dr = gx(pts) * rhat[:, 0] + gz(pts) * rhat[:, 1]
    return values, dr


# ---------------------------------------------------------------------------
# PML diagnostics and oracles
# ---------------------------------------------------------------------------

def discrete_wavenumber(k: float, h: float, direction=(1.0, 0.0)) -> float:
    """Wavenumber magnitude whose plane wave satisfies the discrete 5-point
    water dispersion relation along the given unit direction.

    Feeding the contrast source with this wave instead of the analytic one
    removes the O((kh)^2) volume residual of the background operator, which
    otherwise pumps the sediment half-space near-resonantly.
    """
    cx, cz = direction

    def residual(kappa):
        return ((2 - 2 * math.cos(kappa * cx * h)) + (2 - 2 * math.cos(kappa * cz * h))) / h**2 - k**2

    return brentq(residual, 0.5 * k, min(2.0 * k, math.pi / h / max(abs(cx), abs(cz), 1e-9)))


def pml_reflection_estimate(template: HighFreqTemplate | None = None,
                            nodes_per_wavelength: float = DEFAULT_NODES_PER_WAVELENGTH) -> float:
    """Amplitude reflection coefficient of the PML for a plane wave.

    A uniform horizontal line source in an all-water domain launches plane
    waves vertically; the down-going wave crosses the bottom PML and any
    reflection returns as an up-going wave.  Decomposing the field between
    source and PML into up/down-going discrete plane waves gives |R| directly.
    """
    if template is None:
        template = HighFreqTemplate(top_speed=1500.0, top_density=1000.0,
                                    top_thickness=0.5, bottom_speed=1500.0,
                                    bottom_density=1000.0,
                                    roughness=RoughnessSpec(0.0, 0.02, 0))
    t = template
    water_only = HighFreqTemplate(
        top_speed=t.water_speed, top_density=t.water_density, top_thickness=0.5,
        bottom_speed=t.water_speed, bottom_density=t.water_density,
        roughness=t.roughness, width=t.width, height=t.height, frequency=t.frequency,
        incident_angle=t.incident_angle, water_speed=t.water_speed,
        water_density=t.water_density, attenuation=0.0)
    domain = domain_for_template(water_only, flat_surface(t.width),
                                 nodes_per_wavelength=nodes_per_wavelength)
    system = assemble(domain)
    nx, nz = system.x.size, system.z.size

    # line source on the row nearest z = +1.2, uniform across all columns
    j0 = int(np.argmin(np.abs(system.z - 1.2)))
    b = np.zeros(nx * nz, dtype=complex)
    b[j0::nz] = 1.0
    lu = spla.splu(system.matrix)
    u = lu.solve(b).reshape(nx, nz)

    k = t.wavenumber
    kz = discrete_wavenumber(k, system.h, direction=(0.0, 1.0))
    fit_rows = (system.z > domain.z_bottom + 2.5 * t.water_wavelength) & (system.z < 0.6)
    zf = system.z[fit_rows]
    basis = np.stack([np.exp(-1j * kz * zf), np.exp(1j * kz * zf)], axis=1)
    cols = np.nonzero((system.x > 0.5) & (system.x < t.width - 0.5))[0]
    ratios = []
    for i in cols[:: max(1, cols.size // 16)]:
        coef, *_ = np.linalg.lstsq(basis, u[i, fit_rows], rcond=None)
        big, small = max(abs(coef)), min(abs(coef))
        if big > 0:
            ratios.append(small / big)   # reflected / incident amplitude
    return float(np.median(ratios))


def fluid_reflection_coefficient(template: HighFreqTemplate, lossless: bool = False) -> complex:
    """Plane-wave reflection coefficient of the flat water/top-sediment interface."""
    t = template
    omega = 2.0 * math.pi * t.frequency
    alpha = 0.0 if lossless else attenuation_to_nepers(t.attenuation, "dB_per_m_per_kHz", t.frequency)
    k1 = omega / t.water_speed
    k2 = omega / t.top_speed - 1j * alpha
    kx = k1 * math.sin(t.incident_angle)
    k1z = np.sqrt(k1**2 - kx**2 + 0j)
    k2z = np.sqrt(k2**2 - kx**2 + 0j)
    z1 = t.water_density * omega / k1z
    z2 = t.top_density * omega / k2z
    return complex((z2 - z1) / (z2 + z1))


def layered_reflection_coefficient(template: HighFreqTemplate, lossless: bool = False) -> complex:
    """Reflection coefficient of the flat two-interface stack (water / top / bottom)."""
    t = template
    omega = 2.0 * math.pi * t.frequency
    alpha = 0.0 if lossless else attenuation_to_nepers(t.attenuation, "dB_per_m_per_kHz", t.frequency)
    k1 = omega / t.water_speed
    k2 = omega / t.top_speed - 1j * alpha
    k3 = omega / t.bottom_speed - 1j * alpha
    kx = k1 * math.sin(t.incident_angle)
    k1z = np.sqrt(k1**2 - kx**2 + 0j)
    k2z = np.sqrt(k2**2 - kx**2 + 0j)
    k3z = np.sqrt(k3**2 - kx**2 + 0j)
    z1 = t.water_density * omega / k1z
    z2 = t.top_density * omega / k2z
    z3 = t.bottom_density * omega / k3z
    r12 = (z2 - z1) / (z2 + z1)
    r23 = (z3 - z2) / (z3 + z2)
    # round-trip factor of the e^{-i k . r} convention: down-going waves go as
    # e^{+i k2z z}, so crossing the layer twice contributes e^{-2 i k2z tau}
    phase = np.exp(-2j * k2z * t.top_thickness)
    return complex((r12 + r23 * phase) / (1 + r12 * r23 * phase))
