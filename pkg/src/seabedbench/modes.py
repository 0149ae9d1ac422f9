"""Normal modes of the range-independent layered waveguide and the far-field
modal sum at the vertical line array.

The depth operator rho d/dz((1/rho) d psi/dz) + (omega^2/c^2) psi = k^2 psi is
discretized with an interface-aware finite-volume stencil on a piecewise
uniform grid whose nodes coincide with the layer interfaces.  Dividing by rho
puts the problem in Sturm-Liouville form

    d/dz(a dpsi/dz) + q psi = k^2 b psi,   a = b = 1/rho,  q = omega^2/(c^2 rho),

with a, b, q constant per cell, which yields a symmetric generalized
tridiagonal eigenproblem: eigenfunctions come out orthonormal under the
discrete 1/rho-weighted inner product to machine precision.  Eigenvalues are
Richardson-extrapolated from the build grid and a once-refined grid, which
removes the leading O(h^2) stencil error.  Absorption enters through
first-order perturbation theory, so the eigenproblem itself stays real
symmetric.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .environments import LowFreqEnvironment, attenuation_to_nepers

DEFAULT_HALFSPACE_EXTENSION = 150.0  # m of chalk kept below the sediment
DEFAULT_POINTS_PER_WAVELENGTH = 20.0


class ModeError(ValueError):
    pass


@dataclass(frozen=True)
class DepthModel:
    """Discretized depth-dependent medium.

    ``z`` holds the N+1 node depths (z[0] = 0); ``speed``, ``density`` and
    ``absorption`` (np/m) hold one value per cell, constant between nodes.
    """

    z: np.ndarray
    speed: np.ndarray
    density: np.ndarray
    absorption: np.ndarray
    interfaces: tuple[float, ...]
    frequency: float

    def __post_init__(self):
        n_cells = self.z.size - 1
        if not (self.speed.size == self.density.size == self.absorption.size == n_cells):
            raise ModeError("cell property arrays must have len(z) - 1 entries")
        if np.any(np.diff(self.z) <= 0):
            raise ModeError("grid depths must be strictly increasing")

    def validate_resolution(self, points_per_wavelength: float = 20.0) -> None:
        """Check every cell resolves its local wavelength at the build frequency."""
        h = np.diff(self.z)
        local_limit = self.speed / (self.frequency * points_per_wavelength)
        if np.any(h > local_limit * (1 + 1e-9)):
            raise ModeError(
                f"grid under-resolves the medium: need >= {points_per_wavelength} points per wavelength"
            )

    def refined(self, factor: int = 2) -> "DepthModel":
        """Split every cell into ``factor`` equal subcells of the same material."""
        h = np.diff(self.z)
        z_new = [self.z[:1]]
        for i in range(h.size):
            z_new.append(self.z[i] + h[i] * np.arange(1, factor + 1) / factor)
        return DepthModel(
            z=np.concatenate(z_new),
            speed=np.repeat(self.speed, factor),
            density=np.repeat(self.density, factor),
            absorption=np.repeat(self.absorption, factor),
            interfaces=self.interfaces,
            frequency=self.frequency,
        )


@dataclass(frozen=True)
class ModeSet:
    """Trapped-mode eigenpairs: complex wavenumbers and depth eigenfunctions."""

    frequency: float
    k: np.ndarray          # complex horizontal wavenumbers, Re decreasing
    psi: np.ndarray        # (n_nodes, n_modes) real eigenfunctions on ``z``
    z: np.ndarray          # node depths carrying the eigenfunctions
    weight: np.ndarray     # quadrature weights of the 1/rho inner product

    def __len__(self) -> int:
        return self.k.size

    @property
    def is_empty(self) -> bool:
        return self.k.size == 0

    def psi_at(self, depths) -> np.ndarray:
        """Eigenfunction values at arbitrary depths, linear interpolation."""
        depths = np.atleast_1d(np.asarray(depths, dtype=float))
        idx = np.clip(np.searchsorted(self.z, depths) - 1, 0, self.z.size - 2)
        w = (depths - self.z[idx]) / (self.z[idx + 1] - self.z[idx])
        return (1 - w)[:, None] * self.psi[idx] + w[:, None] * self.psi[idx + 1]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MODESET_MAGIC)
            fh.write(struct.pack("<IId", 1, self.k.size, self.frequency))
            fh.write(struct.pack("<I", self.z.size))
            fh.write(self.k.astype(np.complex128).tobytes())
            fh.write(self.z.astype(np.float64).tobytes())
            fh.write(self.weight.astype(np.float64).tobytes())
            fh.write(np.asarray(self.psi, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path) -> "ModeSet":
        with open(path, "rb") as fh:
            if fh.read(4) != _MODESET_MAGIC:
                raise ModeError(f"{path}: not a mode set file")
            _version, n_modes, frequency = struct.unpack("<IId", fh.read(16))
            (n_nodes,) = struct.unpack("<I", fh.read(4))
            k = np.frombuffer(fh.read(16 * n_modes), dtype=np.complex128)
            z = np.frombuffer(fh.read(8 * n_nodes), dtype=np.float64)
            weight = np.frombuffer(fh.read(8 * n_nodes), dtype=np.float64)
            psi = np.frombuffer(fh.read(8 * n_nodes * n_modes), dtype=np.float64)
            psi = psi.reshape(n_nodes, n_modes)
        return cls(frequency=frequency, k=k.copy(), psi=psi.copy(), z=z.copy(), weight=weight.copy())


_MODESET_MAGIC = b"SBMS"


@dataclass(frozen=True)
class ComplexField:
    """Complex pressure at the array phones (up to the source constant)."""

    values: np.ndarray
    phone_depths: np.ndarray
    source_range: float
    n_modes: int


def _layer_grid(z0: float, z1: float, h_target: float) -> np.ndarray:
    n = max(1, int(math.ceil((z1 - z0) / h_target)))
    return np.linspace(z0, z1, n + 1)


def build_depth_model(env: LowFreqEnvironment,
                      halfspace_extension: float = DEFAULT_HALFSPACE_EXTENSION,
                      points_per_wavelength: float = DEFAULT_POINTS_PER_WAVELENGTH) -> DepthModel:
    """Discretize water + sediment + truncated halfspace onto a depth grid.

    Layer interfaces land exactly on grid nodes; each layer is meshed at its
    own local wavelength over ``points_per_wavelength``.
    """
    if halfspace_extension <= 0:
        raise ModeError("halfspace_extension must be positive")
    if points_per_wavelength < 10:
        raise ModeError("points_per_wavelength must be at least 10")

    f = env.source.frequency
    d_water = env.water_depth
    d_sed = d_water + env.sediment.thickness
    d_total = d_sed + halfspace_extension

    ssp_speeds = np.array([c for _, c in env.ssp])
    h_water = ssp_speeds.min() / f / points_per_wavelength
    h_sed = env.sediment.speed / f / points_per_wavelength
    h_half = env.halfspace.speed / f / points_per_wavelength

    z_w = _layer_grid(0.0, d_water, h_water)
    z_s = _layer_grid(d_water, d_sed, h_sed)
    z_h = _layer_grid(d_sed, d_total, h_half)
    z = np.concatenate([z_w, z_s[1:], z_h[1:]])

    mid_w = 0.5 * (z_w[:-1] + z_w[1:])
    c_w = env.water_speed_at(mid_w)
    n_s, n_h = z_s.size - 1, z_h.size - 1

    speed = np.concatenate([c_w, np.full(n_s, env.sediment.speed), np.full(n_h, env.halfspace.speed)])
    density = np.concatenate([
        np.full(c_w.size, env.water_density),
        np.full(n_s, env.sediment.density),
        np.full(n_h, env.halfspace.density),
    ])
    alpha_sed = attenuation_to_nepers(env.sediment.attenuation, "dB_per_wavelength", f, env.sediment.speed)
    alpha_half = attenuation_to_nepers(env.halfspace.attenuation, "dB_per_wavelength", f, env.halfspace.speed)
    absorption = np.concatenate([np.zeros(c_w.size), np.full(n_s, alpha_sed), np.full(n_h, alpha_half)])

    return DepthModel(z=z, speed=speed, density=density, absorption=absorption,
                      interfaces=(d_water, d_sed), frequency=f)


def _eigensolve(model: DepthModel, omega: float, lam_lo: float, lam_hi: float):
    """Eigenpairs of the symmetric FV discretization with k^2 in (lam_lo, lam_hi).

    Returns (eigenvalues ascending, eigenvectors on interior+bottom nodes,
    quadrature weights of the 1/rho inner product for all nodes).
    """
    z, h = model.z, np.diff(model.z)
    a = 1.0 / model.density               # per cell
    q = omega**2 / (model.speed**2 * model.density)
    flux = a / h

    # node-centered control volumes; node 0 is removed by the pressure-release BC
    b_full = np.zeros(z.size)
    q_full = np.zeros(z.size)
    b_full[:-1] += 0.5 * a * h
    b_full[1:] += 0.5 * a * h
    q_full[:-1] += 0.5 * q * h
    q_full[1:] += 0.5 * q * h

    diag = q_full.copy()
    diag[:-1] -= flux
    diag[1:] -= flux
    off = flux

    # drop node 0 (psi = 0 there); node N keeps the natural rigid condition
    d_in = diag[1:]
    e_in = off[1:]
    b_in = b_full[1:]

    scale = 1.0 / np.sqrt(b_in)
    d_std = d_in * scale**2
    e_std = e_in * scale[:-1] * scale[1:]

    try:
        lam, y = scipy.linalg.eigh_tridiagonal(d_std, e_std, select="v",
                                               select_range=(lam_lo, lam_hi))
    except ValueError:
        return np.empty(0), np.empty((z.size, 0)), b_full
    psi = np.zeros((z.size, lam.size))
    psi[1:] = scale[:, None] * y
    # B-normalize (eigh returns unit 2-norm in the transformed variable, which
    # already is B-orthonormal; renormalize defensively and fix the sign)
    for m in range(lam.size):
        nrm = math.sqrt(float(np.sum(b_full * psi[:, m] ** 2)))
        psi[:, m] /= nrm
        j = np.argmax(np.abs(psi[:, m]))
        if psi[j, m] < 0:
            psi[:, m] = -psi[:, m]
    return lam, psi, b_full


def solve_modes(model: DepthModel, frequency: float,
                phase_speed_limits: tuple[float, float] | None = None,
                refine: int = 2) -> ModeSet:
    """All trapped modes of the discretized waveguide at one frequency.

    Modes are kept when their phase speed omega/Re(k) lies strictly between the
    slowest medium speed and the bottom halfspace speed (overridable through
    ``phase_speed_limits``).  With ``refine`` > 1 the eigenvalues are
    Richardson-extrapolated against a refined grid; eigenfunctions live on the
    refined grid.  Returns an empty ModeSet when nothing is trapped.
    """
    omega = 2.0 * math.pi * frequency
    if phase_speed_limits is None:
        v_lo = float(model.speed.min())
        v_hi = float(model.speed[-1])
    else:
        v_lo, v_hi = phase_speed_limits
    if v_hi <= v_lo:
        return ModeSet(frequency=frequency, k=np.empty(0, dtype=complex),
                       psi=np.empty((model.z.size, 0)), z=model.z.copy(),
                       weight=np.zeros(model.z.size))
    lam_lo = (omega / v_hi) ** 2
    lam_hi = (omega / v_lo) ** 2

    fine = model.refined(refine) if refine > 1 else model
    lam_f, psi, weight = _eigensolve(fine, omega, lam_lo, lam_hi)
    if lam_f.size == 0:
        return ModeSet(frequency=frequency, k=np.empty(0, dtype=complex),
                       psi=np.empty((fine.z.size, 0)), z=fine.z.copy(), weight=weight)

    lam = lam_f.copy()
    if refine > 1:
        lam_c, _, _ = _eigensolve(model, omega, lam_lo, lam_hi)
        # pair by descending k; extrapolate the O(h^2) stencil error away
        n = min(lam_c.size, lam_f.size)
        if n:
            r2 = float(refine) ** 2
            lam[-n:] = (r2 * lam_f[-n:] - lam_c[-n:]) / (r2 - 1.0)

    order = np.argsort(lam)[::-1]          # descending k^2 -> descending Re(k)
    lam = lam[order]
    psi = psi[:, order]
    k_re = np.sqrt(lam)

    if np.any(fine.absorption > 0):
        g = fine.absorption / (fine.speed * fine.density)   # per cell
        g_full = np.zeros(fine.z.size)
        h = np.diff(fine.z)
        g_full[:-1] += 0.5 * g * h
        g_full[1:] += 0.5 * g * h
        k_im = (omega / k_re) * (g_full[:, None] * psi**2).sum(axis=0)
    else:
        k_im = np.zeros_like(k_re)

    return ModeSet(frequency=frequency, k=k_re + 1j * k_im, psi=psi,
                   z=fine.z.copy(), weight=weight)


def pressure_field(modes: ModeSet, env: LowFreqEnvironment) -> ComplexField:
    """Far-field modal sum at the array phones for the environment's source.

    p(x, z_r) = (i e^{i pi/4} / (rho(z_s) sqrt(8 pi x)))
                * sum_m psi_m(z_s) psi_m(z_r) e^{i k_m x} / sqrt(k_m)
    """
    x = env.source.range
    if x <= 0:
        raise ModeError("source range must be positive")
    depths = env.array.depths()
    if modes.is_empty:
        warnings.warn("empty mode set: returning a zero pressure field", stacklevel=2)
        return ComplexField(values=np.zeros(depths.size, dtype=complex),
                            phone_depths=depths, source_range=x, n_modes=0)
    zs = env.source.depth
    if not (modes.z[0] <= zs <= modes.z[-1]) or depths.max() > modes.z[-1]:
        raise ModeError("source/receiver depths must lie inside the mode grid")

    psi_s = modes.psi_at(zs)[0]            # (n_modes,)
    psi_r = modes.psi_at(depths)           # (n_phones, n_modes)
    rho_s = env.water_density
    prefactor = 1j * np.exp(1j * math.pi / 4) / (rho_s * math.sqrt(8.0 * math.pi * x))
    terms = psi_s * np.exp(1j * modes.k * x) / np.sqrt(modes.k)
    values = prefactor * psi_r @ terms
    return ComplexField(values=values, phone_depths=depths, source_range=x,
                        n_modes=len(modes))


def wavenumber_table_csv(modes: ModeSet, stream) -> None:
    """Write the mode table as CSV: index, Re(k), Im(k), phase speed."""
    omega = 2.0 * math.pi * modes.frequency
    stream.write("mode,re_k_per_m,im_k_per_m,phase_speed_m_s\n")
    for m, k in enumerate(modes.k, start=1):
        stream.write(f"{m},{float(k.real)!r},{float(k.imag)!r},{float(omega / k.real)!r}\n")
