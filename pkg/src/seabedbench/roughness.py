"""Seeded random rough-interface profiles with prescribed RMS height and
correlation length.

Profiles are stationary Gaussian with a Gaussian correlation function
exp(-x^2 / L^2), synthesized spectrally: white Gaussian noise is shaped in the
wavenumber domain, transformed back, tapered so the interface meets the
template walls with zero slope, mean-removed and rescaled to the exact sample
RMS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Fraction of the width tapered to zero slope at each edge so the interface
# meets the domain walls cleanly at the absorbing-layer seams.
EDGE_TAPER_FRACTION = 0.05


class SurfaceParameterError(ValueError):
    """Raised when the requested surface parameters are out of range."""


@dataclass(frozen=True)
class SurfaceProfile:
    """Rough interface heights on a uniform grid over [0, width]."""

    x: np.ndarray
    f: np.ndarray
    rms_target: float
    corr_target: float
    seed: int

    @property
    def width(self) -> float:
        return float(self.x[-1])

    def height_at(self, xq) -> np.ndarray:
        return np.interp(xq, self.x, self.f)

    def to_csv(self, stream) -> None:
        stream.write("x,f\n")
        for xi, fi in zip(self.x, self.f):
            stream.write(f"{float(xi)!r},{float(fi)!r}\n")


def _gaussian_spectrum_filter(n: int, dx: float, corr_length: float) -> np.ndarray:
    # Power spectrum of exp(-x^2/L^2) covariance: S(k) = L*sqrt(pi)*exp(-k^2 L^2/4).
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=dx)
    return np.sqrt(corr_length * math.sqrt(math.pi) * np.exp(-(k * corr_length) ** 2 / 4.0))


def _edge_taper(n: int) -> np.ndarray:
    # Tukey-style window: flat interior, cosine half-lobes over the edge margins.
    # Both the window value and its slope vanish at the ends.
    taper_len = max(2, int(round(EDGE_TAPER_FRACTION * n)))
    w = np.ones(n)
    ramp = 0.5 * (1.0 - np.cos(math.pi * np.arange(taper_len) / taper_len))
    w[:taper_len] = ramp
    w[n - taper_len:] = ramp[::-1]
    return w


def generate_surface(width: float, n_points: int, rms_height: float,
                     corr_length: float, seed: int) -> SurfaceProfile:
    """Draw one seeded rough-interface realization.

    Parameters
    ----------
    width : float
        Horizontal extent in m; the grid spans [0, width] inclusive.
    n_points : int
        Number of grid points, at least 64.
    rms_height : float
        Target root-mean-square height in m; the sample RMS is rescaled to
        match exactly.
    corr_length : float
        Correlation length L of the Gaussian correlation exp(-x^2/L^2), in m;
        must be below width/4.
    seed : int
        Generator seed; identical arguments give a bit-identical profile.
    """
    if n_points < 64:
        raise SurfaceParameterError("n_points must be at least 64")
    if width <= 0:
        raise SurfaceParameterError("width must be positive")
    if rms_height < 0:
        raise SurfaceParameterError("rms_height must be non-negative")
    if not 0 < corr_length < width / 4:
        raise SurfaceParameterError("corr_length must lie in (0, width/4)")

    x = np.linspace(0.0, width, n_points)
    if rms_height == 0.0:
        return SurfaceProfile(x=x, f=np.zeros(n_points), rms_target=0.0,
                              corr_target=corr_length, seed=seed)

    rng = np.random.default_rng(seed)
    dx = width / (n_points - 1)
    white = rng.standard_normal(n_points)
    shaped = np.fft.ifft(_gaussian_spectrum_filter(n_points, dx, corr_length) * np.fft.fft(white)).real
    shaped *= _edge_taper(n_points)
    shaped -= shaped.mean()
    sample_rms = math.sqrt(float(np.mean(shaped**2)))
    f = shaped * (rms_height / sample_rms)
    return SurfaceProfile(x=x, f=f, rms_target=rms_height, corr_target=corr_length, seed=seed)


def flat_surface(width: float, n_points: int = 64) -> SurfaceProfile:
    """Zero-roughness profile, used for oracle scenes."""
    return SurfaceProfile(x=np.linspace(0.0, width, n_points), f=np.zeros(n_points),
                          rms_target=0.0, corr_target=width / 8, seed=0)


def empirical_correlation_length(profile: SurfaceProfile) -> float:
    """Correlation length estimate: 1/e crossing of the sample autocorrelation."""
    f = profile.f - profile.f.mean()
    n = f.size
    acf = np.correlate(f, f, mode="full")[n - 1:]
    acf /= acf[0]
    dx = profile.x[1] - profile.x[0]
    below = np.nonzero(acf < 1.0 / math.e)[0]
    if below.size == 0:
        return float("inf")
    j = below[0]
    # linear interpolation between the last sample above 1/e and the first below
    a0, a1 = acf[j - 1], acf[j]
    frac = (a0 - 1.0 / math.e) / (a0 - a1)
    return dx * (j - 1 + frac)
