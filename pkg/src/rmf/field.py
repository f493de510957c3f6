"""Periodic-box spectral infrastructure.

Conventions, fixed here and relied on everywhere else:

* spectral coefficients are continuum-normalized,  fhat(k) = h^d * FFT(f),
  approximating  int_box f(x) e^{-i k.x} dx  on the lattice k in (2pi/L) Z^d;
* the homogeneous Sobolev norm is the lattice Riemann sum
  ||f||_{Hdot^sigma}^2 = L^-d * sum_{k != 0} |k|^{2 sigma} |fhat(k)|^2, which
  makes frac_norm(f, 0) the plain L^2 norm (Parseval) and gives a single pure
  mode e^{i k0.x} norm |k0|^sigma * sqrt(L^d);
* kernel multipliers take the validated whole-space symbol at the lattice
  frequencies with the zero mode set to 0, so every convolved object is
  defined up to an additive constant that cancels in mean-zero pairings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, special

from .potential import PotentialSpec, symbol_on_magnitudes


class PreconditionError(ValueError):
    pass


# --------------------------------------------------------------------------
# grid


class PeriodicGrid:
    """Uniform periodic grid on [0, L)^d with n (a power of two >= 16) points
    per axis."""

    def __init__(self, d: int, n: int, length: float):
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError("n must be a power of two, n >= 16")
        if length <= 0:
            raise ValueError("box side must be positive")
        self.d = int(d)
        self.n = int(n)
        self.length = float(length)
        self.h = self.length / self.n
        axis = np.arange(self.n) * self.h
        self.axes = [axis] * self.d
        k1 = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.h)
        mesh = np.meshgrid(*([k1] * self.d), indexing="ij")
        self.kvec = np.stack(mesh)                      # (d, n, ..., n)
        self.kmag = np.sqrt(np.sum(self.kvec**2, axis=0))
        self.cell_volume = self.h**self.d
        self.volume = self.length**self.d
        cut = (2.0 / 3.0) * math.pi * self.n / self.length  # 2/3 of Nyquist
        self.dealias_mask = np.all(np.abs(self.kvec) <= cut, axis=0)

    # fft wrappers with the continuum normalization
    def fourier(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fftn(values, axes=tuple(range(-self.d, 0))) * self.cell_volume

    def inverse(self, fhat: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifftn(fhat / self.cell_volume,
                                    axes=tuple(range(-self.d, 0))))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values)) * self.cell_volume

    def meshgrid(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def dealias(self, values: np.ndarray) -> np.ndarray:
        return self.inverse(self.fourier(values) * self.dealias_mask)

    def shape(self):
        return (self.n,) * self.d

    def __eq__(self, other):
        return (isinstance(other, PeriodicGrid)
                and (self.d, self.n, self.length) == (other.d, other.n, other.length))

    def __hash__(self):
        return hash((self.d, self.n, self.length))

    def __repr__(self):
        return f"PeriodicGrid(d={self.d}, n={self.n}, length={self.length})"


def default_grid(d: int, length: float = 2.0 * math.pi) -> PeriodicGrid:
    return PeriodicGrid(d, 256 if d <= 2 else 64, length)


# --------------------------------------------------------------------------
# fields


class DensityField:
    """Gridded probability density with lazily cached spectrum."""

    def __init__(self, grid: PeriodicGrid, values: np.ndarray, *,
                 normalize: bool = False, check: bool = True):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape():
            raise ValueError("values shape does not match grid")
        if normalize:
            mass = grid.integrate(values)
            if mass <= 0:
                raise ValueError("cannot normalize: nonpositive mass")
            values = values / mass
        self.grid = grid
        self.values = values
        self._fhat = None
        if check:
            if float(values.min()) < -1e-12 * max(1.0, float(values.max())):
                raise PreconditionError("density has a significant negative part")
            mass = grid.integrate(values)
            if abs(mass - 1.0) > 1e-10:
                raise PreconditionError(f"density mass {mass!r} != 1 beyond 1e-10")

    @property
    def fhat(self) -> np.ndarray:
        if self._fhat is None:
            self._fhat = self.grid.fourier(self.values)
        return self._fhat

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def support_margin(self) -> float:
        """Distance from the essential support (values > 1e-12 * max) to the
        box boundary, minimized over axes."""
        thresh = 1e-12 * self.linf
        margin = math.inf
        for ax in range(self.grid.d):
            profile = np.max(self.values, axis=tuple(i for i in range(self.grid.d)
                                                     if i != ax))
            occupied = np.where(profile > thresh)[0]
            if len(occupied) == 0:
                continue
            lo = occupied[0] * self.grid.h
            hi = (self.grid.n - 1 - occupied[-1]) * self.grid.h
            margin = min(margin, lo, hi)
        return margin


def gaussian_bump(grid: PeriodicGrid, width: float, center=None) -> DensityField:
    """Product-Gaussian probability bump, supported well inside the box."""
    if center is None:
        center = np.full(grid.d, grid.length / 2.0)
    center = np.asarray(center, dtype=float)
    mesh = grid.meshgrid()
    r2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
    vals = np.exp(-r2 / (2.0 * width**2))
    return DensityField(grid, vals, normalize=True)


def uniform_density(grid: PeriodicGrid) -> DensityField:
    return DensityField(grid, np.full(grid.shape(), 1.0 / grid.volume))


class SpectralDistribution:
    """Mean-zero distribution given by its spectral coefficients."""

    def __init__(self, grid: PeriodicGrid, fhat: np.ndarray):
        if fhat.shape != grid.shape():
            raise ValueError("coefficient shape does not match grid")
        self.grid = grid
        self.fhat = np.asarray(fhat, dtype=complex)

    @property
    def zero_mode(self) -> complex:
        return complex(self.fhat[(0,) * self.grid.d])

    @classmethod
    def from_values(cls, grid: PeriodicGrid, values: np.ndarray,
                    remove_mean: bool = False) -> "SpectralDistribution":
        fhat = grid.fourier(values)
        if remove_mean:
            fhat[(0,) * grid.d] = 0.0
        return cls(grid, fhat)


# --------------------------------------------------------------------------
# spectral building blocks


def shell_factor(d_eff: int, eta: float, rho) -> np.ndarray:
    """Radial Fourier factor of the uniform probability measure on a sphere
    of radius eta in d_eff dimensions, normalized to 1 at rho = 0.

    d_eff=1: cos(t); d_eff=2: J0(t); d_eff=3: sin(t)/t;  generally
    Gamma(d/2) (2/t)^(d/2-1) J_{d/2-1}(t), at t = eta * rho.
    """
    if eta < 0:
        raise PreconditionError("eta must be >= 0")
    t = np.asarray(eta * np.asarray(rho, dtype=float))
    if d_eff == 1:
        return np.cos(t)
    if d_eff == 3:
        out = np.ones_like(t)
        nz = np.abs(t) > 1e-12
        out[nz] = np.sin(t[nz]) / t[nz]
        small = ~nz
        out[small] = 1.0 - t[small] ** 2 / 6.0
        return out
    nu = d_eff / 2.0 - 1.0
    out = np.ones_like(t)
    nz = np.abs(t) > 1e-12
    out[nz] = math.gamma(d_eff / 2.0) * (2.0 / t[nz]) ** nu * special.jv(nu, t[nz])
    out[~nz] = 1.0 - t[~nz] ** 2 / (2.0 * d_eff)
    return out


def empirical_spectrum(grid: PeriodicGrid, points: np.ndarray,
                       eta: float = 0.0) -> np.ndarray:
    """Exact lattice Fourier coefficients of (1/N) sum_i delta^{(eta)}_{x_i}
    (eta = 0: plain point masses), via factorized per-axis mode sums."""
    points = np.asarray(points, dtype=float)
    n_pts, d = points.shape
    if d != grid.d:
        raise ValueError("points dimension does not match grid")
    k1 = 2.0 * math.pi * np.fft.fftfreq(grid.n, d=grid.h)
    phases = [np.exp(-1j * np.outer(points[:, ax], k1)) for ax in range(d)]
    if d == 1:
        fhat = phases[0].sum(axis=0)
    elif d == 2:
        fhat = np.einsum("ia,ib->ab", phases[0], phases[1])
    elif d == 3:
        fhat = np.einsum("ia,ib,ic->abc", phases[0], phases[1], phases[2])
    else:
        raise NotImplementedError("d > 3 not supported")
    fhat = fhat / n_pts
    if eta > 0.0:
        fhat = fhat * shell_factor(grid.d, eta, grid.kmag)
    return fhat


def frac_norm(f: SpectralDistribution, sigma: float) -> float:
    """Homogeneous Sobolev norm over the discrete frequency lattice."""
    if sigma < 0.0 and abs(f.zero_mode) > 1e-10 * (1.0 + np.max(np.abs(f.fhat))):
        raise PreconditionError("negative-order norm needs a mean-zero input")
    kmag = f.grid.kmag
    nz = kmag > 0.0
    total = np.sum(kmag[nz] ** (2.0 * sigma) * np.abs(f.fhat[nz]) ** 2)
    return float(np.sqrt(total / f.grid.volume))


def weighted_quadratic_form(f: SpectralDistribution, spec: PotentialSpec) -> float:
    """sum_{k != 0} ghat(k) |fhat(k)|^2 / L^d : the interaction energy of the
    mean-zero distribution with itself through the validated symbol."""
    sym = symbol_on_magnitudes(spec, f.grid.kmag)
    return float(np.sum(sym * np.abs(f.fhat) ** 2).real / f.grid.volume)


def kernel_multiplier(grid: PeriodicGrid, spec: PotentialSpec) -> np.ndarray:
    """Lattice symbol of the interaction with the zero mode neutralized."""
    return symbol_on_magnitudes(spec, grid.kmag)


def convolve(mu, spec: PotentialSpec, k: int = 0, grid: PeriodicGrid | None = None):
    """Spectral convolution of the interaction kernel with a density:
    k = 0 scalar g*mu, k = 1 the gradient stack (d, ...), k = 2 the Hessian
    stack (d, d, ...).  Accepts a DensityField or raw values with a grid."""
    if isinstance(mu, DensityField):
        grid = mu.grid
        fhat = mu.fhat
    else:
        if grid is None:
            raise ValueError("grid required for raw arrays")
        fhat = grid.fourier(np.asarray(mu, dtype=float))
    if spec.d != grid.d:
        raise ValueError("potential and grid dimensions differ")
    sym = kernel_multiplier(grid, spec)
    base = sym * fhat
    if k == 0:
        return grid.inverse(base)
    if k == 1:
        return np.stack([grid.inverse(1j * grid.kvec[a] * base)
                         for a in range(grid.d)])
    if k == 2:
        return np.stack([
            np.stack([grid.inverse(-grid.kvec[a] * grid.kvec[b] * base)
                      for b in range(grid.d)])
            for a in range(grid.d)
        ])
    raise ValueError("k must be 0, 1 or 2")


def velocity(mu: DensityField, matrix: np.ndarray, spec: PotentialSpec) -> np.ndarray:
    """u = M grad(g * mu) as a (d, ...) stack."""
    grad = convolve(mu, spec, k=1)
    matrix = np.asarray(matrix, dtype=float)
    return np.einsum("ab,b...->a...", matrix, grad)


def heat_extend(grid: PeriodicGrid, phi: np.ndarray, z: float) -> np.ndarray:
    """Heat-semigroup extension: spectral multiplication by exp(-z |k|^2)."""
    if z < 0:
        raise PreconditionError("extension coordinate must be >= 0")
    return grid.inverse(grid.fourier(phi) * np.exp(-z * grid.kmag**2))


def spectral_gradient(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    fhat = grid.fourier(values)
    return np.stack([grid.inverse(1j * grid.kvec[a] * fhat) for a in range(grid.d)])


def spectral_divergence(grid: PeriodicGrid, vec: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.shape())
    for a in range(grid.d):
        out += grid.inverse(1j * grid.kvec[a] * grid.fourier(vec[a]))
    return out


def interpolate_at(grid: PeriodicGrid, values: np.ndarray,
                   points: np.ndarray) -> np.ndarray:
    """Periodic bicubic interpolation of a grid field at particle positions."""
    coords = (np.asarray(points, dtype=float) / grid.h) % grid.n
    return ndimage.map_coordinates(values, coords.T, order=3, mode="grid-wrap")


def norm_monitor(mu: DensityField, spec: PotentialSpec) -> dict:
    """Sup-norm regularity monitors of the limiting-solution hypothesis.

    The fractional Bessel-potential entry is a lattice multiplier proxy (the
    continuum norm has no computable recipe); it is flagged as such in the
    key name.
    """
    grid = mu.grid
    d, s, m = spec.d, spec.s, spec.m
    out: dict[str, float] = {}
    fhat = mu.fhat
    if s >= d - 1:
        mult = np.zeros_like(grid.kmag)
        nz = grid.kmag > 0
        mult[nz] = grid.kmag[nz] ** (s - d)
        stack = np.stack([grid.inverse(1j * grid.kvec[a] * mult * fhat)
                          for a in range(d)])
        out["riesz_gradient_sup"] = float(np.max(np.sqrt(np.sum(stack**2, axis=0))))
    hess = convolve(mu, spec, k=2)
    hess_mag = np.sqrt(np.sum(hess**2, axis=(0, 1)))
    if s == d - 2:
        out["hessian_sup"] = float(np.max(hess_mag))
    if s > d - 2:
        out["hessian_sup"] = float(np.max(hess_mag))
        # alpha = 1 Holder seminorm of the Hessian: sup of the third
        # derivative stack
        sym = kernel_multiplier(grid, spec)
        third = 0.0
        base = sym * fhat
        for a in range(d):
            for b in range(d):
                for c in range(d):
                    comp = grid.inverse(-1j * grid.kvec[a] * grid.kvec[b]
                                        * grid.kvec[c] * base)
                    third = third + comp**2
        out["hessian_lipschitz"] = float(np.max(np.sqrt(third)))
        # Bessel-potential proxy on grad(g*mu)
        sob = d * (d + m - s) + 2 * m
        sob /= 2.0 * (d + m)
        p_w = 2.0 * (d + m) / (d + m - 2 - s) if (d + m - 2 - s) > 0 else math.inf
        bessel = (1.0 + grid.kmag**2) ** (sob / 2.0)
        grad = np.stack([grid.inverse(bessel * 1j * grid.kvec[a] * base)
                         for a in range(d)])
        mag = np.sqrt(np.sum(grad**2, axis=0))
        if math.isinf(p_w):
            out["velocity_bessel_proxy"] = float(np.max(mag))
        else:
            out["velocity_bessel_proxy"] = float(
                grid.integrate(mag**p_w) ** (1.0 / p_w))
    return out


# --------------------------------------------------------------------------
# snapshot serialization: raw little-endian float64 + JSON header


def save_snapshot(path, grid: PeriodicGrid, values: np.ndarray, t: float,
                  extra: dict | None = None) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(values, dtype="<f8")
    path.with_suffix(".bin").write_bytes(arr.tobytes())
    header = {
        "format": "rmf-snapshot-1",
        "d": grid.d, "n": grid.n, "length": grid.length,
        "t": t, "dtype": "<f8", "shape": list(arr.shape),
    }
    if extra:
        header.update(extra)
    path.with_suffix(".json").write_text(json.dumps(header, indent=1, sort_keys=True))


def load_snapshot(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    values = raw.reshape(header["shape"]).copy()
    grid = PeriodicGrid(header["d"], header["n"], header["length"])
    return grid, values, header["t"], header
