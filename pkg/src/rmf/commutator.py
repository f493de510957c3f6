"""First- and second-order commutator bilinear forms, their point-mass
renormalizations, the truncation-parameter optimization, and ensemble
boundedness studies.

The smooth forms are the double grid sums

    sum_{x != y} (v(x)-v(y)) . grad g(x-y) f(x) g(y) h^{2d}        (first)
    sum_{x != y} (v(x)-v(y))^T Hess g(x-y) (v(x)-v(y)) f g h^{2d}  (second)

with the diagonal cell excluded and restored by a local quadrature
correction.  The sums are evaluated through an algebraically identical FFT
factorization (circular convolution against the origin-zeroed sampled
kernel); the literal double loop is kept in the test suite as a round-off
level equivalence oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import pairwise
from .energy import Configuration, smeared_norm_sq
from .field import (DensityField, PeriodicGrid, SpectralDistribution, convolve,
                    frac_norm, interpolate_at, kernel_multiplier,
                    spectral_gradient)
from .potential import PotentialSpec, radial_chain


@dataclass
class CommutatorReport:
    lhs: float
    vnorm: float
    fnorm: float
    gnorm: float
    ratio: float
    eta: float | None = None
    epsilon: float | None = None
    bracket: float | None = None


# --------------------------------------------------------------------------
# truncation-parameter optimization and the rate-bracket exponents


def optimize_parameters(n: int, s: float, d: int):
    """(eta, epsilon) closing the renormalized estimate at particle number n:

        s = 0:          eps = N^-1,                eta = eps^(s+2)
        0 < s <= d-2:   eps = N^(-1/((s+2)(s+1))), eta = eps^(s+3)
        d-2 < s < d:    eps = N^(-1/(d(s+1))),     eta = eps^(d+1)
    """
    if not 0 <= s < d:
        raise ValueError("need 0 <= s < d")
    if s == 0:
        eps = 1.0 / n
        eta = eps ** (s + 2)
    elif s <= d - 2:
        eps = float(n) ** (-1.0 / ((s + 2.0) * (s + 1.0)))
        eta = eps ** (s + 3)
    else:
        eps = float(n) ** (-1.0 / (d * (s + 1.0)))
        eta = eps ** (d + 1)
    return eta, eps


def rate_bracket_terms(d: int, s: float):
    """The N-decay terms of the Gronwall bracket as (exponent, has_log) pairs."""
    terms = [(min(d - s, 2.0) / (min(float(d), s + 2.0) * (s + 1.0)), False)]
    if s == 0:
        terms.append((1.0, True))
    if s == d - 2:
        terms.append((2.0 / (d * (d - 1.0)), True))
    return terms


def target_exponent(d: int, s: float):
    """(beta, log_flag): the dominant (smallest) exponent in the bracket and
    whether a log factor rides along with it (ties included)."""
    terms = rate_bracket_terms(d, s)
    beta = min(t[0] for t in terms)
    log_flag = any(t[1] for t in terms if abs(t[0] - beta) < 1e-12)
    return beta, log_flag


# --------------------------------------------------------------------------
# sampled minimum-image kernels and diagonal-cell moments


def _min_image_mesh(grid: PeriodicGrid):
    """Difference lattice wrapped to [-L/2, L/2).  The half-box row is its own
    periodic negative, so its displacement component is symmetrized to zero;
    this keeps the sampled gradient kernel exactly odd (and the Hessian
    kernel exactly even) on the lattice."""
    axis = np.arange(grid.n) * grid.h
    axis = (axis + grid.length / 2.0) % grid.length - grid.length / 2.0
    sym_axis = np.where(np.isclose(np.abs(axis), grid.length / 2.0), 0.0, axis)
    mesh_r = np.meshgrid(*([axis] * grid.d), indexing="ij")
    mesh = np.meshgrid(*([sym_axis] * grid.d), indexing="ij")
    r = np.sqrt(sum(m**2 for m in mesh_r))
    return mesh, r


def _sampled_gradient_kernel(grid: PeriodicGrid, spec: PotentialSpec):
    """K_a[z] = d_a g(z_min-image) on the difference lattice, origin zeroed."""
    mesh, r = _min_image_mesh(grid)
    origin = (0,) * grid.d
    r[origin] = 1.0
    d1 = radial_chain(spec, r, 1)
    d1[origin] = 0.0
    return np.stack([d1 * m for m in mesh])


def _sampled_hessian_kernel(grid: PeriodicGrid, spec: PotentialSpec):
    mesh, r = _min_image_mesh(grid)
    origin = (0,) * grid.d
    r[origin] = 1.0
    d1 = radial_chain(spec, r, 1)
    d2 = radial_chain(spec, r, 2)
    d1[origin] = 0.0
    d2[origin] = 0.0
    out = np.empty((grid.d, grid.d) + grid.shape())
    for a in range(grid.d):
        for b in range(grid.d):
            out[a, b] = d2 * mesh[a] * mesh[b]
            if a == b:
                out[a, b] += d1
    return out


def _cconv(kernel_hat: np.ndarray, values: np.ndarray, d: int) -> np.ndarray:
    axes = tuple(range(-d, 0))
    return np.real(np.fft.ifftn(kernel_hat * np.fft.fftn(values, axes=axes),
                                axes=axes))


def _radial_inner(spec: PotentialSpec, order: int, power: int, upper: float) -> float:
    """int_0^R (D^order g)(r) r^power dr: closed form for the pure parts,
    quadrature for bump perturbations."""
    if order < 1:
        raise ValueError("radial inner integrals are for derivative chains")
    s = spec.s
    if s == 0.0:
        coeff = (-1.0) ** order * 2.0 ** (order - 1) * math.factorial(order - 1)
        expo = power - 2.0 * order + 1.0
        base = coeff * upper**expo / expo
    else:
        coeff = 1.0
        for i in range(order):
            coeff *= -(s + 2 * i)
        expo = power - s - 2.0 * order + 1.0
        base = coeff * upper**expo / expo
    for p in spec.perturbations:
        from .potential import _bump_chain
        val, _ = integrate.quad(
            lambda r: float(_bump_chain(p, order, np.array([r]))[0]) * r**power,
            0.0, min(upper, p.radius), epsabs=1e-13, epsrel=1e-10, limit=200)
        base += val
    return base


def _angular_nodes(d: int):
    """Unit directions and quadrature weights for integrals over S^{d-1}."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        nodes, weights = np.polynomial.legendre.leggauss(256)
        theta = 0.5 * (nodes + 1.0) * 2.0 * math.pi
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        return dirs, weights * math.pi
    if d == 3:
        nt, wt = np.polynomial.legendre.leggauss(48)
        theta = 0.5 * (nt + 1.0) * math.pi
        wth = wt * 0.5 * math.pi * np.sin(theta)
        nphi, wphi = np.polynomial.legendre.leggauss(48)
        phi = 0.5 * (nphi + 1.0) * 2.0 * math.pi
        wph = wphi * math.pi
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        dirs = np.column_stack([
            (np.sin(th) * np.cos(ph)).ravel(),
            (np.sin(th) * np.sin(ph)).ravel(),
            np.cos(th).ravel(),
        ])
        return dirs, np.outer(wth, wph).ravel()
    raise NotImplementedError("angular nodes implemented for d <= 3")


def _elementary_symmetric(absdir: np.ndarray):
    """coeffs[k] = e_k(|direction components|), via prod_c (1 + c t)."""
    coeffs = np.array([1.0])
    for c in absdir:
        coeffs = np.convolve(coeffs, np.array([1.0, c]))
    return coeffs


@lru_cache(maxsize=64)
def _cell_moments(spec: PotentialSpec, h: float, d: int):
    """Moments of the kernel over the cell-difference set:

    the double grid sum excludes the same-cell pairs (x, y) in C_i x C_i,
    whose difference z = x - y fills [-h, h]^d with the tent density
    prod_c (h - |z_c|).  The correction therefore needs

        b2  = (1/d) int (D1 g)(r) r^2 tent(z) dz
        a22 =       int (D2 g)(r) z1^2 z2^2 tent(z) dz
        a4  =       int (D2 g)(r) z1^4 tent(z) dz

    reduced to angular quadrature of cube-truncated radial integrals via
    tent(z) = sum_k (-r)^k e_k(|zhat|) h^(d-k).
    """
    dirs, weights = _angular_nodes(d)

    def tent_integral(order: int, base_power: int, angular):
        total = 0.0
        for dir_, w, ang in zip(dirs, weights, angular):
            r_cube = h / np.max(np.abs(dir_))
            e = _elementary_symmetric(np.abs(dir_))
            inner = 0.0
            for k in range(d + 1):
                inner += ((-1.0) ** k * h ** (d - k) * e[k]
                          * _radial_inner(spec, order, base_power + k, r_cube))
            total += w * ang * inner
        return total

    ones = np.ones(len(weights))
    b2 = tent_integral(1, d + 1, ones) / d
    if d == 1:
        a22 = 0.0
        a4 = tent_integral(2, d + 3, ones)
    else:
        a22 = tent_integral(2, d + 3, dirs[:, 0] ** 2 * dirs[:, 1] ** 2)
        a4 = tent_integral(2, d + 3, dirs[:, 0] ** 4)
    return {"b2": b2, "a22": a22, "a4": a4}


def _grad_tensor_field(grid: PeriodicGrid, v: np.ndarray) -> np.ndarray:
    """(d, d, *shape) with [a, b] = d_b v_a, spectral derivatives."""
    return np.stack([spectral_gradient(grid, v[a]) for a in range(grid.d)])


# --------------------------------------------------------------------------
# smooth forms


def first_order_form(v: np.ndarray, f: np.ndarray, g: np.ndarray,
                     spec: PotentialSpec, grid: PeriodicGrid,
                     diagonal_correction: bool = True) -> float:
    """Double grid sum of (v(x)-v(y)) . grad g(x-y) f(x) g(y), diagonal cell
    excluded, restored by the local kernel moment contracted with div v."""
    if v.shape != (grid.d,) + grid.shape():
        raise ValueError("v must be a (d, ...) grid field")
    kern = _sampled_gradient_kernel(grid, spec)
    axes = tuple(range(-grid.d, 0))
    total = 0.0
    for a in range(grid.d):
        khat = np.fft.fftn(kern[a], axes=axes)
        conv_g = _cconv(khat, g, grid.d)
        conv_f = _cconv(khat, f, grid.d)
        total += float(np.sum(v[a] * (f * conv_g + g * conv_f)))
    total *= grid.cell_volume**2
    if diagonal_correction:
        # the tent moments already carry the full measure of the same-cell set
        moments = _cell_moments(spec, grid.h, grid.d)
        gt = _grad_tensor_field(grid, v)
        div_v = sum(gt[a, a] for a in range(grid.d))
        total += moments["b2"] * float(np.sum(f * g * div_v))
    return total


def second_order_form(v: np.ndarray, f: np.ndarray, g: np.ndarray,
                      spec: PotentialSpec, grid: PeriodicGrid,
                      diagonal_correction: bool = True) -> float:
    """Double grid sum of (v(x)-v(y))^T Hess g(x-y) (v(x)-v(y)) f(x) g(y)."""
    if v.shape != (grid.d,) + grid.shape():
        raise ValueError("v must be a (d, ...) grid field")
    kern = _sampled_hessian_kernel(grid, spec)
    axes = tuple(range(-grid.d, 0))
    fhat = np.fft.fftn(f, axes=axes)
    ghat = np.fft.fftn(g, axes=axes)
    vghat = [np.fft.fftn(v[b] * g, axes=axes) for b in range(grid.d)]
    vfhat = [np.fft.fftn(v[b] * f, axes=axes) for b in range(grid.d)]
    total = 0.0
    for a in range(grid.d):
        for b in range(grid.d):
            khat = np.fft.fftn(kern[a, b], axes=axes)
            w = v[a] * v[b]
            conv_g = np.real(np.fft.ifftn(khat * ghat, axes=axes))
            conv_f = np.real(np.fft.ifftn(khat * fhat, axes=axes))
            conv_vg = np.real(np.fft.ifftn(khat * vghat[b], axes=axes))
            conv_vf = np.real(np.fft.ifftn(khat * vfhat[b], axes=axes))
            total += float(np.sum(w * (f * conv_g + g * conv_f))
                           - np.sum(v[a] * f * conv_vg)
                           - np.sum(v[a] * g * conv_vf))
    total *= grid.cell_volume**2
    if diagonal_correction:
        moments = _cell_moments(spec, grid.h, grid.d)
        gt = _grad_tensor_field(grid, v)     # [a, b] = d_b v_a
        frob = np.sum(gt**2, axis=(0, 1))
        div_v = sum(gt[a, a] for a in range(grid.d))
        tr_sq = np.zeros(grid.shape())
        diag_sq = np.zeros(grid.shape())
        for a in range(grid.d):
            diag_sq += gt[a, a] ** 2
            for b in range(grid.d):
                tr_sq += gt[a, b] * gt[b, a]
        dens = (moments["a22"] * (frob + div_v**2 + tr_sq)
                + (moments["a4"] - 3.0 * moments["a22"]) * diag_sq
                + moments["b2"] * frob)
        if grid.d == 1:
            # no distinct-pair patterns in one dimension
            dens = (moments["a4"] + moments["b2"]) * frob
        total += float(np.sum(f * g * dens))
    return total


# --------------------------------------------------------------------------
# renormalized (point-mass) forms


def _vnorm_bracket(grid: PeriodicGrid, v: np.ndarray, spec: PotentialSpec) -> float:
    """||grad v||_inf, plus the |grad|^{(d-s)/2} v term in L^{2d/(d-2-s)} when
    s < d - 2."""
    gt = _grad_tensor_field(grid, v)
    out = float(np.max(np.sqrt(np.sum(gt**2, axis=(0, 1)))))
    if spec.s < spec.d - 2:
        p = 2.0 * spec.d / (spec.d - 2.0 - spec.s)
        mult = grid.kmag ** ((spec.d - spec.s) / 2.0)
        comps = np.stack([grid.inverse(mult * grid.fourier(v[a]))
                          for a in range(grid.d)])
        mag = np.sqrt(np.sum(comps**2, axis=0))
        out += float(grid.integrate(mag**p) ** (1.0 / p))
    return out


def gronwall_bracket(f_n: float, n: int, spec: PotentialSpec, mu: DensityField,
                     constant: float = 1.0) -> float:
    """F_N plus the explicit N-decay terms of the renormalized estimate
    (unit constants unless a calibrated one is supplied)."""
    d, s = spec.d, spec.s
    decay = 0.0
    for expo, has_log in rate_bracket_terms(d, s):
        decay += float(n) ** (-expo) * (math.log(n) if has_log else 1.0)
    decay *= (1.0 + mu.linf)
    grad_term_expo = min(d + 1.0, s + 3.0) / (min(float(d), s + 2.0) * (s + 1.0))
    grid = mu.grid
    if s >= d - 1:
        mult = np.zeros_like(grid.kmag)
        nz = grid.kmag > 0
        mult[nz] = grid.kmag[nz] ** (s - d)
        stack = np.stack([grid.inverse(1j * grid.kvec[a] * mult * mu.fhat)
                          for a in range(d)])
        mu_norm = float(np.max(np.sqrt(np.sum(stack**2, axis=0))))
    else:
        mult = np.zeros_like(grid.kmag)
        nz = grid.kmag > 0
        mult[nz] = grid.kmag[nz] ** (s + 1 - d)
        mu_norm = float(np.max(np.abs(grid.inverse(mult * mu.fhat))))
    return f_n + constant * (decay + float(n) ** (-grad_term_expo) * mu_norm)


def renormalized_form(config: Configuration, mu: DensityField, v: np.ndarray,
                      spec: PotentialSpec) -> CommutatorReport:
    """The commutator form against (emp - mu)^{x2} with the diagonal excised:
    exact pair sum (minimum image), spectral particle-mu cross terms probed
    at the particles, and the spectral mu-mu term.  The report carries the
    truncation parameters of the closing estimate and the smeared norm at
    that eta as the f/g norms."""
    config.require_distinct()
    grid = mu.grid
    n = config.n
    v_at = np.column_stack([interpolate_at(grid, v[a], config.points)
                            for a in range(grid.d)])
    pair = pairwise.pair_bilinear_gradient(config.points, config.length, spec,
                                           v_at) / n**2

    grad_mu = convolve(mu, spec, k=1)
    p_at = np.column_stack([interpolate_at(grid, grad_mu[a], config.points)
                            for a in range(grid.d)])
    q_field = np.zeros(grid.shape())
    sym = kernel_multiplier(grid, spec)
    for a in range(grid.d):
        q_field += grid.inverse(1j * grid.kvec[a] * sym
                                * grid.fourier(v[a] * mu.values))
    q_at = interpolate_at(grid, q_field, config.points)
    cross = 2.0 / n * float(np.sum(np.einsum("nd,nd->n", v_at, p_at) - q_at))

    mumu = 2.0 * grid.integrate(np.einsum("a...,a...->...", v, grad_mu) * mu.values)

    lhs = pair - cross + mumu
    eta, eps = optimize_parameters(n, spec.s, spec.d)
    norm_sq = smeared_norm_sq(config, mu, min(eta, spec.eta_max * 0.5), spec) \
        if eta < spec.eta_max else None
    fnorm = math.sqrt(max(norm_sq, 0.0)) if norm_sq is not None else float("nan")
    vnorm = _vnorm_bracket(grid, v, spec)
    f_n = pair_f_n(config, mu, spec)
    bracket = gronwall_bracket(f_n, n, spec, mu)
    denom = vnorm * fnorm * fnorm
    ratio = abs(lhs) / denom if denom > 0 else math.inf
    return CommutatorReport(lhs=lhs, vnorm=vnorm, fnorm=fnorm, gnorm=fnorm,
                            ratio=ratio, eta=eta, epsilon=eps, bracket=bracket)


def pair_f_n(config: Configuration, mu: DensityField, spec: PotentialSpec) -> float:
    from .energy import modulated_energy
    return modulated_energy(config, mu, spec).f_n


def second_order_renormalized(config: Configuration, mu: DensityField,
                              v: np.ndarray, spec: PotentialSpec) -> CommutatorReport:
    """Second-order analogue: (v(x)-v(y))^T Hess g (v(x)-v(y)) against
    (emp - mu)^{x2}, diagonal excised."""
    config.require_distinct()
    grid = mu.grid
    n = config.n
    v_at = np.column_stack([interpolate_at(grid, v[a], config.points)
                            for a in range(grid.d)])
    pair = pairwise.pair_bilinear_hessian(config.points, config.length, spec,
                                          v_at) / n**2

    sym = kernel_multiplier(grid, spec)

    def conv_ab(a, b, values):
        return grid.inverse(-grid.kvec[a] * grid.kvec[b] * sym
                            * grid.fourier(values))

    m2 = np.empty((grid.d, grid.d) + grid.shape())
    m1 = np.zeros((grid.d,) + grid.shape())
    m0 = np.zeros(grid.shape())
    for a in range(grid.d):
        for b in range(grid.d):
            m2[a, b] = conv_ab(a, b, mu.values)
            m1[a] += conv_ab(a, b, v[b] * mu.values)
            m0 += conv_ab(a, b, v[a] * v[b] * mu.values)

    m2_at = np.stack([
        np.stack([interpolate_at(grid, m2[a, b], config.points)
                  for b in range(grid.d)]) for a in range(grid.d)])
    m1_at = np.stack([interpolate_at(grid, m1[a], config.points)
                      for a in range(grid.d)])
    m0_at = interpolate_at(grid, m0, config.points)
    cross_i = (np.einsum("na,abn,nb->n", v_at, m2_at, v_at)
               - 2.0 * np.einsum("na,an->n", v_at, m1_at) + m0_at)
    cross = 2.0 / n * float(np.sum(cross_i))

    vmv = np.einsum("a...,ab...,b...->...", v, m2, v)
    vm1 = np.einsum("a...,a...->...", v, m1)
    mumu = grid.integrate((vmv - 2.0 * vm1 + m0) * mu.values)

    lhs = pair - cross + mumu
    eta, eps = optimize_parameters(n, spec.s, spec.d)
    norm_sq = smeared_norm_sq(config, mu, min(eta, spec.eta_max * 0.5), spec) \
        if eta < spec.eta_max else None
    fnorm = math.sqrt(max(norm_sq, 0.0)) if norm_sq is not None else float("nan")
    vnorm = _vnorm_bracket(grid, v, spec)
    f_n = pair_f_n(config, mu, spec)
    bracket = gronwall_bracket(f_n, n, spec, mu)
    denom = vnorm**2 * fnorm * fnorm
    ratio = abs(lhs) / denom if denom > 0 else math.inf
    return CommutatorReport(lhs=lhs, vnorm=vnorm, fnorm=fnorm, gnorm=fnorm,
                            ratio=ratio, eta=eta, epsilon=eps, bracket=bracket)


# --------------------------------------------------------------------------
# random smooth ensemble and the boundedness study


def spectral_draw(grid: PeriodicGrid, decay: float, seed: int, stream: int,
                  mean_zero: bool = True) -> np.ndarray:
    """Random smooth real field with amplitude law |k|^-decay and uniform
    phases, from the counter-based stream (seed, stream)."""
    gen = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))
    phases = gen.uniform(0.0, 2.0 * math.pi, size=grid.shape())
    amp = np.zeros(grid.shape())
    nz = grid.kmag > 0
    amp[nz] = grid.kmag[nz] ** (-decay)
    coeffs = amp * np.exp(1j * phases)
    if not mean_zero:
        coeffs[(0,) * grid.d] = 1.0
    field = np.real(np.fft.ifftn(coeffs)) * grid.n ** grid.d
    # normalize to unit sup so draws are comparable across grids
    return field / max(np.max(np.abs(field)), 1e-300)


def ensemble_draw(grid: PeriodicGrid, seed: int, index: int):
    """(v, f, g) for one study draw: f, g mean-zero with decay d/2 + 1.5,
    v one octave smoother (one extra power of decay)."""
    d_over_2 = grid.d / 2.0
    f = spectral_draw(grid, d_over_2 + 1.5, seed, 4 * index + 0)
    g = spectral_draw(grid, d_over_2 + 1.5, seed, 4 * index + 1)
    v = np.stack([spectral_draw(grid, d_over_2 + 2.5, seed, 4 * index + 2 + a,
                                mean_zero=False) for a in range(grid.d)])
    return v, f, g


def smooth_report(v, f, g, spec: PotentialSpec, grid: PeriodicGrid,
                  order: int = 1) -> CommutatorReport:
    form = first_order_form if order == 1 else second_order_form
    lhs = form(v, f, g, spec, grid)
    sigma = (spec.s - spec.d) / 2.0
    fnorm = frac_norm(SpectralDistribution.from_values(grid, f, remove_mean=True), sigma)
    gnorm = frac_norm(SpectralDistribution.from_values(grid, g, remove_mean=True), sigma)
    vnorm = _vnorm_bracket(grid, v, spec)
    denom = (vnorm if order == 1 else vnorm**2) * fnorm * gnorm
    ratio = abs(lhs) / denom if denom > 0 else math.inf
    return CommutatorReport(lhs=lhs, vnorm=vnorm, fnorm=fnorm, gnorm=gnorm,
                            ratio=ratio)


def boundedness_study(spec: PotentialSpec, grid: PeriodicGrid, draws: int,
                      seed: int, order: int = 1):
    """Ratio statistics of the bilinear form over the documented random
    ensemble; the estimate predicts a bounded ratio, so the tail must stay
    comparable to the bulk."""
    rows = []
    for i in range(draws):
        v, f, g = ensemble_draw(grid, seed, i)
        rep = smooth_report(v, f, g, spec, grid, order=order)
        rows.append({"draw": i, "lhs": rep.lhs, "vnorm": rep.vnorm,
                     "fnorm": rep.fnorm, "gnorm": rep.gnorm, "ratio": rep.ratio})
    ratios = np.array([r["ratio"] for r in rows])
    summary = {
        "draws": draws,
        "max": float(ratios.max()),
        "median": float(np.median(ratios)),
        "q90": float(np.quantile(ratios, 0.9)),
        "q99": float(np.quantile(ratios, 0.99)),
        "max_over_median": float(ratios.max() / np.median(ratios)),
    }
    return rows, summary
