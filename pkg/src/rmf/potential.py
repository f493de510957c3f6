"""Riesz-type interaction potentials and their smeared/extended relatives.

The radial profiles handled here are

    g(r) = r**-s            (s > 0)
    g(r) = -log(r)          (s = 0)

optionally plus compactly supported bump perturbations  phi_j(r) * r**-s_j.
Everything downstream (derivative tensors, spherical smearing, Fourier
symbols, admissibility sampling) is driven by the one-dimensional radial
profile and its derivatives, so the module is organized around the operator

    D[c](r) = c'(r) / r

acting on radial functions: the k-th derivative tensor of g(|x|) is

    sum_j  (D^(k-j) g)(r) * P_{k,j}(x)

where P_{k,j} sums x-factors and Kronecker deltas over all pairings of the
k indices.  This identity is exercised against finite differences in the
test suite.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special


class DomainError(ValueError):
    """Input outside the domain of a potential operation (e.g. r <= 0)."""


class SymbolValidationError(RuntimeError):
    """The Fourier-symbol self-consistency check failed."""


# --------------------------------------------------------------------------
# specification of the interaction


@dataclass(frozen=True)
class BumpPerturbation:
    """One term  amplitude * exp(1 - 1/(1-(r/radius)^2)) * r**-exponent."""

    exponent: float
    radius: float
    amplitude: float

    def __post_init__(self):
        if not self.exponent >= 0.0:
            raise ValueError("perturbation exponent must be >= 0")
        if not self.radius > 0.0:
            raise ValueError("perturbation radius must be > 0")


@dataclass(frozen=True)
class PotentialSpec:
    """Which admissible interaction, in which dimension.

    r0 is the superharmonicity radius; +inf for the homogeneous pure cases,
    where superharmonicity (of g itself for s <= d-2, of the extension for
    larger s) is global.
    """

    d: int
    s: float
    variant: str = "riesz"
    perturbations: tuple[BumpPerturbation, ...] = ()
    r0: float = math.inf

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if not 0.0 <= self.s < self.d:
            raise ValueError(f"need 0 <= s < d (potential case), got s={self.s}, d={self.d}")
        if self.variant not in ("riesz", "log", "perturbed_riesz"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "log" and self.s != 0.0:
            raise ValueError("log variant means s = 0")
        if self.variant == "riesz" and self.s == 0.0:
            raise ValueError("s = 0 is the log variant")
        if self.variant != "perturbed_riesz" and self.perturbations:
            raise ValueError("perturbations only allowed for perturbed_riesz")
        if self.variant == "perturbed_riesz":
            if self.s <= 0.0:
                raise ValueError("perturbed_riesz needs s > 0")
            for p in self.perturbations:
                if p.exponent >= self.s:
                    raise ValueError("perturbation exponents must be < s")
        if not self.r0 > 0.0:
            raise ValueError("r0 must be positive")

    # -- convenience constructors ------------------------------------------

    @classmethod
    def riesz(cls, d: int, s: float) -> "PotentialSpec":
        if s == 0.0:
            return cls(d=d, s=0.0, variant="log")
        return cls(d=d, s=s, variant="riesz")

    @classmethod
    def log(cls, d: int) -> "PotentialSpec":
        return cls(d=d, s=0.0, variant="log")

    @classmethod
    def perturbed(cls, d: int, s: float, perturbations, r0: float = 1.0) -> "PotentialSpec":
        perts = tuple(
            p if isinstance(p, BumpPerturbation) else BumpPerturbation(*p)
            for p in perturbations
        )
        return cls(d=d, s=s, variant="perturbed_riesz", perturbations=perts, r0=r0)

    # -- derived structure --------------------------------------------------

    @property
    def m(self) -> int:
        """Extension dimension."""
        return extension_dim(self.d, self.s)

    @property
    def c_s(self) -> float:
        """Doubling constant (s > 0): g(2r) <= c_s g(r), equals 2**-s pure."""
        if self.s <= 0.0:
            raise ValueError("c_s is defined for s > 0; use c0 at s = 0")
        return 2.0 ** (-self.s)

    @property
    def c0(self) -> float:
        """Log-case doubling gap g(r) - g(2r) >= c0, equals log 2 pure."""
        if self.s != 0.0:
            raise ValueError("c0 is defined at s = 0")
        return math.log(2.0)

    @property
    def eta_max(self) -> float:
        return min(0.5, self.r0 / 2.0)

    def sample_radius(self) -> float:
        """Outer radius for admissibility sampling: r0, capped to a box of side 4."""
        return min(self.r0, 2.0)


def extension_dim(d: int, s: float) -> int:
    """Smallest m >= 0 with d + m - s - 2 >= 0, and m = 0 when g itself
    is superharmonic (d >= 2, s <= d - 2)."""
    if not 0.0 <= s < d:
        raise ValueError("need 0 <= s < d")
    if d >= 2 and s <= d - 2:
        return 0
    m = max(0, math.ceil(s + 2 - d))
    return max(m, 1)


# --------------------------------------------------------------------------
# radial profile and the D = (1/r) d/dr chains


def _riesz_chain(s: float, n: int, r: np.ndarray) -> np.ndarray:
    # D^n (r^-s) = prod_{i<n} (-s - 2i) * r^(-s-2n)
    coeff = 1.0
    for i in range(n):
        coeff *= -(s + 2 * i)
    return coeff * r ** (-s - 2 * n)


def _log_chain(n: int, r: np.ndarray) -> np.ndarray:
    # D^n (-log r): n = 0 -> -log r,   n >= 1 -> (-1)^n 2^(n-1) (n-1)! r^(-2n)
    if n == 0:
        return -np.log(r)
    coeff = (-1.0) ** n * 2.0 ** (n - 1) * math.factorial(n - 1)
    return coeff * r ** (-2.0 * n)


@lru_cache(maxsize=64)
def _bump_chain_funcs(exponent: float, radius: float, max_order: int = 4):
    """Lambdified D^n of exp(1 - 1/(1-(r/R)^2)) * r**-exponent, n = 0..max_order.

    In the variable u = r^2 the operator D = (1/r) d/dr is just 2 d/du, so
    the exact chains stay small rational-times-exponential expressions.
    """
    import sympy as sp

    u = sp.symbols("u", positive=True)
    expr = sp.exp(1 - 1 / (1 - u / radius**2)) * u ** (-sp.Rational(1, 2) * sp.nsimplify(exponent, rational=True))
    funcs = []
    chain = expr
    for n in range(max_order + 1):
        funcs.append(sp.lambdify(u, chain, modules="numpy"))
        chain = 2 * sp.diff(chain, u)
    return funcs


def _bump_chain(p: BumpPerturbation, n: int, r: np.ndarray) -> np.ndarray:
    funcs = _bump_chain_funcs(p.exponent, p.radius)
    out = np.zeros_like(r, dtype=float)
    inside = r < p.radius * (1.0 - 1e-12)
    if np.any(inside):
        out[inside] = funcs[n](r[inside] ** 2)
    return p.amplitude * out


def radial_chain(spec: PotentialSpec, r, n: int = 0) -> np.ndarray:
    """(D^n g)(r) with D[c] = c'/r, vectorized over r.  n = 0 is g itself."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise DomainError("radial profile is singular at r <= 0")
    if spec.s == 0.0:
        out = _log_chain(n, r)
    else:
        out = _riesz_chain(spec.s, n, r)
    for p in spec.perturbations:
        out = out + _bump_chain(p, n, r)
    return out


def evaluate(spec: PotentialSpec, r) -> np.ndarray:
    """g(r): r**-s for s > 0, -log r at s = 0, plus perturbation terms."""
    return radial_chain(spec, r, 0)


def radial_derivatives(spec: PotentialSpec, r, order: int):
    """Plain d^n/dr^n g for n = 0..order, recovered from the D-chains via
    f' = r D f and f'' = r^2 D^2 f + D f (and so on by recursion)."""
    r = np.asarray(r, dtype=float)
    chains = [radial_chain(spec, r, n) for n in range(order + 1)]
    # derivs[n] in terms of chains: d/dr (D^k f) = r * D^(k+1) f
    derivs = [chains[0]]
    if order >= 1:
        derivs.append(r * chains[1])
    if order >= 2:
        derivs.append(r * r * chains[2] + chains[1])
    if order >= 3:
        derivs.append(r**3 * chains[3] + 3.0 * r * chains[2])
    if order >= 4:
        derivs.append(r**4 * chains[4] + 6.0 * r * r * chains[3] + 3.0 * chains[2])
    return derivs[: order + 1]


def radial_laplacian(spec: PotentialSpec, r, dim: int) -> np.ndarray:
    """Laplacian of the radial profile viewed in `dim` dimensions:
    f'' + (dim-1) f'/r = r^2 D^2 f + dim * D f."""
    r = np.asarray(r, dtype=float)
    return r * r * radial_chain(spec, r, 2) + dim * radial_chain(spec, r, 1)


# --------------------------------------------------------------------------
# derivative tensors


def _pairings(k: int, j: int):
    """All ways to pick j disjoint unordered pairs out of k index slots
    (remaining slots stay single)."""

    def matchings(slots):
        if not slots:
            yield ()
            return
        a = slots[0]
        for idx in range(1, len(slots)):
            b = slots[idx]
            rest = slots[1:idx] + slots[idx + 1 :]
            for sub in matchings(rest):
                yield ((a, b),) + sub

    results = []
    for paired in itertools.combinations(range(k), 2 * j):
        singles = tuple(i for i in range(k) if i not in paired)
        for pairs in matchings(list(paired)):
            results.append((pairs, singles))
    return results


@lru_cache(maxsize=None)
def _pairings_cached(k: int, j: int):
    return tuple(_pairings(k, j))


def derivative_tensor(spec: PotentialSpec, x, k: int) -> np.ndarray:
    """Exact k-th derivative tensor of g at x != 0, shape (d,)*k, k in 1..4."""
    if k not in (1, 2, 3, 4):
        raise ValueError("k must be in {1, 2, 3, 4}")
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"x must have shape ({spec.d},)")
    r = float(np.linalg.norm(x))
    if r <= 0.0:
        raise DomainError("derivative tensors are singular at x = 0")
    eye = np.eye(spec.d)
    out = np.zeros((spec.d,) * k)
    for j in range(k // 2 + 1):
        coeff = float(radial_chain(spec, np.array([r]), k - j)[0])
        for pairs, singles in _pairings_cached(k, j):
            term = np.ones(())
            # build by outer products in slot order, then transpose into place
            factors = []
            axes_order = []
            for (a, b) in pairs:
                factors.append(eye)
                axes_order.extend([a, b])
            for a in singles:
                factors.append(x)
                axes_order.append(a)
            term = factors[0]
            for f in factors[1:]:
                term = np.multiply.outer(term, f)
            # term currently indexed in axes_order; send to natural order
            perm = np.argsort(axes_order)
            out += coeff * np.transpose(term, perm)
    return out


def derivative_bound_constant(spec: PotentialSpec, k: int, radii=None, seed: int = 0) -> float:
    """Fitted C in |grad^k g(x)| <= C (|x|^(-s-k) + |log x| 1_{s=k=0}), by sampling."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    if radii is None:
        radii = np.geomspace(1e-4, spec.sample_radius(), 40)
    worst = 0.0
    for r in radii:
        u = rng.standard_normal(spec.d)
        u /= np.linalg.norm(u)
        x = r * u
        if k == 0:
            mag = abs(float(evaluate(spec, np.array([r]))[0]))
        else:
            mag = float(np.sqrt(np.sum(derivative_tensor(spec, x, k) ** 2)))
        env = r ** (-spec.s - k)
        if spec.s == 0.0 and k == 0:
            env += abs(math.log(r))
        worst = max(worst, mag / env)
    return worst


# --------------------------------------------------------------------------
# spherical smearing


def _sphere_weight_norm(dim: int) -> float:
    # int_0^pi sin^(dim-2) theta dtheta
    return math.sqrt(math.pi) * math.gamma((dim - 1) / 2.0) / math.gamma(dim / 2.0)


def spherical_mean(spec: PotentialSpec, r: float, eta: float, dim: int,
                   tol: float = 1e-10) -> float:
    """Average of g over the sphere of radius eta centered at distance r from
    the origin, in `dim` dimensions; reduces to a polar-angle integral with
    weight sin^(dim-2).  Adaptive Gauss-Kronrod, abs tolerance `tol`."""
    if dim == 1:
        lo = abs(r - eta)
        if lo == 0.0:
            raise DomainError("1-d sphere average hits the singularity at r = eta")
        vals = evaluate(spec, np.array([lo, r + eta]))
        return 0.5 * float(vals[0] + vals[1])

    def integrand(theta):
        dist = math.sqrt(max(r * r + eta * eta - 2.0 * r * eta * math.cos(theta), 0.0))
        if dist == 0.0:
            return 0.0
        return float(evaluate(spec, np.array([dist]))[0]) * math.sin(theta) ** (dim - 2)

    val, err = integrate.quad(integrand, 0.0, math.pi, epsabs=tol, epsrel=tol, limit=400)
    norm = _sphere_weight_norm(dim)
    if err > 100 * tol * max(1.0, abs(val)):
        raise ArithmeticError(
            f"sphere-average quadrature did not converge: residual {err:.3e}"
        )
    return val / norm


@dataclass
class SmearTable:
    """g_eta on a radial grid, with monotone-cubic interpolation between nodes.

    `extended` marks that the sphere average was taken in d+m dimensions (the
    values are then those of the extended kernel on the z = 0 slice, which is
    the same radial profile averaged over the larger sphere).  `order` is the
    number of sphere convolutions applied (2 = the double-smeared kernel that
    appears in pairwise terms of the smeared norm).
    """

    spec: PotentialSpec
    eta: float
    radii: np.ndarray
    values: np.ndarray
    extended: bool
    order: int = 1
    _interp: interpolate.PchipInterpolator = field(repr=False, default=None)

    def __post_init__(self):
        if self._interp is None:
            self._interp = interpolate.PchipInterpolator(self.radii, self.values,
                                                         extrapolate=False)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = self._interp(np.clip(r, self.radii[0], self.radii[-1]))
        # beyond the table the smearing is invisible: fall back to g itself
        far = r > self.radii[-1]
        if np.any(far):
            out = np.where(far, evaluate(self.spec, np.maximum(r, self.radii[0])), out)
        return out

    @property
    def value_at_zero(self) -> float:
        return float(self.values[0])

    def radial_antiderivative(self, dim: int):
        """Cumulative integral r -> int_0^r table(rho) * |S^(dim-1)| rho^(dim-1) drho."""
        area = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
        dens = interpolate.PchipInterpolator(
            self.radii, self.values * area * self.radii ** (dim - 1), extrapolate=False
        )
        return dens.antiderivative()


def smear(spec: PotentialSpec, eta: float, extended: bool = False,
          radii=None, rmax: float = 8.0, order: int = 1) -> SmearTable:
    """Tabulate the spherically smeared potential g_eta (order=1) or the
    doubly smeared kernel (order=2) on a geometric radial grid.

    extended=True averages over the (d+m-1)-sphere and requires m >= 1; the
    returned values are those of the extended smeared kernel on the z = 0
    slice, as functions of the in-slice distance.
    """
    if not 0.0 < eta < spec.eta_max:
        raise DomainError(f"need 0 < eta < min(1/2, r0/2) = {spec.eta_max}")
    if extended and spec.m < 1:
        raise DomainError("extended smearing requires extension dimension m >= 1")
    dim = spec.d + spec.m if extended else spec.d
    if radii is None:
        radii = np.geomspace(eta / 100.0, rmax, 512)
        # the smeared kernel kinks at r = eta; make it (and 2 eta) exact nodes
        radii = np.unique(np.concatenate([radii, [eta, 2.0 * eta]]))
    radii = np.asarray(radii, dtype=float)

    single = np.array([spherical_mean(spec, float(r), eta, dim) for r in radii])
    # r = 0: every sphere point sits at distance eta
    g_at_eta = float(evaluate(spec, np.array([eta]))[0])
    grid = np.concatenate(([0.0], radii))
    vals = np.concatenate(([g_at_eta], single))

    if order == 1:
        return SmearTable(spec, eta, grid, vals, extended, 1)
    if order != 2:
        raise ValueError("order must be 1 or 2")

    base = SmearTable(spec, eta, grid, vals, extended, 1)
    # second sphere convolution: the integrand is now smooth, fixed-order
    # Gauss-Legendre in the polar angle suffices
    nodes, weights = np.polynomial.legendre.leggauss(400)
    theta = 0.5 * math.pi * (nodes + 1.0)
    wts = weights * 0.5 * math.pi
    norm = _sphere_weight_norm(dim)

    def second(r):
        dist = np.sqrt(np.maximum(r * r + eta * eta - 2.0 * r * eta * np.cos(theta), 0.0))
        return float(np.sum(base(dist) * np.sin(theta) ** (dim - 2) * wts) / norm)

    if dim == 1:
        vals2 = np.array([0.5 * (base(abs(r - eta)) + base(r + eta)) for r in grid])
    else:
        vals2 = np.array([second(float(r)) for r in grid])
    return SmearTable(spec, eta, grid, vals2, extended, 2)


@lru_cache(maxsize=64)
def cached_smear(spec: PotentialSpec, eta: float, extended: bool = False,
                 order: int = 1, rmax: float = 8.0) -> "SmearTable":
    """Memoized smear(): ensemble studies reuse one table per (spec, eta)."""
    return smear(spec, eta, extended=extended, order=order, rmax=rmax)


@lru_cache(maxsize=32)
def _unit_self_energy(spec: PotentialSpec, dim: int) -> float:
    # A = double sphere average of g at scale 1 = (single) spherical mean of
    # g over the unit sphere, evaluated at distance 1 (both reductions exact
    # for radial g).
    return spherical_mean(spec, 1.0, 1.0, dim)


def smeared_self_energy(spec: PotentialSpec, eta: float) -> float:
    """Self-interaction of one smeared point mass: eta^-s * A for s > 0,
    -log eta + A at s = 0, with A the unit-scale double sphere average
    (computed once by quadrature and cached).  Exact rescaling identity."""
    if spec.variant not in ("riesz", "log"):
        raise DomainError("self-energy rescaling holds for the pure variants only")
    if not eta > 0.0:
        raise DomainError("eta must be positive")
    dim = spec.d + spec.m
    a = _unit_self_energy(spec, dim)
    if spec.s == 0.0:
        return -math.log(eta) + a
    return eta ** (-spec.s) * a


# --------------------------------------------------------------------------
# Fourier symbol


def _symbol_constant_formula(d: int, s: float) -> float:
    # forward transform with kernel e^{-i x.xi}:
    #   |x|^-s  ->  pi^(d/2) 2^(d-s) Gamma((d-s)/2)/Gamma(s/2) |xi|^(s-d)
    #   -log|x| ->  2^(d-1) pi^(d/2) Gamma(d/2) |xi|^-d   (s -> 0 limit)
    if s == 0.0:
        return 2.0 ** (d - 1) * math.pi ** (d / 2.0) * math.gamma(d / 2.0)
    return (
        math.pi ** (d / 2.0)
        * 2.0 ** (d - s)
        * math.gamma((d - s) / 2.0)
        / math.gamma(s / 2.0)
    )


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@lru_cache(maxsize=32)
def _perturbation_symbol_table(d: int, exponent: float, radius: float):
    """Radial Fourier transform of one (unit-amplitude) bump term, tabulated.

    The term has compact support, so its transform is the convergent radial
    integral of the profile against the sphere factor; fine enough rho grid
    plus PCHIP keeps interpolation error far below the validation tolerance.
    """
    from .field import shell_factor  # radial factor of the unit sphere measure

    p = BumpPerturbation(exponent, radius, 1.0)
    area = _sphere_area(d)
    rhos = np.linspace(0.0, 4096.0, 8193)

    def ft(rho):
        def integrand(r):
            prof = float(_bump_chain(p, 0, np.array([r]))[0])
            return prof * shell_factor(d, r, rho) * area * r ** (d - 1)

        val, _ = integrate.quad(integrand, 0.0, radius, epsabs=1e-12, epsrel=1e-10,
                                limit=200)
        return val

    vals = np.array([ft(float(rho)) for rho in rhos])
    return interpolate.PchipInterpolator(rhos, vals, extrapolate=False)


_VALIDATED: dict = {}


def _symbol_magnitude(spec: PotentialSpec, rho: np.ndarray) -> np.ndarray:
    c = _symbol_constant_formula(spec.d, spec.s)
    out = c * rho ** (spec.s - spec.d)
    for p in spec.perturbations:
        table = _perturbation_symbol_table(spec.d, p.exponent, p.radius)
        extra = p.amplitude * table(np.clip(rho, 0.0, 4096.0))
        out = out + np.where(rho <= 4096.0, extra, 0.0)
    return out


def validate_symbol(spec: PotentialSpec, tol: float = 1e-4) -> float:
    """Two-route check of the symbol normalization.

    Physical route: (g * Lap phi)(0) by radial quadrature, phi a unit
    Gaussian (the Laplacian makes the probe mean-zero, so the check is
    uniform in s, including s = 0 where plain Gaussian convolution against
    the symbol diverges at the origin).  Spectral route: the same pairing
    through the symbol.  Raises SymbolValidationError beyond `tol`.
    """
    d = spec.d
    area = _sphere_area(d)

    def physical(r):
        g = float(evaluate(spec, np.array([r]))[0])
        lap_phi = (r * r - d) * math.exp(-r * r / 2.0)
        return g * lap_phi * area * r ** (d - 1)

    i_phys, _ = integrate.quad(physical, 0.0, 40.0, epsabs=1e-12, epsrel=1e-12,
                               limit=400)

    def spectral(rho):
        sym = float(_symbol_magnitude(spec, np.array([rho]))[0])
        phihat = (2.0 * math.pi) ** (d / 2.0) * math.exp(-rho * rho / 2.0)
        return -sym * rho * rho * phihat * area * rho ** (d - 1)

    i_spec, _ = integrate.quad(spectral, 0.0, 40.0, epsabs=1e-12, epsrel=1e-12,
                               limit=400)
    i_spec /= (2.0 * math.pi) ** d

    resid = abs(i_phys - i_spec) / max(abs(i_phys), 1e-300)
    if not resid <= tol:
        raise SymbolValidationError(
            f"symbol validation failed for {spec}: physical {i_phys:.8e} vs "
            f"spectral {i_spec:.8e} (rel. residual {resid:.3e})"
        )
    return resid


def fourier_symbol(spec: PotentialSpec, xi) -> np.ndarray:
    """ghat(xi) = c_{d,s} |xi|^(s-d) (plus perturbation transforms), with the
    normalization validated on first use per spec rather than trusted."""
    key = spec
    if key not in _VALIDATED:
        _VALIDATED[key] = validate_symbol(spec)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1 and xi.shape == (spec.d,):
        rho = np.array([np.linalg.norm(xi)])
        if rho[0] == 0.0:
            raise DomainError("symbol undefined at xi = 0")
        return _symbol_magnitude(spec, rho)[0]
    rho = np.asarray(xi, dtype=float)
    if np.any(rho == 0.0):
        raise DomainError("symbol undefined at xi = 0")
    return _symbol_magnitude(spec, rho)


def symbol_on_magnitudes(spec: PotentialSpec, rho: np.ndarray) -> np.ndarray:
    """Symbol as a function of |xi| with the zero mode set to 0 (the
    neutralization rule used by all grid convolutions)."""
    key = spec
    if key not in _VALIDATED:
        _VALIDATED[key] = validate_symbol(spec)
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    nz = rho > 0.0
    out[nz] = _symbol_magnitude(spec, rho[nz])
    return out


# --------------------------------------------------------------------------
# admissibility report


@dataclass
class CheckResult:
    passed: bool
    constant: float | None
    worst: dict

    def to_dict(self):
        return {"passed": bool(self.passed), "constant": self.constant,
                "worst": self.worst}


@dataclass
class AdmissibilityReport:
    spec: PotentialSpec
    checks: dict

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self):
        return {
            "potential": {
                "d": self.spec.d, "s": self.spec.s, "variant": self.spec.variant,
                "m": self.spec.m, "r0": self.spec.r0,
                "perturbations": [
                    {"exponent": p.exponent, "radius": p.radius, "amplitude": p.amplitude}
                    for p in self.spec.perturbations
                ],
            },
            "all_passed": self.all_passed,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
        }


def check_admissibility(spec: PotentialSpec, sample_budget: int = 2000,
                        seed: int = 0) -> AdmissibilityReport:
    """Sample-based verification of the structural assumptions: symmetry,
    blow-up at the origin, superharmonicity (of g for m = 0, of the extension
    otherwise), derivative growth envelopes with fitted constants, the
    pointwise potential-domination bound, and the doubling condition.
    Report-only: never raises on failure."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    rmax = spec.sample_radius()
    n_r = max(16, sample_budget // 10)
    radii = np.geomspace(1e-6, rmax * (1 - 1e-9), n_r)
    checks: dict[str, CheckResult] = {}

    # symmetry g(x) = g(-x): radial by construction, sampled anyway
    pts = rng.standard_normal((min(sample_budget, 200), spec.d))
    pts *= (rng.uniform(1e-3, rmax, size=(pts.shape[0], 1))
            / np.linalg.norm(pts, axis=1, keepdims=True))
    sym_gap = float(np.max(np.abs(
        evaluate(spec, np.linalg.norm(pts, axis=1))
        - evaluate(spec, np.linalg.norm(-pts, axis=1)))))
    checks["symmetry"] = CheckResult(sym_gap <= 1e-12, sym_gap, {"max_gap": sym_gap})

    # blow-up at the origin: on the finest sampled decade, halving the radius
    # must increase g
    fine = radii[radii <= radii[0] * 10.0]
    g_fine = evaluate(spec, fine)
    g_double = evaluate(spec, 2.0 * fine)
    gaps = g_fine - g_double
    worst_idx = int(np.argmin(gaps))
    checks["origin_blowup"] = CheckResult(
        bool(np.all(gaps > 0.0)), None,
        {"r": float(fine[worst_idx]), "g(r)-g(2r)": float(gaps[worst_idx])},
    )

    # superharmonicity in the effective dimension
    dim_eff = spec.d + spec.m
    lap = radial_laplacian(spec, radii, dim_eff)
    scale = np.maximum(1.0, np.abs(radii**2 * radial_chain(spec, radii, 2)))
    worst_idx = int(np.argmax(lap / scale))
    checks["superharmonic"] = CheckResult(
        bool(np.all(lap <= 1e-9 * scale)), None,
        {"dim": dim_eff, "r": float(radii[worst_idx]), "laplacian": float(lap[worst_idx])},
    )

    # derivative growth (fitted constants; the envelope shape fails if the
    # fitted constant keeps growing as r -> 0)
    split = n_r // 3
    for k in range(5):
        mags = np.empty(n_r)
        for i, r in enumerate(radii):
            u = rng.standard_normal(spec.d)
            u /= np.linalg.norm(u)
            if k == 0:
                mags[i] = abs(float(evaluate(spec, np.array([r]))[0]))
            else:
                mags[i] = float(np.sqrt(np.sum(derivative_tensor(spec, r * u, k) ** 2)))
        env = radii ** (-spec.s - k)
        if spec.s == 0.0 and k == 0:
            env = env + np.abs(np.log(radii))
        ratio = mags / env
        c_fit = float(np.max(ratio))
        inner = float(np.max(ratio[:split]))
        outer = float(np.max(ratio[split:]))
        ok = np.isfinite(c_fit) and inner <= 5.0 * max(outer, 1e-300)
        worst_idx = int(np.argmax(ratio))
        checks[f"derivative_growth_k{k}"] = CheckResult(
            bool(ok), c_fit, {"r": float(radii[worst_idx]), "ratio": float(ratio[worst_idx])}
        )

    # |x||grad g| + |x|^2|grad^2 g| <= C g inside B(0, r0)
    in_r0 = radii[radii < min(spec.r0, rmax)]
    g_vals = evaluate(spec, in_r0)
    d1 = np.abs(in_r0 * radial_derivatives(spec, in_r0, 1)[1])
    # second derivative tensor magnitude along a direction: radial formula
    mags2 = np.array([
        float(np.sqrt(np.sum(derivative_tensor(spec, r * np.eye(spec.d)[0], 2) ** 2)))
        for r in in_r0
    ])
    lhs = d1 + in_r0**2 * mags2
    if np.any(g_vals <= 0.0):
        bad = int(np.argmax(g_vals <= 0.0))
        checks["pointwise_domination"] = CheckResult(
            False, None, {"r": float(in_r0[bad]), "g": float(g_vals[bad])}
        )
    else:
        ratio = lhs / g_vals
        c_fit = float(np.max(ratio))
        inner = float(np.max(ratio[: len(ratio) // 3]))
        outer = float(np.max(ratio[len(ratio) // 3:]))
        worst_idx = int(np.argmax(ratio))
        checks["pointwise_domination"] = CheckResult(
            bool(np.isfinite(c_fit) and inner <= 5.0 * max(outer, 1e-300)), c_fit,
            {"r": float(in_r0[worst_idx]), "ratio": float(ratio[worst_idx])},
        )

    # doubling: pairs r' >= 2r inside B(0, r0)
    r_small = radii[radii <= min(spec.r0, rmax) / 2.0]
    if spec.s > 0.0:
        ratios = []
        for r in r_small[:: max(1, len(r_small) // 64)]:
            rp = radii[radii >= 2.0 * r]
            rp = rp[rp < min(spec.r0, rmax)]
            if len(rp) == 0:
                continue
            ratios.append((float(np.max(evaluate(spec, rp) / evaluate(spec, np.array([r]))[0])), float(r)))
        c_fit = max(v for v, _ in ratios)
        worst_r = [r for v, r in ratios if v == c_fit][0]
        checks["doubling"] = CheckResult(c_fit < 1.0, c_fit, {"r": worst_r, "ratio": c_fit})
    else:
        gaps = []
        for r in r_small[:: max(1, len(r_small) // 64)]:
            rp = radii[radii >= 2.0 * r]
            rp = rp[rp < min(spec.r0, rmax)]
            if len(rp) == 0:
                continue
            gaps.append((float(np.min(evaluate(spec, np.array([r]))[0] - evaluate(spec, rp))), float(r)))
        c_fit = min(v for v, _ in gaps)
        worst_r = [r for v, r in gaps if v == c_fit][0]
        checks["doubling"] = CheckResult(c_fit > 0.0, c_fit, {"r": worst_r, "gap": c_fit})

    return AdmissibilityReport(spec, checks)
