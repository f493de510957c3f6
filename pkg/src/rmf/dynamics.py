"""Particle dynamics: deterministic RK4, Stratonovich transport noise,
conservation monitors and collision guards.

Brownian increments come from counter-based Philox streams keyed by
(seed, field index, step) so coupled particle/PDE runs and parallel
replicas see identical noise regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import pairwise
from .energy import Configuration
from .field import PeriodicGrid
from .potential import PotentialSpec


class CollisionError(RuntimeError):
    """A pair distance fell below the collision floor mid-integration."""


@dataclass(frozen=True)
class FlowMatrix:
    """d x d matrix with nonpositive symmetric part: <M xi, xi> <= 0."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("flow matrix must be square")
        sym = 0.5 * (m + m.T)
        top = float(np.max(np.linalg.eigvalsh(sym)))
        if top > 1e-12 * max(1.0, float(np.max(np.abs(m)))):
            raise ValueError(f"<M xi, xi> <= 0 fails: top symmetric eigenvalue {top}")

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def gradient(cls, d: int) -> "FlowMatrix":
        return cls(-np.eye(d))

    @classmethod
    def hamiltonian_2d(cls) -> "FlowMatrix":
        return cls(np.array([[0.0, -1.0], [1.0, 0.0]]))

    @classmethod
    def mixed(cls, theta: float) -> "FlowMatrix":
        j = np.array([[0.0, -1.0], [1.0, 0.0]])
        return cls(math.cos(theta) * (-np.eye(2)) + math.sin(theta) * j)

    def is_antisymmetric(self) -> bool:
        return bool(np.allclose(self.matrix, -self.matrix.T, atol=1e-14))


# --------------------------------------------------------------------------
# noise model


@dataclass
class NoiseField:
    """One smooth vector field with finite Fourier support:
    sigma(x) = amplitude * direction * cos(k.x + phase)."""

    wavevector: np.ndarray   # (d,), integer multiples of 2 pi / L
    direction: np.ndarray    # (d,), unit
    amplitude: float
    phase: float

    def at(self, points: np.ndarray) -> np.ndarray:
        arg = points @ self.wavevector + self.phase
        return self.amplitude * np.cos(arg)[:, None] * self.direction[None, :]

    def gradient_at(self, points: np.ndarray) -> np.ndarray:
        """grad sigma, shape (N, d, d) with [n, a, b] = d_b sigma_a."""
        arg = points @ self.wavevector + self.phase
        return (-self.amplitude * np.sin(arg)[:, None, None]
                * self.direction[None, :, None] * self.wavevector[None, None, :])

    def divergence_amplitude(self) -> float:
        return abs(float(self.direction @ self.wavevector)) * self.amplitude


@dataclass
class NoiseModel:
    """Finite family of smooth transport-noise fields with one Brownian
    driver each.  dt is the increment resolution: runs must step at exactly
    this dt (sub-stepping would desynchronize the coupled systems)."""

    fields: list
    seed: int
    dt: float | None = None

    @property
    def k_count(self) -> int:
        return len(self.fields)

    @classmethod
    def default_div_free(cls, k: int, length: float, seed: int,
                         amplitude: float = 0.2, dt: float | None = None) -> "NoiseModel":
        """K divergence-free fields in d = 2: sigma = A * k_perp/|k| cos(k.x + phi)."""
        rng = np.random.Generator(np.random.Philox(key=seed))
        base = 2.0 * math.pi / length
        fields = []
        modes = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (-1, 2)]
        for i in range(k):
            m = np.array(modes[i % len(modes)], dtype=float) * base
            perp = np.array([-m[1], m[0]])
            perp /= np.linalg.norm(perp)
            fields.append(NoiseField(m, perp, amplitude,
                                     float(rng.uniform(0.0, 2.0 * math.pi))))
        return cls(fields=fields, seed=seed, dt=dt)

    def sigma_at(self, points: np.ndarray) -> np.ndarray:
        """(K, N, d) field values at the particles."""
        return np.stack([f.at(points) for f in self.fields])

    def sigma_grad_sigma_at(self, points: np.ndarray) -> np.ndarray:
        """(K, N, d): (sigma_k . grad) sigma_k at the particles, analytic."""
        out = []
        for f in self.fields:
            s = f.at(points)
            g = f.gradient_at(points)
            out.append(np.einsum("nab,nb->na", g, s))
        return np.stack(out)

    def sigma_on_grid(self, grid: PeriodicGrid) -> np.ndarray:
        """(K, d, *shape) sampled fields."""
        mesh = grid.meshgrid()
        pts_shape = mesh[0].shape
        pts = np.column_stack([m.ravel() for m in mesh])
        out = self.sigma_at(pts)  # (K, n^d, d)
        return out.transpose(0, 2, 1).reshape(self.k_count, grid.d, *pts_shape)

    def max_divergence(self) -> float:
        return max((f.divergence_amplitude() for f in self.fields), default=0.0)


def brownian_increments(seed: int, step: int, k_count: int, dt: float) -> np.ndarray:
    """dW_k for one step: independent N(0, dt), one per retained field, from a
    Philox stream keyed by (seed, k, step)."""
    out = np.empty(k_count)
    for k in range(k_count):
        gen = np.random.Generator(
            np.random.Philox(key=seed, counter=[0, 0, k, step]))
        out[k] = gen.standard_normal() * math.sqrt(dt)
    return out


# --------------------------------------------------------------------------
# drift and steppers


def drift(config: Configuration, flow: FlowMatrix, spec: PotentialSpec,
          collision_floor: float | None = None) -> np.ndarray:
    """ (1/N) sum_{j != i} M grad g(x_i - x_j), minimum image; aborts when a
    pair is below the collision floor (default 1e-9 L)."""
    floor = collision_floor if collision_floor is not None else 1e-9 * config.length
    md = config.min_distance()
    if md <= floor:
        raise CollisionError(f"min pair distance {md:.3e} at or below floor {floor:.3e}")
    forces = pairwise.pair_force_sum(config.points, config.length, spec)
    return (forces / config.n) @ flow.matrix.T


def _drift_raw(points: np.ndarray, length: float, flow: FlowMatrix,
               spec: PotentialSpec, floor: float) -> np.ndarray:
    md = pairwise.min_pair_distance(points, length)
    if md <= floor:
        raise CollisionError(f"min pair distance {md:.3e} at or below floor {floor:.3e}")
    forces = pairwise.pair_force_sum(points, length, spec)
    return (forces / points.shape[0]) @ flow.matrix.T


def step_deterministic(config: Configuration, flow: FlowMatrix, spec: PotentialSpec,
                       dt: float, scheme: str = "rk4",
                       collision_floor: float | None = None) -> Configuration:
    """One fixed step of the deterministic system; positions wrap to the box."""
    if dt == 0.0:
        return Configuration(config.points.copy(), config.length)
    floor = collision_floor if collision_floor is not None else 1e-9 * config.length
    x = config.points
    length = config.length
    if scheme == "rk4":
        k1 = _drift_raw(x, length, flow, spec, floor)
        k2 = _drift_raw(x + 0.5 * dt * k1, length, flow, spec, floor)
        k3 = _drift_raw(x + 0.5 * dt * k2, length, flow, spec, floor)
        k4 = _drift_raw(x + dt * k3, length, flow, spec, floor)
        new = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    elif scheme == "heun":
        k1 = _drift_raw(x, length, flow, spec, floor)
        k2 = _drift_raw(x + dt * k1, length, flow, spec, floor)
        new = x + 0.5 * dt * (k1 + k2)
    elif scheme == "euler":
        new = x + dt * _drift_raw(x, length, flow, spec, floor)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return Configuration(new, length)


def step_stratonovich(config: Configuration, flow: FlowMatrix, spec: PotentialSpec,
                      noise: NoiseModel, dt: float, dw: np.ndarray,
                      method: str = "heun",
                      collision_floor: float | None = None) -> Configuration:
    """One step of the transport-noise system on externally supplied Brownian
    increments dw (shape (K,), shared with the coupled SPDE).

    method="heun": Stratonovich predictor-corrector (drift and diffusion
    coefficients both averaged).  method="ito": Euler-Maruyama plus the
    explicit (1/2) sigma.grad sigma dt correction.  The two agree to strong
    order dt^(3/2) on shared increments.
    """
    floor = collision_floor if collision_floor is not None else 1e-9 * config.length
    x = config.points
    length = config.length
    if noise.k_count == 0:
        noise_term = 0.0
    else:
        noise_term = np.einsum("k,knd->nd", dw, noise.sigma_at(x))
    a1 = _drift_raw(x, length, flow, spec, floor)
    if method == "ito":
        new = x + dt * a1 + noise_term
        if noise.k_count:
            corr = noise.sigma_grad_sigma_at(x).sum(axis=0)
            new = new + 0.5 * dt * corr
    elif method == "heun":
        pred = x + dt * a1 + noise_term
        a2 = _drift_raw(pred, length, flow, spec, floor)
        if noise.k_count:
            noise_term2 = np.einsum("k,knd->nd", dw, noise.sigma_at(pred))
            new = x + 0.5 * dt * (a1 + a2) + 0.5 * (noise_term + noise_term2)
        else:
            new = x + 0.5 * dt * (a1 + a2)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Configuration(new, length)


def interaction_energy(config: Configuration, spec: PotentialSpec) -> float:
    """H_N = N^-2 sum_{i != j} g(x_i - x_j), the pair part of the modulated
    energy, used as the conservation/dissipation monitor."""
    return pairwise.pair_energy_sum(config.points, config.length, spec) / config.n**2


@dataclass
class Trajectory:
    times: list = dc_field(default_factory=list)
    configs: list = dc_field(default_factory=list)
    energies: list = dc_field(default_factory=list)
    min_dists: list = dc_field(default_factory=list)

    def record(self, t: float, config: Configuration, spec: PotentialSpec):
        self.times.append(t)
        self.configs.append(config)
        self.energies.append(interaction_energy(config, spec))
        self.min_dists.append(config.min_distance())


def simulate(config: Configuration, flow: FlowMatrix, spec: PotentialSpec,
             t_final: float, dt: float, snapshot_stride: int = 1,
             noise: NoiseModel | None = None, seed: int | None = None,
             collision_floor: float | None = None) -> Trajectory:
    """Advance to t_final with fixed steps, recording monitors every
    snapshot_stride steps (plus the initial and final states)."""
    n_steps = int(round(t_final / dt))
    traj = Trajectory()
    traj.record(0.0, config, spec)
    current = config
    for step in range(n_steps):
        if noise is None:
            current = step_deterministic(current, flow, spec, dt,
                                         collision_floor=collision_floor)
        else:
            dw = brownian_increments(noise.seed if seed is None else seed,
                                     step, noise.k_count, dt)
            current = step_stratonovich(current, flow, spec, noise, dt, dw,
                                        collision_floor=collision_floor)
        if (step + 1) % snapshot_stride == 0 or step == n_steps - 1:
            traj.record((step + 1) * dt, current, spec)
    return traj
