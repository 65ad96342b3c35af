"""Particle containers, seeded generators and CSV I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

AXES = ("x", "y", "z")


class Particle(NamedTuple):
    id: int
    position: tuple
    mass: float


@dataclass(frozen=True)
class ParticleSet:
    """Struct-of-arrays particle state.

    ``positions`` has shape (N, d) with d in {2, 3}; ids are dense 0..N-1.
    """

    positions: np.ndarray
    mass: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ValueError(f"positions must have shape (N, 2|3), got {pos.shape}")
        mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if mass.shape != (pos.shape[0],) or ids.shape != (pos.shape[0],):
            raise ValueError("mass and ids must be 1-D with one entry per particle")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_arrays(cls, positions, mass=None) -> "ParticleSet":
        positions = np.asarray(positions, dtype=np.float64)
        n = positions.shape[0]
        if mass is None:
            mass = np.ones(n)
        return cls(positions, np.asarray(mass, dtype=np.float64), np.arange(n))

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> Particle:
        return Particle(int(self.ids[i]), tuple(self.positions[i]), float(self.mass[i]))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def take(self, order: np.ndarray) -> "ParticleSet":
        """Reorder; ids travel with their particles."""
        return ParticleSet(self.positions[order], self.mass[order], self.ids[order])


def uniform_random(n: int, dim: int = 3, seed: int = 0) -> ParticleSet:
    rng = np.random.default_rng(seed)
    pos = rng.random((n, dim))
    return ParticleSet.from_arrays(pos, _masses(rng, n))


def _masses(rng, n: int) -> np.ndarray:
    # weights in [0.5, 1.5), scaled to unit total mass
    w = rng.uniform(0.5, 1.5, n)
    return w / w.sum()


def plummer(n: int, dim: int = 3, seed: int = 0, scale: float = 0.08,
            center=None) -> ParticleSet:
    """Plummer-like clustered cloud, resampled until every point lies in [0, 1)^d."""
    rng = np.random.default_rng(seed)
    center = np.full(dim, 0.5) if center is None else np.asarray(center, dtype=float)
    out = np.empty((0, dim))
    while out.shape[0] < n:
        m = 2 * (n - out.shape[0]) + 16
        # inverse CDF of the Plummer cumulative mass profile
        u = rng.uniform(1e-6, 1.0 - 1e-6, m)
        r = scale / np.sqrt(u ** (-2.0 / 3.0) - 1.0)
        direction = rng.normal(size=(m, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        pts = center + r[:, None] * direction
        keep = np.all((pts >= 0.0) & (pts < 1.0), axis=1)
        out = np.vstack([out, pts[keep]])
    return ParticleSet.from_arrays(out[:n], _masses(rng, n))


def generate(kind: str, n: int, dim: int = 3, seed: int = 0) -> ParticleSet:
    if kind == "uniform":
        return uniform_random(n, dim, seed)
    if kind == "plummer":
        return plummer(n, dim, seed)
    raise ValueError(f"unknown particle generator {kind!r} (expected 'uniform' or 'plummer')")


def jitter(particles: ParticleSet, amplitude: float, seed: int) -> ParticleSet:
    """Random displacement wrapped back into the unit box; stands in for one time step."""
    rng = np.random.default_rng(seed)
    pos = particles.positions + rng.normal(scale=amplitude, size=particles.positions.shape)
    pos = np.mod(pos, 1.0)
    pos[pos >= 1.0] = 0.0
    return ParticleSet(pos, particles.mass.copy(), particles.ids.copy())


def write_csv(particles: ParticleSet, path) -> None:
    axes = AXES[: particles.dim]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *axes, "mass"])
        for i in range(len(particles)):
            w.writerow([int(particles.ids[i]), *(repr(float(v)) for v in particles.positions[i]),
                        repr(float(particles.mass[i]))])


def read_csv(path) -> ParticleSet:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no particles")
    axes = [a for a in AXES if a in rows[0]]
    if axes not in (["x", "y"], ["x", "y", "z"]):
        raise ValueError(f"{path}: header must be id,x,y[,z],mass")
    ids = np.array([int(r["id"]) for r in rows])
    if not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise ValueError(f"{path}: ids must be unique and contiguous from 0")
    order = np.argsort(ids)
    pos = np.array([[float(r[a]) for a in axes] for r in rows])[order]
    mass = np.array([float(r["mass"]) for r in rows])[order]
    return ParticleSet(pos, mass, ids[order])
