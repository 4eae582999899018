"""Exterior-of-a-ball domains, radial grids and angular mode sets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOUNDARY_KINDS = ("robin", "dirichlet", "neumann")
SPACINGS = ("log", "uniform", "graded", "boundary_log")
MIN_NODES = 64


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Boundary:
    kind: str
    sigma0: float = 0.0

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "robin" and not self.sigma0 >= 0:
            raise ValueError("robin coefficient must be nonnegative")
        if self.kind != "robin" and self.sigma0 != 0.0:
            raise ValueError(f"{self.kind} boundary takes no coefficient")

    @classmethod
    def robin(cls, sigma0: float) -> "Boundary":
        return cls("robin", float(sigma0))

    @classmethod
    def dirichlet(cls) -> "Boundary":
        return cls("dirichlet")

    @classmethod
    def neumann(cls) -> "Boundary":
        return cls("neumann")

    @property
    def sigma(self) -> float:
        """Coefficient entering the boundary term (0 for Neumann and Dirichlet)."""
        return self.sigma0 if self.kind == "robin" else 0.0

    def __str__(self):
        return f"robin({self.sigma0:g})" if self.kind == "robin" else self.kind


@dataclass(frozen=True)
class DomainSpec:
    """M = R^d minus the closed ball B(0, rho); for d=1 the half-line (0, inf)."""

    dimension: int
    rho: float
    boundary: Boundary

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.dimension == 1 and self.rho != 0:
            raise ValueError("the half-line has rho = 0")
        if self.dimension >= 2 and not self.rho > 0:
            raise ValueError("rho must be positive for d >= 2")

    @classmethod
    def half_line(cls, boundary: Boundary) -> "DomainSpec":
        return cls(1, 0.0, boundary)

    @classmethod
    def ball_exterior(cls, dimension: int, rho: float, boundary: Boundary) -> "DomainSpec":
        return cls(dimension, float(rho), boundary)

    def with_boundary(self, boundary: Boundary) -> "DomainSpec":
        return DomainSpec(self.dimension, self.rho, boundary)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    spacing_kind: str
    outer_bc: str = "dirichlet_at_rmax"

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise GridError("grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise GridError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# spacing={self.spacing_kind} outer_bc={self.outer_bc}\n")
            writer = csv.writer(fh)
            writer.writerow(["index", "r"])
            for i, r in enumerate(self.nodes):
                writer.writerow([i, repr(float(r))])

    @classmethod
    def from_csv(cls, path) -> "RadialGrid":
        spacing = "uniform"
        rows = []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    if key == "spacing":
                        spacing = value
                continue
            if line.startswith("index") or not line.strip():
                continue
            rows.append(float(line.split(",")[1]))
        return cls(np.array(rows), spacing)


def _log_nodes_from_zero(r_max: float, n: int) -> np.ndarray:
    # uniform on [0, 1] matched to the geometric ratio beyond 1
    def split(q):
        k = max(1, int(round(1.0 / (q - 1.0))))
        n_geo = n - k
        return k, n_geo

    lo, hi = 1.0 + 1e-9, 2.0
    for _ in range(200):
        q = 0.5 * (lo + hi)
        k, n_geo = split(q)
        if n_geo < 2:
            lo = q
            continue
        if (n_geo - 1) * math.log(q) > math.log(r_max):
            hi = q
        else:
            lo = q
    k, n_geo = split(hi)
    geo = np.geomspace(1.0, r_max, n_geo)
    uni = np.linspace(0.0, 1.0, k + 1)[:-1]
    return np.concatenate([uni, geo])


def _graded_nodes(r0: float, r_max: float, n: int, focus: float, h_min: float) -> np.ndarray:
    # geometric grading away from the focus point, at most 10% growth per cell
    left = focus - r0
    right = r_max - focus
    q = 1.1

    def side(length):
        out = [0.0]
        h = h_min
        while out[-1] + h < length:
            out.append(out[-1] + h)
            h *= q
        if length - out[-1] < 0.5 * h and len(out) > 1:
            out[-1] = length
        else:
            out.append(length)
        return np.array(out)

    lhs = focus - side(left)[::-1] if left > 0 else np.array([focus])
    rhs = focus + side(right)[1:]
    nodes = np.concatenate([lhs, rhs])
    nodes[0], nodes[-1] = r0, r_max
    if nodes.size > n:
        raise GridError(f"graded grid needs {nodes.size} nodes, more than n={n}")
    return nodes


def build_grid(domain: DomainSpec, r_max: float, n: int, spacing: str = "log",
               focus: float | None = None, h_min: float | None = None) -> RadialGrid:
    """Radial grid on [rho, r_max] (or [0, r_max] for the half-line) with ``n`` nodes.

    ``spacing='log'`` is geometric from the obstacle outward (with a uniform
    lead-in on [0, 1] for the half-line); ``'graded'`` refines geometrically
    around ``focus`` down to cell size ``h_min`` and is meant for short-time
    checks away from the boundary.  ``'boundary_log'`` is geometric in the
    distance to the obstacle, from ``h_min`` up to r_max - rho, and resolves
    boundary layers of supercritical potentials.
    """
    if spacing not in SPACINGS:
        raise GridError(f"unknown spacing {spacing!r}")
    r0 = domain.rho
    if not r_max > r0:
        raise GridError(f"r_max={r_max} must exceed the obstacle radius {r0}")
    if not r_max > 10.0 * max(r0, 1.0):
        raise GridError(f"r_max={r_max} must exceed 10*max(rho, 1)")
    if n < MIN_NODES:
        raise GridError(f"need at least {MIN_NODES} nodes, got {n}")

    if spacing == "uniform":
        nodes = np.linspace(r0, r_max, n)
    elif spacing == "log":
        nodes = np.geomspace(r0, r_max, n) if r0 > 0 else _log_nodes_from_zero(r_max, n)
    elif spacing == "boundary_log":
        if h_min is None or not h_min >= 1e-10 * max(r0, 1.0):
            raise GridError("boundary_log spacing needs h_min >= 1e-10*max(rho, 1)")
        nodes = np.concatenate([[r0], r0 + np.geomspace(h_min, r_max - r0, n - 1)])
    else:
        if focus is None or h_min is None:
            raise GridError("graded spacing needs focus and h_min")
        if not r0 < focus < r_max:
            raise GridError("focus must lie inside the grid")
        nodes = _graded_nodes(r0, r_max, n, focus, h_min)
    nodes[0] = r0
    nodes[-1] = r_max
    return RadialGrid(nodes, spacing)


def truncation_time_budget(grid: RadialGrid, tolerance: float = 1e-8, c: float = 4.0) -> float:
    """Largest t for which the wall at r_max is invisible at |x| <= r_max/4.

    Inverts the Gaussian tail exp(-(r_max/2)^2 / (c t)) = tolerance.
    """
    if not 0 < tolerance < 1:
        raise ValueError("tolerance must lie in (0, 1)")
    return (grid.r_max / 2.0) ** 2 / (c * math.log(1.0 / tolerance))


@dataclass(frozen=True)
class ModeSet:
    dimension: int
    max_mode: int
    modes: tuple = field(init=False)

    def __post_init__(self):
        if self.max_mode < 0:
            raise ValueError("max_mode must be nonnegative")
        top = 0 if self.dimension == 1 else self.max_mode
        object.__setattr__(self, "modes", tuple(range(top + 1)))

    def degeneracy(self, mode: int) -> int:
        if self.dimension == 1:
            return 1
        if self.dimension == 2:
            return 1 if mode == 0 else 2
        return 2 * mode + 1
