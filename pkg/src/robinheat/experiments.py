"""Reusable numerical studies shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BoundEnvelope, DecayFit, distance, expected_slope, fit_constants, fit_decay
from .grid import Boundary, DomainSpec, build_grid, truncation_time_budget
from .heat import build_engine
from .potentials import critical_potential, u_sigma_1d, u_sigma_2d

POTENTIAL_CHOICES = ("u_sigma", "critical", "none")

# points and pairs used for envelope validation; 2D points are (radius, angle)
PAIRS_2D = (((2.0, 0.0), (2.0, 0.0)), ((3.0, 0.0), (3.0, 0.0)), ((5.0, 0.0), (5.0, 0.0)),
            ((10.0, 0.0), (10.0, 0.0)), ((2.0, 0.0), (3.0, 1.0)), ((2.0, 0.0), (5.0, 2.0)),
            ((3.0, 0.0), (10.0, math.pi)), ((5.0, 0.0), (5.0, math.pi / 2)))
PAIRS_1D = ((0.0, 0.0), (1.0, 1.0), (3.0, 3.0), (10.0, 10.0), (0.0, 1.0), (1.0, 3.0), (0.0, 10.0), (3.0, 10.0))


def make_domain(dimension: int, boundary: str = "robin", sigma0: float = 1.0, rho: float = 1.0) -> DomainSpec:
    if boundary == "robin":
        bc = Boundary.robin(sigma0)
    elif boundary == "dirichlet":
        bc = Boundary.dirichlet()
    elif boundary == "neumann":
        bc = Boundary.neumann()
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    if dimension == 1:
        return DomainSpec.half_line(bc)
    return DomainSpec.ball_exterior(dimension, rho, bc)


def reference_potential(domain: DomainSpec, lam: float, choice: str = "u_sigma"):
    """U_sigma (literal), the critical potential of the exact transform, or nothing."""
    if choice not in POTENTIAL_CHOICES:
        raise ValueError(f"unknown potential choice {choice!r}")
    if choice == "none" or lam == 0 or domain.boundary.kind != "robin" or domain.dimension == 3:
        return None
    if choice == "critical":
        return critical_potential(domain, lam)
    if domain.dimension == 1:
        return u_sigma_1d(domain.boundary.sigma0)
    return u_sigma_2d(domain.rho, domain.boundary.sigma0)


@dataclass
class DecayStudy:
    times: np.ndarray
    values: np.ndarray
    fit: DecayFit
    expected: float
    t_safe: float

    @property
    def deviation(self) -> float:
        return self.fit.slope - self.expected

    def to_dict(self) -> dict:
        d = self.fit.to_dict()
        d.update(expected=self.expected, deviation=self.deviation, t_safe=self.t_safe)
        return d


def diagonal_decay(lam: float = 0.0, boundary: str = "robin", dimension: int = 2, radius: float = 2.0,
                   r_max: float = 1e5, n: int = 8192, t_min: float = 1e3, t_max: float = 1e7,
                   count: int = 41, potential: str = "u_sigma", sigma0: float = 1.0, max_mode: int = 1,
                   min_decades: float = 3.0) -> DecayStudy:
    """On-diagonal kernel sweep at |x| = radius and its decay regression.

    The sweep stops at the wall-safe time when that comes first.
    """
    domain = make_domain(dimension, boundary, sigma0)
    grid = build_grid(domain, r_max, n)
    t_safe = truncation_time_budget(grid)
    t_hi = min(t_max, t_safe)
    times = np.geomspace(t_min, t_hi, count)
    engine = build_engine(domain, grid, reference_potential(domain, lam, potential), lam, max_mode,
                          radii=[radius], check=False)
    values = engine.diagonal(times, radius)
    kind, slope = expected_slope(dimension, lam, "robin" if boundary == "robin" else boundary)
    fit = fit_decay((times, values), kind, min_decades)
    return DecayStudy(times, values, fit, slope, t_safe)


def envelope_samples(dimension: int, lam: float, potential: str = "u_sigma", n: int = 2048,
                     r_max: float = 1e5, t_min: float = 10.0, t_max: float = 1e7, count: int = 48,
                     max_mode: int = 30, sigma0: float = 1.0, gauss_cutoff: float = 20.0):
    """Kernel samples on a log-uniform t-sweep over fixed on- and off-diagonal pairs.

    Off-diagonal pairs enter only while |x-y|^2/t <= gauss_cutoff, where the
    mode sum still resolves the Gaussian factor above roundoff.
    """
    domain = make_domain(dimension, "robin", sigma0)
    grid = build_grid(domain, r_max, n)
    pairs = PAIRS_1D if dimension == 1 else PAIRS_2D
    radii = sorted({(p if dimension == 1 else p[0]) for pr in pairs for p in pr})
    engine = build_engine(domain, grid, reference_potential(domain, lam, potential), lam,
                          max_mode if dimension > 1 else 0, radii=radii, check=False)
    times = np.geomspace(t_min, min(t_max, engine.t_safe), count)
    out = []
    for t in times:
        for x, y in pairs:
            d = abs(x - y) if dimension == 1 else distance(x, y)
            if d * d / t <= gauss_cutoff:
                out.append(engine.kernel(float(t), x, y))
    return out


def validate_envelopes(samples, kind: str, lam: float, exponent: float | None = None,
                       sides=("upper", "lower"), calibration_fraction: float = 0.5) -> dict:
    return {side: fit_constants(BoundEnvelope(kind, lam=lam, side=side, exponent=exponent), samples,
                                calibration_fraction)
            for side in sides}
