"""Reference potentials, test potentials and ground-state weights.

All objects are radial: they are called with the radial coordinate
(|x| in d >= 2, x itself on the half-line) and accept numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_CAP = 1e12


class SingularPotentialError(ValueError):
    pass


def canonical_parameters(lam: float, rho: float, sigma0: float) -> tuple[float, float]:
    """Weight exponent and log-shift that make the ground-state transform exact."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda={lam} outside [0, 1]; the form is not positive for lambda > 1")
    if rho <= 0 or sigma0 <= 0:
        raise ValueError("rho and sigma0 must be positive")
    root = math.sqrt(1.0 - lam)
    return (1.0 + root) / 2.0, (1.0 + root) / (2.0 * rho * sigma0)


def decay_exponent(lam: float) -> float:
    """1 + sqrt(1 - lambda): power of the logarithm in the large-time decay."""
    return 1.0 + math.sqrt(1.0 - lam)


@dataclass(frozen=True)
class LogInverseSquare:
    """(1/(4 r^2)) (log(r/rho) + shift)^-2 on r >= rho.

    With shift = 0 the potential blows up at r = rho; values there are
    replaced by ``cap`` when ``clamp`` is requested (assembly only).
    """

    rho: float
    shift: float
    kind: str = "log_inverse_square"
    cap: float = DEFAULT_CAP

    def __call__(self, r, clamp: bool = False):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.rho * (1 - 1e-14)):
            raise ValueError("potential evaluated inside the obstacle")
        log_term = np.log(np.maximum(r, self.rho) / self.rho) + self.shift
        with np.errstate(divide="ignore"):
            out = 1.0 / (4.0 * r**2 * log_term**2)
        bad = ~np.isfinite(out) | (out > self.cap)
        if np.any(bad):
            if not clamp:
                raise SingularPotentialError("log term vanishes at |x| = rho")
            out = np.where(bad, self.cap, out)
        return out


@dataclass(frozen=True)
class InverseSquare1D:
    """(1/4) (x + shift)^-2 on the half-line."""

    shift: float
    kind: str = "inverse_square_1d"

    def __call__(self, x, clamp: bool = False):
        x = np.asarray(x, dtype=float)
        return 0.25 / (x + self.shift) ** 2


@dataclass(frozen=True)
class Indicator:
    """a on [r1, r2], zero elsewhere."""

    a: float
    r1: float
    r2: float
    kind: str = "indicator"

    def __call__(self, r, clamp: bool = False):
        r = np.asarray(r, dtype=float)
        return np.where((r >= self.r1) & (r <= self.r2), self.a, 0.0)

    def scaled(self, factor: float) -> "Indicator":
        return Indicator(self.a * factor, self.r1, self.r2)


@dataclass(frozen=True)
class Zero:
    kind: str = "zero"

    def __call__(self, r, clamp: bool = False):
        return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear interpolation of values given on nodes ``r``."""

    r: np.ndarray
    values: np.ndarray
    kind: str = "tabulated"

    def __call__(self, x, clamp: bool = False):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.r[0] - 1e-12) or np.any(x > self.r[-1] + 1e-12):
            raise ValueError("tabulated potential evaluated outside its table")
        return np.interp(x, self.r, self.values)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        order = np.argsort(data[:, 0])
        return cls(data[order, 0], data[order, 1])


@dataclass(frozen=True)
class Scaled:
    base: object
    factor: float
    kind: str = "scaled"

    def __call__(self, r, clamp: bool = False):
        return self.factor * self.base(r, clamp=clamp)


@dataclass(frozen=True)
class Sum:
    terms: tuple
    kind: str = "sum"

    def __call__(self, r, clamp: bool = False):
        out = np.zeros_like(np.asarray(r, dtype=float))
        for term in self.terms:
            out = out + term(r, clamp=clamp)
        return out


def u_sigma_2d(rho: float, sigma0: float) -> LogInverseSquare:
    if sigma0 <= 0:
        raise ValueError("sigma0 must be positive")
    return LogInverseSquare(rho, 1.0 / (rho * sigma0), kind="u_sigma_2d")


def u_infty_2d(rho: float, cap: float = DEFAULT_CAP) -> LogInverseSquare:
    return LogInverseSquare(rho, 0.0, kind="u_infty_2d", cap=cap)


def u_sigma_1d(sigma: float) -> InverseSquare1D:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return InverseSquare1D(1.0 / sigma, kind="u_sigma_1d")


def hardy_weight(rho: float, sigma0: float) -> LogInverseSquare:
    """Weight of the Robin Hardy inequality: shift 1/(2 rho sigma0), half that of U_sigma.

    ``sigma0 = inf`` gives the Dirichlet weight (1/(4 r^2)) log(r/rho)^-2.
    """
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    shift = 0.0 if math.isinf(sigma0) else 1.0 / (2.0 * rho * sigma0)
    return LogInverseSquare(rho, shift, kind="hardy_weight")


def critical_potential(domain, lam: float) -> LogInverseSquare | InverseSquare1D:
    """Potential for which the ground-state transform with canonical weight is exact.

    Its log-shift equals the weight shift beta = alpha/(rho sigma0), which
    coincides with U_sigma only at lambda = 0 (where the potential drops out).
    """
    sigma = domain.boundary.sigma0
    if domain.dimension == 1:
        alpha, _ = canonical_parameters(lam, 1.0, sigma)
        return InverseSquare1D(alpha / sigma, kind="critical_1d")
    if domain.dimension != 2:
        raise ValueError("ground-state transform is only available for d = 1, 2")
    _, beta = canonical_parameters(lam, domain.rho, sigma)
    return LogInverseSquare(domain.rho, beta, kind="critical_2d")


def eval_potential(spec, x):
    return spec(x)


@dataclass(frozen=True)
class LogWeight2D:
    """w(r) = (log(r/rho) + beta)^alpha."""

    alpha: float
    beta: float
    rho: float
    dimension: int = 2

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return (np.log(r / self.rho) + self.beta) ** self.alpha

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.alpha == 0:
            return np.zeros_like(r)
        return self.alpha * (np.log(r / self.rho) + self.beta) ** (self.alpha - 1) / r


@dataclass(frozen=True)
class AffineWeight1D:
    """omega(x) = (x + shift)^alpha; the canonical shift is alpha/sigma."""

    alpha: float
    shift: float
    dimension: int = 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x + self.shift) ** self.alpha

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.alpha == 0:
            return np.zeros_like(x)
        return self.alpha * (x + self.shift) ** (self.alpha - 1)

    @classmethod
    def canonical(cls, alpha: float, sigma: float) -> "AffineWeight1D":
        return cls(alpha, alpha / sigma)


def canonical_weight(domain, lam: float):
    sigma = domain.boundary.sigma0
    if domain.boundary.kind != "robin" or sigma <= 0:
        raise ValueError("canonical weight needs a Robin boundary with sigma0 > 0")
    if domain.dimension == 1:
        alpha, _ = canonical_parameters(lam, 1.0, sigma)
        return AffineWeight1D.canonical(alpha, sigma)
    if domain.dimension == 2:
        alpha, beta = canonical_parameters(lam, domain.rho, sigma)
        return LogWeight2D(alpha, beta, domain.rho)
    raise ValueError("no ground-state weight for d >= 3")


def eval_weight(spec, x):
    return spec(x)
