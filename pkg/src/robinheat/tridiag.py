"""Symmetric tridiagonal matrices: the band structure of every P1 radial form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SymTridiag:
    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.diag, dtype=float)
        e = np.ascontiguousarray(self.off, dtype=float)
        if e.size != max(d.size - 1, 0):
            raise ValueError("off-diagonal must have n-1 entries")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", e)

    @classmethod
    def zeros(cls, n: int) -> "SymTridiag":
        return cls(np.zeros(n), np.zeros(max(n - 1, 0)))

    @classmethod
    def diagonal(cls, values) -> "SymTridiag":
        values = np.asarray(values, dtype=float)
        return cls(values, np.zeros(max(values.size - 1, 0)))

    @property
    def n(self) -> int:
        return self.diag.size

    def __add__(self, other: "SymTridiag") -> "SymTridiag":
        return SymTridiag(self.diag + other.diag, self.off + other.off)

    def __sub__(self, other: "SymTridiag") -> "SymTridiag":
        return SymTridiag(self.diag - other.diag, self.off - other.off)

    def __mul__(self, scalar: float) -> "SymTridiag":
        return SymTridiag(self.diag * scalar, self.off * scalar)

    __rmul__ = __mul__

    def congruence(self, d) -> "SymTridiag":
        """D A D for the diagonal matrix D = diag(d)."""
        d = np.asarray(d, dtype=float)
        return SymTridiag(self.diag * d * d, self.off * d[:-1] * d[1:])

    def toarray(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.diag[:, None] * x if x.ndim == 2 else self.diag * x
        if self.n > 1:
            e = self.off[:, None] if x.ndim == 2 else self.off
            y[:-1] += e * x[1:]
            y[1:] += e * x[:-1]
        return y

    def quad(self, x) -> float:
        return float(np.dot(x, self.matvec(x)))

    def row_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[:-1] += self.off
        s[1:] += self.off
        return s

    def norm_inf(self) -> float:
        a = np.abs(self.diag).copy()
        a[:-1] += np.abs(self.off)
        a[1:] += np.abs(self.off)
        return float(a.max())

    def banded(self) -> np.ndarray:
        """Upper banded storage (2, n) as used by scipy.linalg.solveh_banded."""
        ab = np.zeros((2, self.n))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        return ab

    def to_text(self) -> str:
        """Plain banded text: header ``n bandwidth`` then one row per line (sub, diag, super)."""
        lines = [f"{self.n} 1"]
        for i in range(self.n):
            lo = self.off[i - 1] if i > 0 else 0.0
            hi = self.off[i] if i < self.n - 1 else 0.0
            lines.append(f"{lo:.17g} {self.diag[i]:.17g} {hi:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SymTridiag":
        rows = text.strip().splitlines()
        n, bw = (int(v) for v in rows[0].split())
        if bw != 1:
            raise ValueError("only bandwidth 1 is supported")
        data = np.array([[float(v) for v in r.split()] for r in rows[1:n + 1]])
        return cls(data[:, 1], data[:-1, 2])


def inertia(diag, off, tiny: float = 1e-300) -> int:
    """Number of negative eigenvalues of a symmetric tridiagonal matrix (Sylvester, LDL^T)."""
    d = np.asarray(diag, dtype=float).tolist()
    e2 = (np.asarray(off, dtype=float) ** 2).tolist()
    count = 0
    piv = d[0]
    if piv == 0.0:
        piv = -tiny
    if piv < 0:
        count += 1
    for i in range(1, len(d)):
        piv = d[i] - e2[i - 1] / piv
        if piv == 0.0:
            piv = -tiny
        if piv < 0:
            count += 1
    return count


def pencil_inertia(a: SymTridiag, b: SymTridiag, mu: float) -> int:
    """Number of generalized eigenvalues of (a, b) below mu, b positive definite."""
    return inertia(a.diag - mu * b.diag, a.off - mu * b.off)


def smallest_pencil_eigenvalue(a: SymTridiag, b: SymTridiag, lo: float, hi: float,
                               rtol: float = 1e-12) -> float:
    """Bisection on the Sturm count for the lowest eigenvalue of (a, b)."""
    while pencil_inertia(a, b, lo) > 0:
        lo = lo - 2.0 * max(abs(lo), 1.0)
    while pencil_inertia(a, b, hi) == 0:
        hi = hi + 2.0 * max(abs(hi), 1.0)
    while hi - lo > rtol * max(abs(lo), abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        if pencil_inertia(a, b, mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
