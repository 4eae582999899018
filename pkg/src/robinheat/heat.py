"""Heat kernels of the radial operators: spectral mode sums and a time-stepping cross-check.

The default mass matrix is the lumped (row-sum) one.  The pencil then reduces to
the symmetric tridiagonal matrix D^{-1/2} A D^{-1/2}, which LAPACK's MRRR
driver diagonalizes in O(n^2).  Large grids keep only the eigenvector rows
around the query radii, so every (t, x, y) query afterwards costs O(n).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special
from scipy.linalg import lapack

from .assembly import AssembledForm, AssemblyError, assemble, assemble_weighted
from .grid import DomainSpec, RadialGrid, truncation_time_budget
from .potentials import canonical_weight, critical_potential

MASS_KINDS = ("lumped", "consistent")
DENSE_LIMIT = 4096
_RESIDUAL_BLOCK = 512


class IndefiniteMassError(ValueError):
    """The mass matrix is not positive definite: a grid or assembly bug."""


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Mass-orthonormal eigenpairs of one radial mode.

    ``vectors[i, k]`` is the k-th eigenfunction at grid node ``rows[i]``;
    constrained nodes (the outer wall, a Dirichlet obstacle) carry zeros.
    """

    mode: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    rows: np.ndarray
    grid: RadialGrid
    dimension: int
    mass_kind: str
    residual: float = math.nan
    n_negative: int = 0

    def values_at(self, r: float) -> np.ndarray:
        """Eigenfunction values at radius r (linear interpolation between nodes)."""
        nodes = self.grid.nodes
        if not nodes[0] - 1e-12 * max(1.0, abs(nodes[0])) <= r <= nodes[-1]:
            raise KernelError(f"radius {r} outside the grid [{nodes[0]}, {nodes[-1]}]")
        i = int(np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, nodes.size - 2))
        theta = (r - nodes[i]) / (nodes[i + 1] - nodes[i])
        lo, hi = np.searchsorted(self.rows, [i, i + 1])
        if hi >= self.rows.size or self.rows[lo] != i or self.rows[hi] != i + 1:
            raise KernelError(f"radius {r} needs eigenvector rows {i}, {i + 1} that were not kept")
        return (1.0 - theta) * self.vectors[lo] + theta * self.vectors[hi]

    def mode_kernel(self, t, rx: float, ry: float) -> np.ndarray:
        """sum_k exp(-mu_k t) v_k(rx) v_k(ry) for an array of times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        prod = self.values_at(rx) * self.values_at(ry)
        return np.exp(-np.outer(t, self.eigenvalues)) @ prod


def _rows_for(grid: RadialGrid, radii) -> np.ndarray:
    nodes = grid.nodes
    rows = set()
    for r in radii:
        i = int(np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, nodes.size - 2))
        rows.update((i, i + 1))
    return np.array(sorted(rows), dtype=int)


def _generalized_residual(op, mass_diag, vals, z) -> float:
    # max_k ||(A - mu_k M) v_k||_{M^-1} / (|mu_k| + 1) computed in the symmetric frame
    s = 1.0 / np.sqrt(mass_diag)
    t = op.congruence(s)
    worst = 0.0
    for start in range(0, vals.size, _RESIDUAL_BLOCK):
        blk = z[:, start:start + _RESIDUAL_BLOCK]
        mu = vals[start:start + _RESIDUAL_BLOCK]
        res = np.linalg.norm(t.matvec(blk) - blk * mu, axis=0) / (np.abs(mu) + 1.0)
        worst = max(worst, float(res.max()))
    return worst


def eigensolve(form: AssembledForm, lam: float | None = None, mass: str = "lumped",
               radii=None, check: bool = True) -> EigenBasis:
    """Full generalized eigendecomposition of (stiffness + angular + boundary - lam P, mass).

    ``radii`` limits the stored eigenvector rows to the elements containing
    those radii; ``None`` keeps every node.  ``mass='consistent'`` uses a
    dense solver and is limited to small grids.
    """
    if mass not in MASS_KINDS:
        raise ValueError(f"unknown mass kind {mass!r}")
    op = form.operator(lam)
    n = form.n
    if mass == "lumped":
        m = form.lumped_mass
        if not np.all(m > 0):
            raise IndefiniteMassError("lumped mass has nonpositive entries")
        s = 1.0 / np.sqrt(m)
        t = op.congruence(s)
        e = np.zeros(n)
        e[:-1] = t.off
        _, vals, z, info = lapack.dstemr(t.diag, e, 0, 0.0, 0.0, 1, n)
        if info != 0:
            raise np.linalg.LinAlgError(f"dstemr failed with info={info}")
        residual = _generalized_residual(op, m, vals, z) if check else math.nan
        z *= s[:, None]
        vecs = z
    else:
        if n > DENSE_LIMIT:
            raise ValueError(f"consistent mass uses a dense solver; n={n} exceeds {DENSE_LIMIT}")
        mm = form.mass.toarray()
        try:
            np.linalg.cholesky(mm)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteMassError("consistent mass is not positive definite") from exc
        a = op.toarray()
        vals, vecs = linalg.eigh(a, mm)
        if check:
            r = a @ vecs - (mm @ vecs) * vals
            lmass = form.lumped_mass
            residual = float((np.sqrt(((r * r) / lmass[:, None]).sum(0)) / (np.abs(vals) + 1.0)).max())
        else:
            residual = math.nan

    full_n = form.grid.size
    rows = np.arange(full_n) if radii is None else _rows_for(form.grid, radii)
    pos = np.full(full_n, -1)
    pos[form.free] = np.arange(n)
    out = np.zeros((rows.size, vals.size))
    keep = pos[rows] >= 0
    out[keep] = vecs[pos[rows[keep]]]
    del vecs
    return EigenBasis(form.mode, np.asarray(vals), out, rows, form.grid, form.domain.dimension,
                      mass, residual, int(np.sum(vals < 0)))


def _as_point(p, dim: int) -> tuple[float, float]:
    if dim == 1:
        if isinstance(p, (tuple, list, np.ndarray)):
            p = p[0]
        return float(p), 0.0
    if isinstance(p, (tuple, list, np.ndarray)):
        return float(p[0]), float(p[1]) if len(p) > 1 else 0.0
    return float(p), 0.0


def angular_factor(dim: int, mode: int, dtheta: float) -> float:
    """Weight of one radial mode in the kernel at angular separation dtheta."""
    if dim == 1:
        return 1.0
    if dim == 2:
        return (1.0 if mode == 0 else 2.0 * math.cos(mode * dtheta)) / (2.0 * math.pi)
    return (2 * mode + 1) / (4.0 * math.pi) * float(special.eval_legendre(mode, math.cos(dtheta)))


def free_mode_kernel(dim: int, mode: int, t, rx: float, ry: float):
    """Radial kernel of one angular mode for the free Laplacian in R^d (d = 2, 3)."""
    t = np.asarray(t, dtype=float)
    z = rx * ry / (2.0 * t)
    gauss = np.exp(-(rx - ry) ** 2 / (4.0 * t)) / (2.0 * t)
    if dim == 2:
        return gauss * special.ive(mode, z)
    if dim == 3:
        return gauss * special.ive(mode + 0.5, z) / math.sqrt(rx * ry)
    raise ValueError("free mode kernels are defined for d = 2, 3")


def free_tail(dim: int, max_mode: int, t: float, rx: float, ry: float, tol: float = 1e-16) -> float:
    """Bound on the free-kernel contribution of all modes above max_mode (|angular factor| <= degeneracy)."""
    if dim == 1:
        return 0.0
    total = 0.0
    m = max_mode + 1
    while True:
        deg = (2.0 / (2 * math.pi)) if dim == 2 else (2 * m + 1) / (4 * math.pi)
        term = deg * float(free_mode_kernel(dim, m, t, rx, ry))
        total += term
        if term <= tol * max(total, 1e-300) or m > max_mode + 100000:
            return total
        m += 1


def free_kernel(dim: int, t: float, dist: float) -> float:
    return (4.0 * math.pi * t) ** (-dim / 2.0) * math.exp(-dist * dist / (4.0 * t))


def default_mode_cap(dim: int, t: float, rx: float, ry: float, tol: float = 1e-8) -> int:
    """Smallest M whose free-kernel angular tail is below tol relative to the free diagonal."""
    if dim == 1:
        return 0
    scale = free_kernel(dim, t, 0.0)
    m = 0
    while free_tail(dim, m, t, rx, ry) > tol * scale:
        m += 1
    return m


@dataclass(frozen=True)
class KernelSample:
    t: float
    x: tuple
    y: tuple
    value: float
    mode_truncation_error: float
    truncation_wall_error_flag: bool


class KernelEngine:
    """Mode sums over precomputed eigenbases; read-only after construction."""

    def __init__(self, bases, dimension: int, t_safe: float | None = None):
        self.bases = sorted(bases, key=lambda b: b.mode)
        if not self.bases:
            raise ValueError("need at least one eigenbasis")
        self.dimension = dimension
        self.grid = self.bases[0].grid
        self.t_safe = truncation_time_budget(self.grid) if t_safe is None else t_safe

    @property
    def max_mode(self) -> int:
        return self.bases[-1].mode

    def _check(self, t, rx, ry):
        if np.any(np.asarray(t) <= 0):
            raise KernelError("t must be positive")
        for r in (rx, ry):
            if not self.grid.r_min - 1e-12 <= r <= self.grid.r_max:
                raise KernelError(f"radius {r} outside the grid")

    def kernel(self, t: float, x, y) -> KernelSample:
        (rx, tx), (ry, ty) = _as_point(x, self.dimension), _as_point(y, self.dimension)
        self._check(t, rx, ry)
        dtheta = tx - ty
        total = 0.0
        last = 0.0
        for b in self.bases:
            last = angular_factor(self.dimension, b.mode, dtheta) * float(b.mode_kernel(t, rx, ry)[0])
            total += last
        err = 0.0
        if self.dimension > 1:
            err = max(abs(last) if self.max_mode > 0 else 0.0,
                      free_tail(self.dimension, self.max_mode, t, rx, ry))
        wall = bool(t > self.t_safe or max(rx, ry) > self.grid.r_max / 4.0)
        return KernelSample(float(t), (rx, tx), (ry, ty), total, err, wall)

    def diagonal(self, times, r: float) -> np.ndarray:
        """k(t, x, x) at |x| = r for an array of times."""
        times = np.asarray(times, dtype=float)
        self._check(times, r, r)
        out = np.zeros(times.size)
        for b in self.bases:
            out += angular_factor(self.dimension, b.mode, 0.0) * b.mode_kernel(times, r, r)
        return out

    def samples(self, queries) -> list[KernelSample]:
        return [self.kernel(t, x, y) for t, x, y in queries]


def build_engine(domain: DomainSpec, grid: RadialGrid, potential=None, lam: float = 0.0,
                 max_mode: int = 0, radii=None, mass: str = "lumped", weight=None,
                 check: bool = True) -> KernelEngine:
    """Assemble and diagonalize modes 0..max_mode (a single mode in d = 1)."""
    top = 0 if domain.dimension == 1 else max_mode
    bases = []
    for mode in range(top + 1):
        if weight is not None:
            form = assemble_weighted(domain, grid, weight, mode)
        else:
            form = assemble(domain, grid, mode, potential, lam)
        bases.append(eigensolve(form, lam if weight is None else 0.0, mass, radii, check))
    return KernelEngine(bases, domain.dimension)


def kernel_matrix(basis: EigenBasis, t: float) -> np.ndarray:
    """K(t) = V exp(-t Lambda) V^T on the kept rows."""
    v = basis.vectors
    return (v * np.exp(-t * basis.eigenvalues)) @ v.T


def chapman_kolmogorov_residual(basis: EigenBasis, mass_diag: np.ndarray, t: float, s: float) -> float:
    """||K(t+s) - K(t) M K(s)|| / ||K(t+s)|| in the mass-weighted 2-norm (full rows required)."""
    if basis.rows.size != basis.grid.size:
        raise KernelError("Chapman-Kolmogorov needs all eigenvector rows")
    sq = np.sqrt(mass_diag)
    lhs = kernel_matrix(basis, t + s)
    rhs = kernel_matrix(basis, t) @ (mass_diag[:, None] * kernel_matrix(basis, s))
    diff = sq[:, None] * (lhs - rhs) * sq[None, :]
    ref = sq[:, None] * lhs * sq[None, :]
    return float(np.linalg.norm(diff, 2) / np.linalg.norm(ref, 2))


def full_lumped_mass(form: AssembledForm) -> np.ndarray:
    """Lumped mass on every grid node; constrained nodes get their row-sum too."""
    out = np.zeros(form.grid.size)
    out[form.free] = form.lumped_mass
    return out


def submarkov_mass(basis: EigenBasis, mass_diag: np.ndarray, t: float) -> np.ndarray:
    """Discrete integral of k(t, x, .) against the measure, for every node x."""
    if basis.rows.size != basis.grid.size:
        raise KernelError("the mass integral needs all eigenvector rows")
    v = basis.vectors
    return v @ (np.exp(-t * basis.eigenvalues) * (v.T @ mass_diag))


def _solver(diag, off):
    dl, d, du, du2, ipiv, info = lapack.dgttrf(off.copy(), diag.copy(), off.copy())
    if info != 0:
        raise np.linalg.LinAlgError(f"tridiagonal factorization failed, info={info}")

    def solve(b):
        x, info2 = lapack.dgttrs(dl, d, du, du2, ipiv, b[:, None])
        if info2 != 0:
            raise np.linalg.LinAlgError("tridiagonal solve failed")
        return x[:, 0]
    return solve


def _hat_values(grid: RadialGrid, free: np.ndarray, r: float) -> np.ndarray:
    nodes = grid.nodes
    i = int(np.clip(np.searchsorted(nodes, r, side="right") - 1, 0, nodes.size - 2))
    theta = (r - nodes[i]) / (nodes[i + 1] - nodes[i])
    full = np.zeros(grid.size)
    full[i] += 1.0 - theta
    full[i + 1] += theta
    return full[free]


def timestep_mode_kernel(form: AssembledForm, lam, t: float, rx: float, ry: float,
                         steps: int, startup: int = 4) -> float:
    """Crank-Nicolson propagation of the discrete delta at ry, read out at rx.

    The first CN step is replaced by ``startup`` implicit Euler substeps to damp
    the stiff components of the singular initial datum.
    """
    if t <= 0:
        raise KernelError("t must be positive")
    if steps < 8:
        raise KernelError("need at least 8 steps for the CN accuracy model")
    op = form.operator(lam)
    m = form.lumped_mass
    dt = t / steps
    u = _hat_values(form.grid, form.free, ry) / m
    # implicit Euler: (M + h A) u+ = M u
    h = dt / startup
    ie = _solver(m + h * op.diag, h * op.off)
    for _ in range(startup):
        u = ie(m * u)
    cn = _solver(m + 0.5 * dt * op.diag, 0.5 * dt * op.off)
    explicit = SymTridiagHalf(m, op, dt)
    for _ in range(steps - 1):
        u = cn(explicit(u))
    return float(np.dot(_hat_values(form.grid, form.free, rx), u))


class SymTridiagHalf:
    """u -> (M - dt/2 A) u."""

    def __init__(self, m, op, dt):
        self.m, self.op, self.dt = m, op, dt

    def __call__(self, u):
        return self.m * u - 0.5 * self.dt * self.op.matvec(u)


def kernel_via_timestep(forms, lam, t: float, x, y, steps: int) -> KernelSample:
    """Time-stepping counterpart of KernelEngine.kernel for the given mode forms."""
    if isinstance(forms, AssembledForm):
        forms = [forms]
    dim = forms[0].domain.dimension
    (rx, tx), (ry, ty) = _as_point(x, dim), _as_point(y, dim)
    total = 0.0
    for form in sorted(forms, key=lambda f: f.mode):
        total += angular_factor(dim, form.mode, tx - ty) * timestep_mode_kernel(form, lam, t, rx, ry, steps)
    grid = forms[0].grid
    wall = bool(t > truncation_time_budget(grid) or max(rx, ry) > grid.r_max / 4.0)
    err = free_tail(dim, max(f.mode for f in forms), t, rx, ry) if dim > 1 else 0.0
    return KernelSample(float(t), (rx, tx), (ry, ty), total, err, wall)


def weighted_kernel_identity_check(domain: DomainSpec, grid: RadialGrid, lam: float, t: float,
                                   x, y, mode: int = 0, weight=None, potential=None,
                                   snap: bool = True) -> float:
    """Relative gap between the kernel of H and w(x) w(y) times the kernel of the weighted operator.

    Uses the canonical weight and the matching critical potential by default,
    for which the continuum identity is exact.  Only one radial mode is
    compared; the angular factor is common to both sides.  With ``snap`` the
    radii move to the nearest grid nodes, so that linear interpolation of
    w f against w times interpolated f does not mask the O(h^2) operator gap.
    """
    if domain.dimension not in (1, 2) or domain.boundary.kind != "robin":
        raise AssemblyError("the kernel identity is checked on the Robin ball and half-line only")
    weight = canonical_weight(domain, lam) if weight is None else weight
    potential = critical_potential(domain, lam) if potential is None else potential
    (rx, _), (ry, _) = _as_point(x, domain.dimension), _as_point(y, domain.dimension)
    if snap:
        nodes = grid.nodes
        rx, ry = (float(nodes[np.argmin(np.abs(nodes - r))]) for r in (rx, ry))
    original = eigensolve(assemble(domain, grid, mode, potential, lam), radii=(rx, ry), check=False)
    weighted = eigensolve(assemble_weighted(domain, grid, weight, mode), 0.0, radii=(rx, ry), check=False)
    k_h = float(original.mode_kernel(t, rx, ry)[0])
    k_w = float(weight(rx) * weight(ry)) * float(weighted.mode_kernel(t, rx, ry)[0])
    return abs(k_h - k_w) / abs(k_h)


QUERY_COLUMNS = ("t", "rx", "thx", "ry", "thy")


def read_queries(path) -> list[tuple[float, tuple, tuple]]:
    out = []
    with open(path, newline="") as fh:
        rows = (line for line in fh if not line.startswith("#"))
        for rec in csv.DictReader(rows):
            out.append((float(rec["t"]), (float(rec["rx"]), float(rec.get("thx") or 0.0)),
                        (float(rec["ry"]), float(rec.get("thy") or 0.0))))
    return out


def write_samples(path, samples, metadata: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(list(QUERY_COLUMNS) + ["value", "mode_truncation_error", "wall_flag"])
        for s in samples:
            writer.writerow([f"{s.t:.17g}", f"{s.x[0]:.17g}", f"{s.x[1]:.17g}", f"{s.y[0]:.17g}",
                             f"{s.y[1]:.17g}", f"{s.value:.17g}", f"{s.mode_truncation_error:.17g}",
                             int(s.truncation_wall_error_flag)])
