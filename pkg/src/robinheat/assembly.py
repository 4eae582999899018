"""P1 finite-element assembly of the radial quadratic forms, mode by mode.

For a radial mode the form reduces to

    int (|u'|^2 + ang/r^2 |u|^2 - lam U |u|^2) r^{d-1} w^2 dr + sigma rho^{d-1} w(rho)^2 |u(rho)|^2

with ang = m^2 (d=2) or l(l+1) (d=3) and w = 1 unless a weight is given.
Every integral uses 3-point Gauss quadrature per element.  The outer node
r_max always carries a Dirichlet wall; the inner node is removed for a
Dirichlet boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Boundary, DomainSpec, RadialGrid
from .potentials import AffineWeight1D, LogWeight2D, Zero, canonical_weight, critical_potential
from .tridiag import SymTridiag

_GAUSS_X = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 9.0

OPERATOR_KINDS = ("H_sigma", "H_dirichlet", "H_neumann", "A_hat_sigma", "A_cal_sigma")


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AssembledForm:
    domain: DomainSpec
    grid: RadialGrid
    mode: int
    lam: float
    stiffness: SymTridiag
    angular: SymTridiag
    boundary: SymTridiag
    potential: SymTridiag
    mass: SymTridiag
    lumped_mass: np.ndarray
    free: np.ndarray  # grid indices of the unknowns
    weight: object = None
    potential_spec: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.free.size

    @property
    def free_nodes(self) -> np.ndarray:
        return self.grid.nodes[self.free]

    def operator(self, lam: float | None = None) -> SymTridiag:
        """stiffness + angular + boundary - lam * potential."""
        lam = self.lam if lam is None else lam
        op = self.stiffness + self.angular + self.boundary
        return op - lam * self.potential if lam != 0 else op

    def export_text(self) -> dict[str, str]:
        return {name: getattr(self, name).to_text()
                for name in ("stiffness", "angular", "boundary", "potential", "mass")}


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    form: AssembledForm
    lam: float
    kind: str

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")

    def matrix(self) -> SymTridiag:
        return self.form.operator(self.lam)


def _angular_factor(dim: int, mode: int) -> float:
    if dim == 1:
        if mode != 0:
            raise AssemblyError("the half-line has a single mode")
        return 0.0
    return float(mode * mode) if dim == 2 else float(mode * (mode + 1))


def _check_weight(domain: DomainSpec, weight) -> None:
    if weight is None:
        return
    expected = LogWeight2D if domain.dimension == 2 else AffineWeight1D
    if domain.dimension == 3 or not isinstance(weight, expected):
        raise AssemblyError(f"weight {type(weight).__name__} does not fit dimension {domain.dimension}")


def assemble(domain: DomainSpec, grid: RadialGrid, mode: int = 0, potential=None,
             lam: float = 0.0, weight=None) -> AssembledForm:
    if mode < 0:
        raise AssemblyError("mode must be nonnegative")
    if abs(grid.r_min - domain.rho) > 1e-12 * max(1.0, domain.rho):
        raise AssemblyError("grid does not start at the obstacle")
    _check_weight(domain, weight)
    potential = Zero() if potential is None else potential
    dim = domain.dimension
    ang = _angular_factor(dim, mode)

    r = grid.nodes
    h = np.diff(r)
    mid = 0.5 * (r[:-1] + r[1:])
    q = mid[:, None] + 0.5 * h[:, None] * _GAUSS_X[None, :]  # (elements, 3)
    gw = 0.5 * h[:, None] * _GAUSS_W[None, :]
    phi_l = (r[1:, None] - q) / h[:, None]
    phi_r = (q - r[:-1, None]) / h[:, None]

    meas = q ** (dim - 1)
    if weight is not None:
        meas = meas * weight(q) ** 2
    pot = potential(q, clamp=True)

    def local_mass(coef):
        c = gw * meas * coef
        return ((c * phi_l * phi_l).sum(1), (c * phi_l * phi_r).sum(1), (c * phi_r * phi_r).sum(1))

    def glue(ll, lr, rr):
        d = np.zeros(r.size)
        d[:-1] += ll
        d[1:] += rr
        return SymTridiag(d, lr)

    k = (gw * meas).sum(1) / h**2
    stiff = glue(k, -k, k)
    mass = glue(*local_mass(1.0))
    angular = glue(*local_mass(ang / q**2)) if ang else SymTridiag.zeros(r.size)
    pmat = glue(*local_mass(pot))

    bdiag = np.zeros(r.size)
    sigma = domain.boundary.sigma
    if domain.boundary.kind == "robin" and sigma != 0.0:
        w0 = 1.0 if weight is None else float(weight(r[0]))
        bdiag[0] = sigma * r[0] ** (dim - 1) * w0**2
    boundary = SymTridiag.diagonal(bdiag)

    lumped_full = mass.row_sums()
    first = 1 if domain.boundary.kind == "dirichlet" else 0
    free = np.arange(first, r.size - 1)

    def restrict(m: SymTridiag) -> SymTridiag:
        return SymTridiag(m.diag[free], m.off[free[:-1]])

    return AssembledForm(
        domain=domain, grid=grid, mode=mode, lam=float(lam),
        stiffness=restrict(stiff), angular=restrict(angular), boundary=restrict(boundary),
        potential=restrict(pmat), mass=restrict(mass), lumped_mass=lumped_full[free],
        free=free, weight=weight, potential_spec=potential,
    )


def assemble_weighted(domain: DomainSpec, grid: RadialGrid, weight, mode: int = 0) -> AssembledForm:
    """Form int |f'|^2 w^2 dmu of the transformed operator.

    The boundary keeps the remainder (sigma w(rho)^2 - w(rho) w'(rho)) rho^{d-1}
    left over by the integration by parts; it vanishes for the canonical
    weight, leaving the weighted Neumann form.
    """
    form = assemble(domain.with_boundary(Boundary.neumann()), grid, mode, None, 0.0, weight)
    if domain.boundary.kind == "dirichlet":
        raise AssemblyError("weighted form is defined for Robin and Neumann boundaries")
    r0 = grid.nodes[0]
    w0 = float(weight(r0))
    rest = (domain.boundary.sigma * w0 * w0 - w0 * float(weight.derivative(r0))) * r0 ** (domain.dimension - 1)
    if rest != 0.0:
        bdiag = np.zeros(form.n)
        bdiag[0] = rest
        form = replace(form, domain=domain, boundary=SymTridiag.diagonal(bdiag))
    else:
        form = replace(form, domain=domain)
    return form


def transform_residual(domain: DomainSpec, grid: RadialGrid, lam: float, mode: int = 0,
                       weight=None, potential=None) -> float:
    """Relative inf-norm residual of the discrete ground-state transform.

    Compares W (A - lam P) W, with W the nodal values of the weight, to the
    weighted Neumann stiffness.  Defaults use the canonical weight and the
    matching critical potential, for which the continuum identity is exact.
    """
    if domain.dimension not in (1, 2) or domain.boundary.kind != "robin":
        raise AssemblyError("transform identity is only exact for the Robin ball / half-line")
    weight = canonical_weight(domain, lam) if weight is None else weight
    potential = critical_potential(domain, lam) if potential is None else potential
    original = assemble(domain, grid, mode, potential, lam)
    weighted = assemble_weighted(domain, grid, weight, mode)
    w = weight(original.free_nodes)
    lhs = original.operator().congruence(w)
    rhs = weighted.operator()
    return (lhs - rhs).norm_inf() / rhs.norm_inf()


class RefinementError(RuntimeError):
    pass


def transform_refinement(domain: DomainSpec, lam: float, sizes, r_max: float,
                         spacing: str = "log", mode: int = 0) -> list[tuple[int, float]]:
    """Residuals of ``transform_residual`` over successive grids; raises if one grows."""
    from .grid import build_grid

    out = []
    for n in sizes:
        res = transform_residual(domain, build_grid(domain, r_max, n, spacing), lam, mode)
        if out and res > out[-1][1]:
            raise RefinementError(f"residual grew from {out[-1][1]:.3e} to {res:.3e} at n={n}")
        out.append((n, res))
    return out


@dataclass
class DominationReport:
    t: float
    labels: list
    violations: list  # (lower label, upper label, max relative excess)
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for _, _, v in self.violations)

    @property
    def first_violation(self):
        for item in self.violations:
            if item[2] > self.tolerance:
                return item
        return None

    def to_dict(self) -> dict:
        return {"t": self.t, "labels": self.labels, "tolerance": self.tolerance, "passed": self.passed,
                "violations": [list(v) for v in self.violations]}


def dense_kernel(form: AssembledForm, t: float) -> np.ndarray:
    """Full-grid lumped-mass kernel matrix exp(-t M^-1 A) M^-1 by a dense matrix exponential."""
    from scipy.linalg import expm

    s = 1.0 / np.sqrt(form.lumped_mass)
    k = expm(-t * form.operator().congruence(s).toarray()) * np.outer(s, s)
    out = np.zeros((form.grid.size, form.grid.size))
    out[np.ix_(form.free, form.free)] = k
    return out


def domination_order_check(grid: RadialGrid, mode: int, t: float, sigmas, rho: float | None = None,
                           dimension: int = 2, tolerance: float = 1e-8) -> DominationReport:
    """Entrywise ordering Dirichlet <= Robin(sigma_big) <= ... <= Robin(sigma_small) <= Neumann at lambda = 0.

    Kernels are compared on the nodes with r <= r_max/4; excesses are relative
    to the largest Neumann entry there.
    """
    if t <= 0:
        raise AssemblyError("t must be positive")
    sigmas = [float(s) for s in sigmas]
    if any(s < 0 for s in sigmas) or sigmas != sorted(sigmas):
        raise AssemblyError("sigmas must be an ascending list of nonnegative reals")
    rho = grid.r_min if rho is None else rho
    bcs = [Boundary.neumann()] + [Boundary.robin(s) for s in sigmas] + [Boundary.dirichlet()]
    labels = [str(b) for b in bcs]
    keep = grid.nodes <= grid.r_max / 4.0
    kernels = [dense_kernel(assemble(DomainSpec(dimension, rho, b), grid, mode), t)[np.ix_(keep, keep)]
               for b in bcs]
    scale = float(np.abs(kernels[0]).max())
    violations = []
    for upper, lower, lu, ll in zip(kernels[:-1], kernels[1:], labels[:-1], labels[1:]):
        violations.append((ll, lu, float(max((lower - upper).max(), 0.0) / scale)))
    return DominationReport(float(t), labels, violations, tolerance)
