"""Hardy constants, negative-eigenvalue counts and eigenvalue-moment bounds.

Everything here works on the radial reduction of the two-dimensional ball
exterior.  Counts use the Sylvester inertia of the assembled operator, which
equals the number of negative eigenvalues of the pencil for any positive
definite mass; moments use the lumped-mass eigenvalues of the same grid so
that both sides of the trace inequality see one discretization.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, linalg, optimize

from .assembly import OperatorHandle, assemble
from .grid import Boundary, DomainSpec, ModeSet, RadialGrid, truncation_time_budget
from .heat import KernelEngine, default_mode_cap, eigensolve
from .potentials import Indicator, Scaled, Sum, Zero, hardy_weight, u_infty_2d, u_sigma_2d
from .tridiag import SymTridiag, inertia, smallest_pencil_eigenvalue

BOUND_NAMES = ("hlt", "hclr", "lieb")
HARDY_PROFILES = ("literal", "loglog")


class SpectralError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Hardy inequality


def _require_ball(domain: DomainSpec) -> None:
    if domain.dimension != 2:
        raise SpectralError("Hardy and moment checks are implemented for the planar ball exterior")


def hardy_pencil(domain: DomainSpec, grid: RadialGrid) -> tuple[SymTridiag, SymTridiag]:
    """Mode-0 form matrix and the mass of the weight 1/(r^2 (log(r/rho) + 1/(2 rho sigma0))^2).

    A Dirichlet domain uses the unshifted weight.  The weight is four times
    ``hardy_weight`` so that the best constant is 1/4.
    """
    _require_ball(domain)
    kind = domain.boundary.kind
    if kind == "neumann" or (kind == "robin" and domain.boundary.sigma0 <= 0):
        raise SpectralError("the Hardy inequality needs sigma0 > 0 or a Dirichlet boundary")
    sigma0 = math.inf if kind == "dirichlet" else domain.boundary.sigma0
    weight = Scaled(hardy_weight(domain.rho, sigma0), 4.0)
    form = assemble(domain, grid, 0, weight, 0.0)
    return form.operator(0.0), form.potential


def hardy_constant_lower(domain: DomainSpec, grid: RadialGrid, rtol: float = 1e-10) -> float:
    """Smallest generalized eigenvalue of (form matrix, Hardy-weight mass) by Sturm bisection."""
    a, b = hardy_pencil(domain, grid)
    return smallest_pencil_eigenvalue(a, b, 0.0, 1.0, rtol)


def _profile(profile: str, log_n: float, c: float):
    """Return (f, df/dx) of a test function in x = log r on [0, log_n]."""
    if profile == "literal":
        def f(x):
            y = 1.0 + log_n - x
            return np.log(np.log(y) + 1.0)

        def df(x):
            y = 1.0 + log_n - x
            return -1.0 / (y * (np.log(y) + 1.0))
    elif profile == "loglog":
        ell = math.log((log_n + c) / c)

        def f(x):
            return np.log((log_n + c) / (x + c)) / ell

        def df(x):
            return -1.0 / (ell * (x + c))
    else:
        raise SpectralError(f"unknown profile {profile!r}")
    return f, df


def sharp_integrals(log_n: float, sigma0: float = 1.0, profile: str = "literal") -> tuple[float, float]:
    """The two integrals of the Hardy remainder identity for the n-th test function (rho = 1).

    With L = log r + 1/(2 sigma0) and u = L^{1/2} f the form exceeds 1/4 of the
    weighted mass by int |f'|^2 L r dr; returns that excess and the weighted
    mass int f^2/(r L) dr, both in the variable x = log r.
    """
    if not log_n > 0:
        raise SpectralError("n must exceed 1")
    c = 1.0 / (2.0 * sigma0)
    f, df = _profile(profile, log_n, c)
    opts = dict(epsabs=1e-14, epsrel=1e-10, limit=400)
    # geometric break points resolve the tails at both ends for huge log_n
    near_end = log_n - np.geomspace(1e-3, log_n, 60)
    near_start = c * np.geomspace(1.0, (log_n + c) / c, 60) - c
    pts = np.unique(np.concatenate([[0.0], near_end, near_start, [log_n]]))
    pts = np.clip(pts, 0.0, log_n)
    num = den = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        num += integrate.quad(lambda x: (x + c) * df(x) ** 2, lo, hi, **opts)[0]
        den += integrate.quad(lambda x: f(x) ** 2 / (x + c), lo, hi, **opts)[0]
    return num, den


def sharp_identity_rhs(log_n: float, C: float, sigma0: float = 1.0, profile: str = "literal") -> float:
    """Q[u_n] - C * weighted mass: negative exactly when C exceeds the n-th Rayleigh quotient."""
    num, den = sharp_integrals(log_n, sigma0, profile)
    return num - (C - 0.25) * den


@dataclass(frozen=True)
class HardyProbe:
    n: float
    rayleigh_quotient: float
    constant_estimate: float

    def to_dict(self) -> dict:
        return asdict(self)


def hardy_sharpness_sequence(n_list, grid: RadialGrid, sigma0: float = 1.0,
                             profile: str = "literal") -> list[HardyProbe]:
    """Rayleigh quotients of u_n = (log r + 1/(2 sigma0))^{1/2} f_n against the Hardy weight.

    ``rayleigh_quotient`` is the assembled form value over the assembled weight
    mass of the nodal interpolant; ``constant_estimate`` is 1/4 plus the ratio
    of the two remainder integrals computed by adaptive quadrature.
    """
    if grid.r_min != 1.0:
        raise SpectralError("the test functions are defined for rho = 1")
    domain = DomainSpec.ball_exterior(2, 1.0, Boundary.robin(sigma0))
    a, b = hardy_pencil(domain, grid)
    x = np.log(grid.nodes[:-1])  # free nodes: the outer wall is constrained
    c = 1.0 / (2.0 * sigma0)
    out = []
    for n in n_list:
        if not 1.0 < n <= grid.r_max:
            raise SpectralError(f"test-function index n={n} must lie in (1, r_max]")
        log_n = math.log(n)
        f, _ = _profile(profile, log_n, c)
        inside = x <= log_n
        u = np.zeros(x.size)
        u[inside] = np.sqrt(x[inside] + c) * f(x[inside])
        quotient = a.quad(u) / b.quad(u)
        num, den = sharp_integrals(log_n, sigma0, profile)
        out.append(HardyProbe(float(n), float(quotient), 0.25 + num / den))
    return out


# ---------------------------------------------------------------------------
# Counting and moments


def schrodinger_operator(domain: DomainSpec, grid: RadialGrid, mode: int, lam: float,
                         V=None) -> OperatorHandle:
    """H(lam) - V with the reference potential matching the boundary condition.

    Dirichlet uses U_inf, Robin uses U_sigma; the handle's lambda is 1 and the
    potential carries lam * U + V.
    """
    _require_ball(domain)
    kind = domain.boundary.kind
    if kind == "dirichlet":
        ref, op_kind = u_infty_2d(domain.rho), "H_dirichlet"
    elif kind == "robin" and domain.boundary.sigma0 > 0:
        ref, op_kind = u_sigma_2d(domain.rho, domain.boundary.sigma0), "H_sigma"
    else:
        ref, op_kind = Zero(), "H_neumann"
    terms = [Scaled(ref, lam)] if lam != 0 else []
    if V is not None:
        terms.append(V)
    potential = Sum(tuple(terms)) if terms else Zero()
    form = assemble(domain, grid, mode, potential, 1.0)
    return OperatorHandle(form, 1.0, op_kind)


def count_negative(operators, modes: ModeSet, stop_at_zero: bool = True) -> int:
    """Negative eigenvalues over all modes, weighted by degeneracy.

    ``operators`` maps a mode to its OperatorHandle (a dict or a callable).
    The angular term grows with the mode, so once a mode has no negative
    eigenvalue the higher ones have none either and the loop stops.
    """
    get = operators.__getitem__ if isinstance(operators, dict) else operators
    total = 0
    for mode in modes.modes:
        m = get(mode).matrix()
        k = inertia(m.diag, m.off)
        total += modes.degeneracy(mode) * k
        if k == 0 and stop_at_zero:
            break
    return total


def count_for(domain: DomainSpec, grid: RadialGrid, lam: float, V=None, max_mode: int = 200) -> int:
    return count_negative(lambda m: schrodinger_operator(domain, grid, m, lam, V),
                          ModeSet(domain.dimension, max_mode))


def coupling_threshold(domain: DomainSpec, grid: RadialGrid, lam: float, shape: Indicator,
                       lo: float = 1e-8, hi: float = 1e3, rtol: float = 1e-3) -> float:
    """Smallest a for which H(lam) - a * shape has a negative eigenvalue (bisection in log a).

    Only mode 0 matters: it carries the lowest eigenvalue.
    """
    def binds(a):
        m = schrodinger_operator(domain, grid, 0, lam, shape.scaled(a / shape.a)).matrix()
        return inertia(m.diag, m.off) > 0

    if binds(lo):
        return lo
    if not binds(hi):
        return math.inf
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if binds(mid):
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)


def negative_eigenvalues(handle: OperatorHandle) -> np.ndarray:
    """Negative eigenvalues of the lumped-mass pencil, ascending."""
    form = handle.form
    s = 1.0 / np.sqrt(form.lumped_mass)
    t = handle.matrix().congruence(s)
    k = inertia(t.diag, t.off)
    if k == 0:
        return np.zeros(0)
    vals = linalg.eigvalsh_tridiagonal(t.diag, t.off, select="i", select_range=(0, k - 1))
    return np.minimum(vals, 0.0)


def negative_spectrum(domain: DomainSpec, grid: RadialGrid, lam: float, V, max_mode: int = 200) -> np.ndarray:
    """All negative eigenvalues over modes, repeated by degeneracy, most negative first."""
    modes = ModeSet(domain.dimension, max_mode)
    out = []
    for mode in modes.modes:
        vals = negative_eigenvalues(schrodinger_operator(domain, grid, mode, lam, V))
        if vals.size == 0:
            break
        out.extend(np.repeat(vals, modes.degeneracy(mode)))
    return np.sort(np.asarray(out, dtype=float))


@dataclass
class SpectralReport:
    negative_eigenvalues: list
    moment_gamma: float
    moment_value: float
    rhs_bound: float
    bound_name: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound_name not in BOUND_NAMES:
            raise ValueError(f"unknown bound {self.bound_name!r}")
        self.negative_eigenvalues = sorted((float(v) for v in self.negative_eigenvalues), key=abs, reverse=True)

    @property
    def holds(self) -> bool:
        return self.moment_value <= self.rhs_bound

    @property
    def ratio(self) -> float:
        if self.rhs_bound == 0:
            return 0.0 if self.moment_value == 0 else math.inf
        return self.moment_value / self.rhs_bound

    def to_dict(self) -> dict:
        d = asdict(self)
        d["count"] = len(self.negative_eigenvalues)
        d["ratio"] = self.ratio
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _moment(vals: np.ndarray, gamma: float) -> float:
    if vals.size == 0:
        return 0.0
    return float(np.sum(np.abs(vals) ** gamma)) if gamma > 0 else float(vals.size)


# ---------------------------------------------------------------------------
# Lieb's inequality


def exponential_integral(b: float, method: str = "substitution") -> float:
    """E_1(b) = int_b^inf e^{-s}/s ds.

    ``substitution`` integrates exp(-b e^u) over u >= 0; ``direct`` integrates
    e^{-s}/s after splitting at s = 1; ``series`` sums the convergent power
    series (b <= 5; beyond that the alternating terms cancel
    away the leading digits).
    """
    if not b > 0:
        raise ValueError("b must be positive")
    if method == "substitution":
        top = math.log(800.0 / b) if b < 800 else 1.0
        return integrate.quad(lambda u: math.exp(-b * math.exp(u)), 0.0, top,
                              epsabs=0.0, epsrel=1e-13, limit=200)[0]
    if method == "direct":
        opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
        total = integrate.quad(lambda s: math.exp(-s) / s, max(b, 1.0), math.inf, **opts)[0]
        if b < 1.0:
            # subtract the log singularity analytically: (e^{-s} - 1)/s is smooth
            total += integrate.quad(lambda s: math.expm1(-s) / s, b, 1.0, **opts)[0] - math.log(b)
        return total
    if method == "series":
        if b > 5:
            raise ValueError("series is only used for b <= 5")
        term, acc, k = 1.0, 0.0, 1
        while True:
            term *= -b / k
            inc = term / k
            acc += inc
            if abs(inc) < 1e-17 * max(abs(acc), 1e-300) or k > 500:
                break
            k += 1
        return -np.euler_gamma - math.log(b) - acc
    raise ValueError(f"unknown method {method!r}")


def lieb_constant(b: float, gamma: float, method: str = "substitution") -> float:
    """L_{b,gamma} = Gamma(gamma+1) / (e^{-b} - b E_1(b))."""
    if not b > 0:
        raise ValueError("b must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    denom = math.exp(-b) - b * exponential_integral(b, method)
    if not denom > 0:
        raise SpectralError(f"nonpositive denominator {denom:.3e} at b={b}")
    return math.gamma(gamma + 1.0) / denom


def optimal_lieb_b(gamma: float, bounds=(1e-6, 10.0)) -> tuple[float, float]:
    """Minimizer of b -> L_{b,gamma} on a bounded interval, with the minimum."""
    res = optimize.minimize_scalar(lambda b: lieb_constant(b, gamma), bounds=bounds, method="bounded",
                                   options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def _support(V) -> tuple[float, float]:
    if isinstance(V, Indicator):
        return V.r1, V.r2
    if isinstance(V, Scaled) and isinstance(V.base, Indicator):
        return V.base.r1, V.base.r2
    raise SpectralError("trace bound needs a radially supported indicator potential")


def _height(V) -> float:
    if isinstance(V, Indicator):
        return V.a
    return V.factor * V.base.a


def lieb_kernel_engine(domain: DomainSpec, grid: RadialGrid, lam: float, support, t_min: float,
                       tol: float = 1e-8, r_points: int = 16) -> tuple[KernelEngine, np.ndarray]:
    """Eigenbases of H(lam) with modes up to the free-tail cap at the smallest needed time.

    Returns the engine and the Gauss-Legendre radii on the support where the
    diagonal is needed.
    """
    r1, r2 = support
    xg, _ = np.polynomial.legendre.leggauss(r_points)
    radii = 0.5 * (r1 + r2) + 0.5 * (r2 - r1) * xg
    cap = default_mode_cap(2, t_min, r2, r2, tol)
    bases = []
    for mode in range(cap + 1):
        handle = schrodinger_operator(domain, grid, mode, lam, None)
        bases.append(eigensolve(handle.form, 1.0, "lumped", radii, check=False))
    return KernelEngine(bases, 2), radii


def verify_lieb_trace_bound(domain: DomainSpec, grid: RadialGrid, V, gamma: float, b: float,
                            kernel_diag=None, lam: float = 1.0, t_max: float | None = None,
                            r_points: int = 16, panels_per_decade: int = 4, order: int = 12) -> SpectralReport:
    """Both sides of Lieb's trace inequality for H(lam) - V.

    Left: sum of |eigenvalue|^gamma over negative eigenvalues of the assembled
    operator.  Right: L_{b,gamma} int int k(t,x,x) t^{-1-gamma} (t V(x) - b)_+ dt dx
    with Gauss-Legendre in r on the support of V and composite Gauss-Legendre
    in log t from b/V to ``t_max`` (default: the wall-safe time).  Cutting the
    time integral, the mode sum and the domain all lower the computed right
    side, so a passing check is conservative.

    ``kernel_diag(times, r)`` defaults to the spectral diagonal of H(lam) on
    the same grid.
    """
    if gamma <= 0:
        raise SpectralError("the trace bound needs gamma > 0")
    r1, r2 = _support(V)
    a = _height(V)
    if a < 0:
        raise SpectralError("V must be nonnegative")
    vals = negative_spectrum(domain, grid, lam, V)
    left = _moment(vals, gamma)
    L = lieb_constant(b, gamma)
    if a == 0:
        return SpectralReport(vals, gamma, left, 0.0, "lieb", {"L": L, "a": a, "b": b})
    t0 = b / a
    t_max = truncation_time_budget(grid) if t_max is None else t_max
    if not t_max > t0:
        raise SpectralError(f"time window ({t0}, {t_max}] is empty")

    xg, wg = np.polynomial.legendre.leggauss(r_points)
    radii = 0.5 * (r1 + r2) + 0.5 * (r2 - r1) * xg
    rw = 0.5 * (r2 - r1) * wg
    if kernel_diag is None:
        engine, _ = lieb_kernel_engine(domain, grid, lam, (r1, r2), t0, r_points=r_points)
        kernel_diag = engine.diagonal
    decades = math.log10(t_max / t0)
    edges = np.linspace(math.log(t0), math.log(t_max), max(2, int(math.ceil(decades * panels_per_decade)) + 1))
    ug, uw = np.polynomial.legendre.leggauss(order)
    u = (0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * ug[None, :]).ravel()
    du = (0.5 * np.diff(edges)[:, None] * uw[None, :]).ravel()
    times = np.exp(u)
    # dt = t du, so the t-integrand becomes k t^{-gamma} (t a - b)_+
    tfac = times ** (-gamma) * np.maximum(times * a - b, 0.0) * du
    spatial = 0.0
    for r, w in zip(radii, rw):
        spatial += w * 2.0 * math.pi * r * float(np.dot(kernel_diag(times, r), tfac))
    right = L * spatial
    extra = {"L": L, "a": a, "b": b, "t_window": [t0, t_max], "margin": right - left}
    return SpectralReport(vals, gamma, left, right, "lieb", extra)


# ---------------------------------------------------------------------------
# Weighted CLR / Hardy-Lieb-Thirring ratios


def _indicator_area(V) -> float:
    r1, r2 = _support(V)
    return math.pi * (r2 * r2 - r1 * r1)


def verify_hlt(domain: DomainSpec, grid: RadialGrid, gamma: float, V, lam: float = 1.0) -> SpectralReport:
    """Moment of order gamma over int V^{gamma+1}; the report's ratio is the empirical constant."""
    if gamma < 0:
        raise SpectralError("gamma must be nonnegative")
    a = _height(V)
    if gamma == 0:
        count = count_for(domain, grid, lam, V)
        vals = np.full(count, -math.nan)
        moment = float(count)
    else:
        vals = negative_spectrum(domain, grid, lam, V)
        moment = _moment(vals, gamma)
    rhs = a ** (gamma + 1.0) * _indicator_area(V)
    return SpectralReport(vals if gamma > 0 else [], gamma, moment, rhs, "hlt",
                          {"a": a, "lambda": lam, "count": int(vals.size)})


def hclr_integral(V, lam: float, rho: float = 1.0) -> float:
    """int V (log V)^{-s} (log |x|)^{1+s} dx for an indicator V, s = sqrt(1 - lam)."""
    if not 0.0 <= lam < 1.0:
        raise SpectralError("the weighted CLR bound needs 0 <= lambda < 1")
    if rho != 1.0:
        raise SpectralError("the weighted CLR bound is stated for rho = 1")
    a = _height(V)
    if a <= 1.0:
        raise SpectralError(f"log V must be positive on the support; a={a} is flagged")
    r1, r2 = _support(V)
    s = math.sqrt(1.0 - lam)
    radial = integrate.quad(lambda r: math.log(r) ** (1.0 + s) * r, r1, r2, epsabs=0.0, epsrel=1e-12)[0]
    return a * math.log(a) ** (-s) * 2.0 * math.pi * radial


def verify_hclr(domain: DomainSpec, grid: RadialGrid, lam: float, V) -> SpectralReport:
    """Count of H(lam) - V over the C_0-free right side; ratio = C_0 needed for this V."""
    integral = hclr_integral(V, lam, domain.rho) / math.sqrt(1.0 - lam)
    count = count_for(domain, grid, lam, V)
    return SpectralReport([], 0.0, float(count), integral, "hclr",
                          {"a": _height(V), "lambda": lam, "count": count})


@dataclass
class FamilySweep:
    bound_name: str
    parameters: list
    ratios: list
    reports: list
    flagged: list

    @property
    def sup_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_dict(self) -> dict:
        return {"bound_name": self.bound_name, "parameters": self.parameters, "ratios": self.ratios,
                "sup_ratio": self.sup_ratio, "flagged": self.flagged,
                "reports": [r.to_dict() for r in self.reports]}


def family_sweep(kind: str, domain: DomainSpec, grid: RadialGrid, shape: Indicator, a_list,
                 gamma: float = 1.0, lam: float = 1.0) -> FamilySweep:
    """Empirical constants over V_a = a * shape; HCLR members with a <= 1 are flagged and skipped."""
    ratios, reports, params, flagged = [], [], [], []
    for a in a_list:
        V = shape.scaled(a / shape.a)
        if kind == "hlt":
            rep = verify_hlt(domain, grid, gamma, V, lam)
        elif kind == "hclr":
            if a <= 1.0:
                flagged.append(float(a))
                continue
            rep = verify_hclr(domain, grid, lam, V)
        else:
            raise SpectralError(f"unknown family kind {kind!r}")
        params.append(float(a))
        ratios.append(rep.ratio)
        reports.append(rep)
    return FamilySweep(kind, params, ratios, reports, flagged)

