"""Analytic heat-kernel envelopes, weighted volumes, constant fitting and decay regressions."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, stats

from .potentials import LogWeight2D, decay_exponent

ENVELOPE_KINDS = ("upper_2d", "dirichlet_upper", "lower_2d", "two_sided_2d", "two_sided_1d", "hd_two_sided")
LOWER_KINDS = ("lower_2d",)
SIDES = ("upper", "lower")


class EnvelopeError(ValueError):
    pass


class FitError(RuntimeError):
    pass


def _radius_angle(p) -> tuple[float, float]:
    if isinstance(p, (tuple, list, np.ndarray)):
        return float(p[0]), float(p[1]) if len(p) > 1 else 0.0
    return float(p), 0.0


def distance(x, y) -> float:
    (rx, tx), (ry, ty) = _radius_angle(x), _radius_angle(y)
    return math.sqrt(max(rx * rx + ry * ry - 2.0 * rx * ry * math.cos(tx - ty), 0.0))


def f2(x, y, lam: float, rho: float = 1.0, sigma0: float = 1.0, exponent: float | None = None) -> float:
    """((log|x|/rho + 1/(rho sigma0)) (log|y|/rho + 1/(rho sigma0)))^(exponent/2)."""
    p = decay_exponent(lam) if exponent is None else exponent
    shift = 1.0 / (rho * sigma0)
    rx, ry = _radius_angle(x)[0], _radius_angle(y)[0]
    return ((math.log(rx / rho) + shift) * (math.log(ry / rho) + shift)) ** (p / 2.0)


def f1(x, y, lam: float, sigma: float = 1.0, exponent: float | None = None) -> float:
    """((x + 1/sigma) (y + 1/sigma))^(exponent/2)."""
    p = decay_exponent(lam) if exponent is None else exponent
    x, y = _radius_angle(x)[0], _radius_angle(y)[0]
    return ((x + 1.0 / sigma) * (y + 1.0 / sigma)) ** (p / 2.0)


@dataclass(frozen=True)
class BoundEnvelope:
    """One side of a heat-kernel bound with free constants C and c.

    Upper sides read C * shape * exp(-|x-y|^2/(c t)).  Lower sides of the
    two-sided kinds read shape * exp(-c |x-y|^2/t) / C, and ``lower_2d``
    reads C * shape * exp(-c |x-y|^2/t).  ``exponent`` overrides the power
    1 + sqrt(1 - lam) (used for negative controls); ``beta`` is the log-shift
    of the lower bound potential (``lower_2d`` only).
    """

    kind: str
    lam: float = 0.0
    rho: float = 1.0
    sigma0: float = 1.0
    C: float = 1.0
    c: float = 1.0
    side: str = "upper"
    beta: float | None = None
    exclusion_radius: float | None = None
    exponent: float | None = None
    dimension: int = 2

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise EnvelopeError(f"unknown envelope kind {self.kind!r}")
        if self.side not in SIDES:
            raise EnvelopeError(f"unknown side {self.side!r}")
        if self.kind in LOWER_KINDS and self.side != "lower":
            object.__setattr__(self, "side", "lower")
        if self.kind in ("upper_2d", "dirichlet_upper") and self.side != "upper":
            raise EnvelopeError(f"{self.kind} is an upper bound")
        if not (self.C > 0 and self.c > 0):
            raise EnvelopeError("constants C and c must be positive")
        if self.kind == "two_sided_1d":
            object.__setattr__(self, "dimension", 1)
        elif self.kind != "hd_two_sided":
            object.__setattr__(self, "dimension", 2)
        if self.kind == "hd_two_sided" and self.dimension < 3:
            raise EnvelopeError("hd_two_sided needs dimension >= 3")

    @property
    def power(self) -> float:
        return decay_exponent(self.lam) if self.exponent is None else self.exponent

    @property
    def epsilon(self) -> float:
        return self.rho / 2.0 if self.exclusion_radius is None else self.exclusion_radius

    @property
    def is_lower(self) -> bool:
        return self.side == "lower"

    def with_constants(self, C: float, c: float | None = None) -> "BoundEnvelope":
        return replace(self, C=float(C), c=self.c if c is None else float(c))

    def shape(self, t: float, x, y) -> float:
        """Envelope without the constant C and without the Gaussian factor."""
        rx, ry = _radius_angle(x)[0], _radius_angle(y)[0]
        p = self.power
        if self.kind == "two_sided_1d":
            sig = self.sigma0
            return f1(rx, ry, self.lam, sig, p) / (math.sqrt(t) * (rx + math.sqrt(t) + 1.0 / sig) ** p)
        if self.kind == "hd_two_sided":
            return t ** (-self.dimension / 2.0)
        if self.kind == "dirichlet_upper":
            shift = 0.0
        elif self.kind == "lower_2d":
            shift = self.beta if self.beta is not None else 1.0 / (self.rho * self.sigma0)
        else:
            shift = 1.0 / (self.rho * self.sigma0)
        num = ((math.log(rx / self.rho) + shift) * (math.log(ry / self.rho) + shift)) ** (p / 2.0)
        den = t * (math.log((rx + math.sqrt(t)) / self.rho) + shift) ** p
        return num / den

    def gaussian(self, t: float, x, y, c: float | None = None) -> float:
        c = self.c if c is None else c
        d2 = distance(x, y) ** 2 if self.dimension > 1 else (_radius_angle(x)[0] - _radius_angle(y)[0]) ** 2
        return math.exp(-c * d2 / t) if self.is_lower else math.exp(-d2 / (c * t))

    def scale(self) -> float:
        """Multiplier applied to shape * gaussian."""
        if self.is_lower and self.kind != "lower_2d":
            return 1.0 / self.C
        return self.C

    def in_exclusion(self, x) -> bool:
        if not self.is_lower or self.dimension == 1:
            return False
        return _radius_angle(x)[0] - self.rho < self.epsilon


def eval_envelope(env: BoundEnvelope, t: float, x, y) -> float:
    if not t > 0:
        raise EnvelopeError("t must be positive")
    if env.in_exclusion(x) or env.in_exclusion(y):
        raise EnvelopeError(f"lower envelope queried inside the exclusion neighbourhood (eps={env.epsilon})")
    if env.dimension >= 2 and env.kind != "hd_two_sided":
        for p in (x, y):
            if _radius_angle(p)[0] < env.rho:
                raise EnvelopeError("point inside the obstacle")
    return env.scale() * env.shape(t, x, y) * env.gaussian(t, x, y)


# ---------------------------------------------------------------- volumes

@dataclass(frozen=True)
class VolumeFunctional:
    dimension: int
    weight: object
    kind: str = "V2"
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in ("V1", "V2"):
            raise ValueError("volume kind is V1 or V2")
        if (self.kind == "V1") != (self.dimension == 1):
            raise ValueError("V1 is the half-line volume, V2 the planar one")


def volume(vf: VolumeFunctional, x, s: float) -> float:
    """Weighted volume of B(x, s) intersected with the domain (relative quadrature error <= 1e-6)."""
    if not s > 0:
        raise ValueError("radius must be positive")
    w = vf.weight
    if vf.kind == "V1":
        x = _radius_angle(x)[0]
        val, _ = integrate.quad(lambda y: float(w(y)) ** 2, max(0.0, x - s), x + s, epsabs=0, epsrel=1e-10, limit=200)
        return val
    r0 = _radius_angle(x)[0]
    if r0 < vf.rho:
        raise ValueError("centre inside the obstacle")

    def arc(r):
        if r0 == 0.0:
            return 2.0 * math.pi if r < s else 0.0
        # 1 - cos(half angle) written without cancellation
        d = (s - (r - r0)) * (s + (r - r0)) / (2.0 * r0 * r)
        if d <= 0.0:
            return 0.0
        if d >= 2.0:
            return 2.0 * math.pi
        return 4.0 * math.asin(math.sqrt(0.5 * d))

    def integrand(r):
        return float(w(r)) ** 2 * r * arc(r)

    # the arc length has square-root endpoints; r = a + (b - a)(1 - cos u)/2 smooths them
    def piece(a, b):
        half = 0.5 * (b - a)
        f = lambda u: integrand(a + half * (1.0 - math.cos(u))) * half * math.sin(u)
        return integrate.quad(f, 0.0, math.pi, epsabs=0, epsrel=1e-10, limit=200)[0]

    lo, hi = max(vf.rho, r0 - s), r0 + s
    kink = abs(s - r0)
    if lo < kink < hi:
        return piece(lo, kink) + piece(kink, hi)
    return piece(lo, hi)


def _weight_params(w) -> tuple[float, float]:
    if isinstance(w, LogWeight2D):
        return w.alpha, w.beta
    raise ValueError("volume comparisons need a logarithmic weight")


def volume_scale(vf: VolumeFunctional, x, s: float) -> float:
    """s^2 (log((|x|+s)/rho) + beta)^(2 alpha), the comparison function of the volume bounds."""
    alpha, beta = _weight_params(vf.weight)
    r0 = _radius_angle(x)[0]
    return s * s * (math.log((r0 + s) / vf.rho) + beta) ** (2.0 * alpha)


def default_volume_sample(rho: float = 1.0, n: int = 10) -> list[tuple[float, float]]:
    """Log-uniform (|x|, s) grid over |x| in [rho, 1e3 rho], s in [1e-2, 1e3]; n*n pairs."""
    xs = rho * np.geomspace(1.0, 1e3, n)
    ss = np.geomspace(1e-2, 1e3, n)
    return [(float(a), float(b)) for a in xs for b in ss]


@dataclass
class VolumeSweepReport:
    c0_empirical: float
    c0_doubled: float
    c0_relative_change: float
    upper_constant: float
    upper_violations: int
    max_upper_ratio: float
    aux_violations: dict
    doubling_max: float
    doubling_bound: float
    n_pairs: int

    @property
    def passed(self) -> bool:
        return (self.c0_empirical > 0 and self.c0_relative_change <= 0.1 and self.upper_violations == 0
                and not any(self.aux_violations.values()) and self.doubling_max <= self.doubling_bound)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["aux_violations"] = {str(k): v for k, v in self.aux_violations.items()}
        out["passed"] = self.passed
        return out


def _c0(vf, sample):
    return min(volume(vf, x, s) / volume_scale(vf, x, s) for x, s in sample)


def volume_bounds_sweep(vf: VolumeFunctional, sample=None, doubled_sample=None,
                        deltas=(0.1, 0.5, 0.9)) -> VolumeSweepReport:
    """Empirical lower constant c0, the upper constant pi, the auxiliary log estimate and doubling."""
    alpha, _ = _weight_params(vf.weight)
    sample = default_volume_sample(vf.rho) if sample is None else list(sample)
    if doubled_sample is None:
        k = int(round(math.sqrt(len(sample))))
        doubled_sample = default_volume_sample(vf.rho, 2 * k - 1)
    ratios = []
    vols = {}
    for x, s in sample:
        v = volume(vf, x, s)
        vols[(x, s)] = v
        ratios.append(v / volume_scale(vf, x, s))
    c0 = min(ratios)
    c0d = _c0(vf, doubled_sample)
    upper = [r / math.pi for r in ratios]
    aux = {}
    for d in deltas:
        aux[d] = sum(1 for x, s in sample
                     if math.log((x + d * s) / vf.rho) < d * math.log((x + s) / vf.rho) - 1e-14)
    doubling = max(volume(vf, x, 2 * s) / vols[(x, s)] for x, s in sample)
    return VolumeSweepReport(
        c0_empirical=c0, c0_doubled=c0d, c0_relative_change=abs(c0d - c0) / c0,
        upper_constant=math.pi, upper_violations=sum(1 for u in upper if u > 1 + 1e-9),
        max_upper_ratio=max(upper), aux_violations=aux, doubling_max=doubling,
        doubling_bound=4 ** (alpha + 1) * math.pi / c0, n_pairs=len(sample))


@dataclass
class HarnackReport:
    ratios: dict
    threshold: float
    c: float
    monotone: bool

    def to_dict(self) -> dict:
        return {"ratios": {repr(k): v for k, v in self.ratios.items()}, "threshold": self.threshold,
                "c": self.c, "monotone": self.monotone}


def harnack_weight_check(weight, x0, r_list, rho: float = 1.0) -> HarnackReport:
    """sup of w over B(x0, 2r) against inf of w outside B(x0, r), for a radial nondecreasing weight.

    The sup sits at |x| = |x0| + 2r and the inf at |x| = max(rho, r - |x0|).
    Radii below the threshold |x0| + rho (where the obstacle still fits in
    B(x0, r)) are reported but do not enter c.
    """
    r0 = _radius_angle(x0)[0]
    ratios = {}
    for r in r_list:
        ratios[float(r)] = float(weight(r0 + 2.0 * r)) / float(weight(max(rho, r - r0)))
    threshold = r0 + rho
    above = [v for r, v in sorted(ratios.items()) if r >= threshold]
    c = max(above) if above else math.inf
    seq = [ratios[r] for r in sorted(ratios)]
    monotone = all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))
    return HarnackReport(ratios, threshold, c, monotone)


# ---------------------------------------------------------------- fitting

@dataclass
class FitResult:
    envelope: BoundEnvelope
    calibration_count: int
    validation_count: int
    excluded: int
    violations: int
    worst_ratio: float
    worst_sample: tuple | None
    records: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        env = self.envelope
        return {"kind": env.kind, "side": env.side, "lambda": env.lam, "C": env.C, "c": env.c,
                "exponent": env.power, "calibration": self.calibration_count,
                "validation": self.validation_count, "excluded": self.excluded,
                "violations": self.violations, "worst_ratio": self.worst_ratio,
                "worst_sample": self.worst_sample}


def _sample_tuple(s):
    if hasattr(s, "value"):
        return s.t, s.x, s.y, s.value
    return s


def fit_constants(env: BoundEnvelope, samples, calibration_fraction: float = 0.5,
                  c_grid=None, min_samples: int = 200, min_decades: float = 3.0) -> FitResult:
    """Two-window fit: tightest (C, c) valid on the early-time window, then count late-time violations.

    For each trial c the scale is the extreme kernel/shape ratio over the
    calibration window; c is then chosen to minimize the mean log gap.
    """
    data = sorted((_sample_tuple(s) for s in samples), key=lambda q: q[0])
    excluded = [q for q in data if env.in_exclusion(q[1]) or env.in_exclusion(q[2])]
    data = [q for q in data if not (env.in_exclusion(q[1]) or env.in_exclusion(q[2]))]
    if len(data) < min_samples:
        raise FitError(f"need at least {min_samples} samples outside the exclusion region, got {len(data)}")
    ts = np.array([q[0] for q in data])
    if math.log10(ts.max() / ts.min()) < min_decades - 1e-9:
        raise FitError(f"samples span fewer than {min_decades} decades of t")
    if not 0 < calibration_fraction < 1:
        raise FitError("calibration fraction must lie in (0, 1)")
    n_cal = int(round(calibration_fraction * len(data)))
    cal, val = data[:n_cal], data[n_cal:]
    if not cal or not val:
        raise FitError("both windows need samples")

    k_cal = np.array([q[3] for q in cal])
    if np.any(k_cal <= 0):
        bad = cal[int(np.argmin(k_cal))]
        raise FitError(f"unfittable: nonpositive kernel value at {bad[:3]}")
    shapes = np.array([env.shape(q[0], q[1], q[2]) for q in cal])
    has_offdiag = any(distance(q[1], q[2]) > 0 for q in cal) if env.dimension > 1 else \
        any(abs(_radius_angle(q[1])[0] - _radius_angle(q[2])[0]) > 0 for q in cal)
    grid = [env.c] if not has_offdiag else (np.geomspace(1.0 / 64, 64.0, 49) if c_grid is None else c_grid)

    best = None
    for c in grid:
        g = np.array([env.gaussian(q[0], q[1], q[2], c) for q in cal])
        base = shapes * g
        if np.any(base <= 0):
            continue
        with np.errstate(over="ignore"):  # trial c values that overflow are discarded below
            ratio = k_cal / base
        scale = ratio.min() if env.is_lower else ratio.max()
        if not np.isfinite(scale) or scale <= 0:
            continue
        gap = np.mean(np.abs(np.log(ratio / scale)))
        if best is None or gap < best[0]:
            best = (gap, float(c), float(scale))
    if best is None:
        worst = cal[int(np.argmax(k_cal))]
        raise FitError(f"unfittable envelope; worst sample {worst[:3]}")
    _, c_fit, scale = best
    C = 1.0 / scale if (env.is_lower and env.kind != "lower_2d") else scale
    fitted = env.with_constants(C, c_fit)

    violations = 0
    worst_ratio = -math.inf
    worst = None
    records = []
    for i, q in enumerate(data):
        e = eval_envelope(fitted, q[0], q[1], q[2])
        records.append((q[0], q[1], q[2], q[3], e))
        if i < n_cal:
            continue
        ratio = (q[3] / e) if not fitted.is_lower else (e / q[3] if q[3] > 0 else math.inf)
        if ratio > 1.0 + 1e-12:
            violations += 1
        if ratio > worst_ratio:
            worst_ratio, worst = ratio, (q[0], q[1], q[2])
    return FitResult(fitted, len(cal), len(val), len(excluded), violations, float(worst_ratio), worst, records)


@dataclass(frozen=True)
class DecayFit:
    regressor_kind: str
    window: tuple
    slope: float
    slope_stderr: float
    intercept: float
    n: int

    def to_dict(self) -> dict:
        return {"regressor_kind": self.regressor_kind, "window": list(self.window), "slope": self.slope,
                "slope_stderr": self.slope_stderr, "intercept": self.intercept, "n": self.n}


REGRESSOR_KINDS = ("loglog_t", "log_t")


def decay_regressors(t, k, kind: str):
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    if kind == "loglog_t":
        return np.log(np.log(t)), np.log(t * k)
    if kind == "log_t":
        return np.log(t), np.log(k)
    raise ValueError(f"unknown regressor kind {kind!r}")


def fit_decay(samples, kind: str = "loglog_t", min_decades: float = 3.0) -> DecayFit:
    """Least-squares decay slope from on-diagonal samples (KernelSample list or (t, k) arrays).

    ``loglog_t`` regresses log(t k) on log log t; ``log_t`` regresses log k on log t.
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        t, k = (np.asarray(a, dtype=float) for a in samples)
    else:
        samples = list(samples)
        t = np.array([s.t for s in samples])
        k = np.array([s.value for s in samples])
    if t.size < 3:
        raise FitError("need at least three samples")
    span = math.log10(t.max() / t.min())
    if span < min_decades - 1e-9:
        raise FitError(f"time window spans {span:.2f} decades, need {min_decades}")
    if kind == "loglog_t" and t.min() <= 1.0:
        raise FitError("loglog_t regression needs t > 1")
    if np.any(k <= 0):
        raise FitError("kernel values must be positive")
    xr, yr = decay_regressors(t, k, kind)
    res = stats.linregress(xr, yr)
    return DecayFit(kind, (float(t.min()), float(t.max())), float(res.slope), float(res.stderr),
                    float(res.intercept), int(t.size))


def expected_slope(dimension: int, lam: float = 0.0, boundary: str = "robin") -> tuple[str, float]:
    """Regressor kind and the slope predicted by the asymptotic decay law."""
    if dimension == 2 and boundary in ("robin", "dirichlet"):
        return "loglog_t", -decay_exponent(lam)
    if dimension == 2:
        return "log_t", -1.0
    if dimension == 1:
        return ("log_t", -0.5) if boundary == "neumann" else ("log_t", -0.5 - decay_exponent(lam) / 2.0)
    return "log_t", -dimension / 2.0


def write_fit_report(path_json, path_csv, fit: FitResult) -> None:
    with open(path_json, "w") as fh:
        json.dump(fit.summary(), fh, indent=2, sort_keys=True)
    with open(path_csv, "w", newline="") as fh:
        fh.write(f"# kind={fit.envelope.kind} side={fit.envelope.side}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "rx", "thx", "ry", "thy", "kernel", "envelope"])
        for t, x, y, k, e in fit.records:
            (rx, tx), (ry, ty) = _radius_angle(x), _radius_angle(y)
            writer.writerow([f"{v:.17g}" for v in (t, rx, tx, ry, ty, k, e)])

