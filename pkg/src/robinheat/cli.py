"""Command-line runner: plain-text experiment configs, batch subcommands and artifacts.

Exit codes: 0 when every check passes, 1 when a numeric check fails, 2 for
configuration or argument errors.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import assemble, transform_residual
from .bounds import (ENVELOPE_KINDS, FitError, VolumeFunctional,
                     default_volume_sample, expected_slope, fit_decay, harnack_weight_check,
                     volume_bounds_sweep, write_fit_report, decay_regressors)
from .experiments import (POTENTIAL_CHOICES, diagonal_decay, envelope_samples, make_domain,
                          reference_potential, validate_envelopes)
from .grid import SPACINGS, GridError, build_grid
from .heat import (KernelEngine, chapman_kolmogorov_residual, eigensolve, free_kernel, full_lumped_mass,
                   read_queries, submarkov_mass, weighted_kernel_identity_check, write_samples)
from .potentials import (Indicator, LogWeight2D, Zero, critical_potential, hardy_weight, u_infty_2d,
                         u_sigma_1d, u_sigma_2d)
from .spectral import (family_sweep, hardy_constant_lower, hardy_sharpness_sequence,
                       lieb_constant, verify_lieb_trace_bound)

ENV_PREFIX = "ROBINHEAT_"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2
SECTIONS = ("experiment", "domain", "grid", "potential", "operator", "queries", "checks")
POTENTIAL_KINDS = ("none", "u_sigma", "critical", "u_infty", "hardy", "indicator")
CHECK_NAMES = ("symmetry", "positivity", "chapman_kolmogorov", "submarkov", "decay_slope", "wall",
               "free_kernel", "neumann_image", "transform", "mode_truncation")
FULL_ROW_LIMIT = 4096


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _line_numbers(text: str) -> dict:
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
        elif section and line and line[0] not in "#;" and "=" in line:
            out[(section, line.split("=", 1)[0].strip().lower())] = i
    return out


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    name: str
    dimension: int
    boundary: str
    sigma0: float
    rho: float
    r_max: float
    n: int
    spacing: str
    h_min: float | None
    focus: float | None
    potential: str
    potential_params: dict
    lam: float
    mode_cap: int
    queries: list
    checks: dict
    output_dir: str
    text: str = field(repr=False, default="")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def domain(self):
        return make_domain(self.dimension, self.boundary, self.sigma0, self.rho)


def _effective_parser(text: str, environ) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    for key, value in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        section, _, option = key[len(ENV_PREFIX):].lower().partition("_")
        if section not in SECTIONS or not option:
            raise ConfigError(f"environment override {key} does not name a section and key")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value)
    return parser


def _canonical_text(parser: configparser.ConfigParser) -> str:
    lines = []
    for section in sorted(parser.sections()):
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {parser.get(section, k)}" for k in sorted(parser.options(section)))
    return "\n".join(lines) + "\n"


def parse_config(text: str, environ=None, tolerance_scale: float = 1.0, source: str = "<config>") -> ExperimentConfig:
    """Parse the sectioned key = value format; environment variables ROBINHEAT_<SECTION>_<KEY> override."""
    environ = os.environ if environ is None else environ
    lines = _line_numbers(text)
    parser = _effective_parser(text, environ)

    def where(section, key):
        n = lines.get((section, key))
        return f"{source}:{n}" if n else f"{source} (environment)"

    def get(section, key, conv=str, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                raise ConfigError(f"{source}: missing [{section}] {key}")
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where(section, key)}: bad value {raw!r} for [{section}] {key}: {exc}") from exc

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")

    dimension = get("domain", "dimension", int, required=True)
    boundary = get("domain", "boundary", str, "robin").lower()
    sigma0 = get("domain", "sigma0", float, 1.0 if boundary == "robin" else 0.0)
    rho = get("domain", "rho", float, 0.0 if dimension == 1 else 1.0)
    if dimension == 1:
        rho = 0.0
    if boundary not in ("robin", "dirichlet", "neumann"):
        raise ConfigError(f"{where('domain', 'boundary')}: unknown boundary {boundary!r}")
    spacing = get("grid", "spacing", str, "log")
    if spacing not in SPACINGS:
        raise ConfigError(f"{where('grid', 'spacing')}: unknown spacing {spacing!r}")
    potential = get("potential", "kind", str, "none").lower()
    if potential not in POTENTIAL_KINDS:
        raise ConfigError(f"{where('potential', 'kind')}: unknown potential {potential!r}")
    params = {k: get("potential", k, float) for k in ("a", "r1", "r2") if parser.has_option("potential", k)}

    queries = []
    if parser.has_option("queries", "t_sweep"):
        start, stop, count = get("queries", "t_sweep", _floats)
        times = list(np.geomspace(start, stop, int(count)))
    else:
        times = get("queries", "times", _floats, [])
    xs = get("queries", "x", _floats, [])
    ys = get("queries", "y", _floats, xs)
    thx = get("queries", "thx", _floats, [0.0] * len(xs))
    thy = get("queries", "thy", _floats, [0.0] * len(ys))
    if not (len(xs) == len(ys) == len(thx) == len(thy)):
        raise ConfigError(f"{where('queries', 'x')}: x, y, thx, thy must have equal lengths")
    for t in times:
        if not t > 0:
            raise ConfigError(f"{where('queries', 'times')}: query times must be positive")
        for i in range(len(xs)):
            queries.append((float(t), (xs[i], thx[i]), (ys[i], thy[i])))
    queries.extend(get("queries", "file", read_queries, []))

    checks = {}
    if parser.has_section("checks"):
        for name in parser.options("checks"):
            if name not in CHECK_NAMES:
                raise ConfigError(f"{where('checks', name)}: unknown check {name!r}")
            tol = get("checks", name, float)
            if not tol > 0:
                raise ConfigError(f"{where('checks', name)}: tolerance must be positive")
            checks[name] = tol * tolerance_scale

    return ExperimentConfig(
        name=get("experiment", "name", str, "experiment"),
        dimension=dimension, boundary=boundary, sigma0=sigma0, rho=rho,
        r_max=get("grid", "r_max", float, required=True), n=get("grid", "n", int, required=True),
        spacing=spacing, h_min=get("grid", "h_min", float), focus=get("grid", "focus", float),
        potential=potential, potential_params=params,
        lam=get("operator", "lambda", float, 0.0), mode_cap=get("operator", "mode_cap", int, 0),
        queries=queries, checks=checks, output_dir=get("experiment", "output_dir", str, "out"),
        text=_canonical_text(parser),
    )


def load_config(path, environ=None, tolerance_scale: float = 1.0) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, environ, tolerance_scale, str(path))


def build_potential(cfg: ExperimentConfig, domain):
    kind = cfg.potential
    if kind == "none":
        return Zero()
    if kind == "u_sigma":
        return u_sigma_1d(cfg.sigma0) if cfg.dimension == 1 else u_sigma_2d(cfg.rho, cfg.sigma0)
    if kind == "critical":
        return critical_potential(domain, cfg.lam)
    if kind == "u_infty":
        return u_infty_2d(cfg.rho)
    if kind == "hardy":
        return hardy_weight(cfg.rho, cfg.sigma0 if cfg.boundary == "robin" else math.inf)
    p = cfg.potential_params
    try:
        return Indicator(p["a"], p["r1"], p["r2"])
    except KeyError as exc:
        raise ConfigError(f"indicator potential needs a, r1, r2 (missing {exc})") from exc


# ---------------------------------------------------------------------------
# artifacts


def _fmt(v) -> str:
    return f"{v:.17g}"


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_table(path: Path, header, rows, metadata: dict | None = None) -> None:
    with open(path, "w") as fh:
        for k, v in (metadata or {}).items():
            fh.write(f"# {k}={v}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def _figure(path: Path, series, xlabel: str, ylabel: str, logx=True, logy=True, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, x, y, style in series:
        ax.plot(x, y, style, label=label, ms=3)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# run


@dataclass
class RunManifest:
    name: str
    config_hash: str
    tool_version: str
    checks: dict
    timing: dict
    artifacts: list

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    @property
    def failing(self) -> list:
        return [k for k, c in self.checks.items() if not c["passed"]]

    def to_dict(self) -> dict:
        return {"name": self.name, "config_hash": self.config_hash, "tool_version": self.tool_version,
                "checks": self.checks, "timing": self.timing, "artifacts": self.artifacts,
                "passed": self.passed}


def _solve_modes(domain, grid, potential, lam, modes, radii, threads: int):
    def one(mode):
        return eigensolve(assemble(domain, grid, mode, potential, lam), lam, radii=radii, check=False)

    if threads > 1 and len(modes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, modes))  # map preserves mode order
    return [one(m) for m in modes]


def _run_checks(cfg: ExperimentConfig, domain, grid, potential, engine: KernelEngine, samples, threads: int) -> dict:
    out = {}
    vals = np.array([s.value for s in samples])
    for name, tol in cfg.checks.items():
        value = math.nan
        if name == "symmetry":
            swapped = np.array([engine.kernel(s.t, s.y, s.x).value for s in samples])
            value = float(np.max(np.abs(vals - swapped) / np.abs(vals))) if samples else 0.0
            ok = value <= tol
        elif name == "positivity":
            value = float(vals.min()) if samples else math.nan
            ok = bool(samples) and value > 0
        elif name == "wall":
            value = float(sum(s.truncation_wall_error_flag for s in samples))
            ok = value == 0
        elif name == "mode_truncation":
            value = float(max((s.mode_truncation_error / abs(s.value) for s in samples), default=0.0))
            ok = value <= tol
        elif name in ("chapman_kolmogorov", "submarkov"):
            if grid.size > FULL_ROW_LIMIT:
                raise ConfigError(f"{name} keeps full kernel matrices; use n <= {FULL_ROW_LIMIT}")
            form = assemble(domain, grid, 0, potential, cfg.lam)
            basis = eigensolve(form, cfg.lam, check=False)
            mass = full_lumped_mass(form)
            t0 = samples[0].t if samples else 1.0
            if name == "chapman_kolmogorov":
                value = chapman_kolmogorov_residual(basis, mass, t0, t0)
            else:
                if cfg.lam != 0:
                    raise ConfigError("submarkov check needs lambda = 0")
                keep = grid.nodes <= grid.r_max / 4.0
                times = sorted({s.t for s in samples if s.t <= engine.t_safe}) or [t0]
                value = max(float(submarkov_mass(basis, mass, t)[keep].max()) for t in times) - 1.0
            ok = value <= tol
        elif name == "decay_slope":
            diag = [s for s in samples if s.x == s.y and s.x == samples[0].x]
            kind, target = expected_slope(cfg.dimension, cfg.lam, cfg.boundary)
            fit = fit_decay(diag, kind)
            value = fit.slope - target
            ok = abs(value) <= tol
        elif name == "free_kernel":
            errs = [abs(s.value / free_kernel(cfg.dimension, s.t, 0.0) - 1.0) for s in samples if s.x == s.y]
            value = float(max(errs, default=math.nan))
            ok = bool(errs) and value <= tol
        elif name == "neumann_image":
            if cfg.dimension != 1 or cfg.boundary != "neumann":
                raise ConfigError("neumann_image needs the Neumann half-line")
            errs = [abs(s.value / (2.0 / math.sqrt(4.0 * math.pi * s.t)) - 1.0)
                    for s in samples if s.x[0] == 0.0 and s.y[0] == 0.0]
            value = float(max(errs, default=math.nan))
            ok = bool(errs) and value <= tol
        elif name == "transform":
            errs = [weighted_kernel_identity_check(domain, grid, cfg.lam, s.t, s.x, s.y) for s in samples]
            value = float(max(errs, default=math.nan))
            ok = bool(errs) and value <= tol
        out[name] = {"passed": bool(ok), "value": value, "tolerance": tol}
    return out


def run(cfg: ExperimentConfig, out_dir: Path | None = None, threads: int = 1) -> RunManifest:
    """assembly -> eigensolve -> queries -> checks, with CSV/JSON/PNG artifacts."""
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    domain = cfg.domain()
    grid = build_grid(domain, cfg.r_max, cfg.n, cfg.spacing, cfg.focus, cfg.h_min)
    potential = build_potential(cfg, domain)
    radii = sorted({p[0] for _, x, y in cfg.queries for p in (x, y)})
    modes = list(range(cfg.mode_cap + 1)) if cfg.dimension > 1 else [0]
    t_setup = time.perf_counter()
    bases = _solve_modes(domain, grid, potential, cfg.lam, modes, radii or None, threads)
    engine = KernelEngine(bases, cfg.dimension)
    t_solve = time.perf_counter()
    samples = engine.samples(cfg.queries)
    checks = _run_checks(cfg, domain, grid, potential, engine, samples, threads)
    t_done = time.perf_counter()

    meta = {"name": cfg.name, "config_hash": cfg.config_hash, "tool_version": __version__,
            "dimension": cfg.dimension, "boundary": cfg.boundary, "lambda": _fmt(cfg.lam),
            "n": cfg.n, "r_max": _fmt(cfg.r_max), "mode_cap": cfg.mode_cap, "t_safe": _fmt(engine.t_safe)}
    artifacts = ["kernel.csv", "checks.json"]
    write_samples(out / "kernel.csv", samples, meta)
    _write_json(out / "checks.json", checks)
    if samples:
        series = {}
        for s in samples:
            series.setdefault((s.x, s.y), []).append((s.t, s.value))
        if any(len(v) > 1 for v in series.values()):
            _figure(out / "kernel.png",
                    [(f"x={x}, y={y}", *zip(*sorted(v)), ".-") for (x, y), v in series.items() if len(v) > 1],
                    "t", "k(t,x,y)", title=cfg.name)
            artifacts.append("kernel.png")
    manifest = RunManifest(cfg.name, cfg.config_hash, __version__, checks,
                           {"setup": t_setup - start, "eigensolve": t_solve - t_setup,
                            "queries_and_checks": t_done - t_solve, "total": time.perf_counter() - start},
                           artifacts + ["manifest.json"])
    _write_json(out / "manifest.json", manifest.to_dict())
    return manifest


# ---------------------------------------------------------------------------
# subcommands


def _emit(out: Path, name: str, payload: dict) -> None:
    _write_json(out / f"{name}.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def cmd_run(args) -> int:
    path = args.config_path or args.config
    if path is None:
        raise ConfigError("run needs a config path (positional or --config)")
    cfg = load_config(path, tolerance_scale=args.tolerance_scale)
    manifest = run(cfg, Path(args.out) if args.out else None, args.threads)
    print(json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=_json_default))
    if not manifest.passed:
        print("failing checks: " + ", ".join(manifest.failing), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_kernel(args) -> int:
    domain = make_domain(args.dimension, args.boundary, args.sigma0)
    grid = build_grid(domain, args.r_max, args.n, args.spacing)
    if args.queries:
        queries = read_queries(args.queries)
    else:
        queries = [(t, (args.x, args.thx), (args.y, args.thy)) for t in args.times]
    radii = sorted({p[0] for _, x, y in queries for p in (x, y)})
    potential = reference_potential(domain, args.lam, args.potential)
    modes = list(range(args.modes + 1)) if args.dimension > 1 else [0]
    engine = KernelEngine(_solve_modes(domain, grid, potential, args.lam, modes, radii, args.threads), args.dimension)
    samples = engine.samples(queries)
    write_samples(args.out / "kernel.csv", samples,
                  {"dimension": args.dimension, "boundary": args.boundary, "lambda": _fmt(args.lam),
                   "n": args.n, "r_max": _fmt(args.r_max), "modes": args.modes})
    for s in samples:
        print(f"{_fmt(s.t)},{_fmt(s.value)},{_fmt(s.mode_truncation_error)},{int(s.truncation_wall_error_flag)}")
    return EXIT_OK


def cmd_fit_decay(args) -> int:
    study = diagonal_decay(args.lam, args.boundary, args.dimension, args.radius, args.r_max, args.n,
                           args.t_min, args.t_max, args.count, args.potential, args.sigma0, args.modes,
                           args.min_decades)
    tol = args.tolerance * args.tolerance_scale
    payload = study.to_dict()
    payload.update(tolerance=tol, passed=abs(study.deviation) <= tol, **{"lambda": args.lam})
    xr, yr = decay_regressors(study.times, study.values, study.fit.regressor_kind)
    _write_table(args.out / "decay.csv", ["regressor", "response"], zip(xr, yr),
                 {"regressor_kind": study.fit.regressor_kind, "lambda": _fmt(args.lam), "boundary": args.boundary})
    _write_table(args.out / "decay_kernel.csv", ["t", "k"], zip(study.times, study.values))
    _figure(args.out / "decay.png",
            [("kernel", xr, yr, "o"), ("fit", xr, study.fit.intercept + study.fit.slope * xr, "-")],
            study.fit.regressor_kind, "response", logx=False, logy=False,
            title=f"slope {study.fit.slope:.3f} (expected {study.expected:.3f})")
    _emit(args.out, "decay", payload)
    return EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED


def cmd_check_bounds(args) -> int:
    if args.kind not in ("two_sided_2d", "two_sided_1d"):
        raise ConfigError("check-bounds validates the two-sided kinds two_sided_2d and two_sided_1d")
    dim = 1 if args.kind == "two_sided_1d" else 2
    samples = envelope_samples(dim, args.lam, args.potential, args.n, args.r_max, args.t_min, args.t_max,
                               args.count, args.modes)
    sides = ("upper",) if args.exponent is not None else ("upper", "lower")
    fits = validate_envelopes(samples, args.kind, args.lam, args.exponent, sides, args.calibration_fraction)
    payload = {"kind": args.kind, "lambda": args.lam, "samples": len(samples), "sides": {}}
    series = []
    for side, fit in fits.items():
        write_fit_report(args.out / f"fit_{side}.json", args.out / f"fit_{side}.csv", fit)
        payload["sides"][side] = fit.summary()
        diag = [r for r in fit.records if r[1] == r[2] and r[1] == fit.records[0][1]]
        if side == "upper":
            series.append(("kernel", [r[0] for r in diag], [r[3] for r in diag], "o"))
        series.append((f"{side} envelope", [r[0] for r in diag], [r[4] for r in diag], "-"))
    _figure(args.out / "envelopes.png", series, "t", "k(t,x,x)", title=f"{args.kind} lambda={args.lam}")
    passed = all(f.passed for f in fits.values())
    payload["passed"] = passed
    _emit(args.out, "bounds", payload)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_hardy(args) -> int:
    domain = make_domain(2, "dirichlet" if args.dirichlet else "robin", args.sigma0)
    grid = build_grid(domain, args.r_max, args.n)
    value = hardy_constant_lower(domain, grid)
    threshold = 0.25 - 1e-3 * args.tolerance_scale
    payload = {"boundary": str(domain.boundary), "r_max": args.r_max, "n": args.n, "constant_lower": value,
               "threshold": threshold, "passed": value >= threshold}
    if not args.dirichlet and args.sequence:
        probes = hardy_sharpness_sequence(args.sequence, grid, args.sigma0, args.profile)
        payload["sequence"] = [p.to_dict() for p in probes]
        _write_table(args.out / "hardy_sequence.csv", ["n", "rayleigh_quotient", "constant_estimate"],
                     [(p.n, p.rayleigh_quotient, p.constant_estimate) for p in probes], {"profile": args.profile})
        _figure(args.out / "hardy_sequence.png",
                [("discrete", [p.n for p in probes], [p.rayleigh_quotient - 0.25 for p in probes], "o-"),
                 ("quadrature", [p.n for p in probes], [p.constant_estimate - 0.25 for p in probes], "x--")],
                "n", "quotient - 1/4")
    _emit(args.out, "hardy", payload)
    return EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED


def cmd_eigen(args) -> int:
    domain = make_domain(args.dimension, args.boundary, args.sigma0)
    grid = build_grid(domain, args.r_max, args.n, args.spacing, h_min=args.h_min)
    if args.potential == "hardy":
        potential = hardy_weight(domain.rho, args.sigma0 if args.boundary == "robin" else math.inf)
    else:
        potential = reference_potential(domain, args.lam, args.potential)
    form = assemble(domain, grid, args.mode, potential, args.lam)
    basis = eigensolve(form, args.lam, radii=[grid.r_min], check=True)
    k = min(args.count, basis.eigenvalues.size)
    _write_table(args.out / "eigenvalues.csv", ["index", "eigenvalue"],
                 [(i, float(v)) for i, v in enumerate(basis.eigenvalues[:k])],
                 {"mode": args.mode, "lambda": _fmt(args.lam), "residual": _fmt(basis.residual)})
    payload = {"mode": args.mode, "lambda": args.lam, "lowest": basis.eigenvalues[:k].tolist(),
               "n_negative": basis.n_negative, "residual": basis.residual}
    _emit(args.out, "eigen", payload)
    return EXIT_OK


def cmd_hlt(args) -> int:
    domain = make_domain(2, "dirichlet")
    grid = build_grid(domain, args.r_max, args.n)
    shape = Indicator(1.0, args.r1, args.r2)
    payload = {"bound": args.bound, "lambda": args.lam, "family": args.family}
    passed = True
    if args.bound == "lieb":
        reports = [verify_lieb_trace_bound(domain, grid, shape.scaled(a), args.gamma, args.b, lam=args.lam)
                   for a in args.family]
        payload["L"] = lieb_constant(args.b, args.gamma)
        payload["reports"] = [r.to_dict() for r in reports]
        passed = all(r.holds for r in reports)
        rows = [(a, r.moment_value, r.rhs_bound) for a, r in zip(args.family, reports)]
        _write_table(args.out / "lieb.csv", ["a", "left", "right"], rows)
        _figure(args.out / "lieb.png", [("left", args.family, [r[1] for r in rows], "o-"),
                                        ("right", args.family, [r[2] for r in rows], "s-")], "a", "value")
    else:
        sweep = family_sweep(args.bound, domain, grid, shape, args.family, args.gamma, args.lam)
        payload.update(sweep.to_dict())
        payload["counts"] = [int(r.extra.get("count", 0)) for r in sweep.reports]
        _write_table(args.out / f"{args.bound}.csv", ["a", "ratio"], zip(sweep.parameters, sweep.ratios))
    payload["passed"] = passed
    _emit(args.out, args.bound, payload)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_volume(args) -> int:
    vf = VolumeFunctional(2, LogWeight2D(args.alpha, args.beta, 1.0))
    base = default_volume_sample(1.0, 10 if args.sweep == "default" else 14)
    report = volume_bounds_sweep(vf, base)
    harnack = harnack_weight_check(LogWeight2D(args.alpha, args.beta, 1.0), (2.0, 0.0), [10.0, 100.0, 1000.0])
    beta_sweep = {b: harnack_weight_check(LogWeight2D(args.alpha, b, 1.0), (2.0, 0.0), [100.0]).c
                  for b in (0.1, 1.0, 10.0)}
    spread = (max(beta_sweep.values()) - min(beta_sweep.values())) / min(beta_sweep.values())
    payload = {"volume": report.to_dict(), "harnack": harnack.to_dict(),
               "harnack_beta_sweep": {repr(k): v for k, v in beta_sweep.items()}, "harnack_beta_spread": spread,
               "passed": bool(report.passed and harnack.monotone and math.isfinite(harnack.c) and spread < 0.2)}
    _emit(args.out, "volume", payload)
    return EXIT_OK if payload["passed"] else EXIT_CHECK_FAILED


def cmd_transform_check(args) -> int:
    domain = make_domain(args.dimension, "robin", args.sigma0)
    rows, passed = [], True
    for lam in args.lambdas:
        res = [transform_residual(domain, build_grid(domain, args.r_max, n), lam) for n in args.sizes]
        ratios = [a / b if b > 0 else math.inf for a, b in zip(res[:-1], res[1:])]
        ok = all(r >= args.min_ratio for r in ratios)
        passed &= ok
        rows.append({"lambda": lam, "sizes": args.sizes, "residuals": res, "ratios": ratios, "passed": ok})
    _write_table(args.out / "transform.csv", ["lambda", "n", "residual"],
                 [(r["lambda"], n, v) for r in rows for n, v in zip(r["sizes"], r["residuals"])])
    _emit(args.out, "transform", {"dimension": args.dimension, "rows": rows, "passed": passed})
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _int_list(text: str) -> list[int]:
    return [int(float(v)) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return _floats(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", default=None, help="experiment config (sections of key = value lines)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1, help="concurrent per-mode eigensolves")
    common.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every check tolerance")

    p = argparse.ArgumentParser(prog="robinheat", description=__doc__.splitlines()[0], parents=[common],
                                allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub_kw = {"allow_abbrev": False}

    def grid_args(q, dimension=2, r_max=1e4, n=2048):
        q.add_argument("--dimension", type=int, default=dimension, choices=(1, 2, 3))
        q.add_argument("--boundary", default="robin", choices=("robin", "dirichlet", "neumann"))
        q.add_argument("--sigma0", type=float, default=1.0)
        q.add_argument("--r-max", type=float, default=r_max)
        q.add_argument("--n", type=int, default=n)

    q = sub.add_parser("run", parents=[common], **sub_kw, help="execute a config")
    q.add_argument("config_path", nargs="?")
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("kernel", parents=[common], **sub_kw, help="heat-kernel queries")
    grid_args(q)
    q.add_argument("--spacing", default="log", choices=SPACINGS)
    q.add_argument("--lambda", dest="lam", type=float, default=0.0)
    q.add_argument("--potential", default="u_sigma", choices=POTENTIAL_CHOICES)
    q.add_argument("--modes", type=int, default=0)
    q.add_argument("--queries", help="CSV with columns t,rx,thx,ry,thy")
    q.add_argument("--times", type=_float_list, default=[1.0])
    q.add_argument("--x", type=float, default=2.0)
    q.add_argument("--y", type=float, default=2.0)
    q.add_argument("--thx", type=float, default=0.0)
    q.add_argument("--thy", type=float, default=0.0)
    q.set_defaults(func=cmd_kernel)

    q = sub.add_parser("fit-decay", parents=[common], **sub_kw, help="on-diagonal decay regression")
    grid_args(q, r_max=1e5, n=8192)
    q.add_argument("--lambda", dest="lam", type=float, default=0.0)
    q.add_argument("--potential", default="u_sigma", choices=POTENTIAL_CHOICES)
    q.add_argument("--radius", type=float, default=2.0)
    q.add_argument("--t-min", type=float, default=1e3)
    q.add_argument("--t-max", type=float, default=1e7)
    q.add_argument("--count", type=int, default=41)
    q.add_argument("--modes", type=int, default=1)
    q.add_argument("--min-decades", type=float, default=3.0)
    q.add_argument("--tolerance", type=float, default=0.2)
    q.set_defaults(func=cmd_fit_decay)

    q = sub.add_parser("check-bounds", parents=[common], **sub_kw, help="two-window envelope validation")
    q.add_argument("--kind", default="two_sided_2d", choices=ENVELOPE_KINDS)
    q.add_argument("--lambda", dest="lam", type=float, default=0.0)
    q.add_argument("--potential", default="u_sigma", choices=POTENTIAL_CHOICES)
    q.add_argument("--exponent", type=float, default=None, help="override the log power (negative control)")
    q.add_argument("--r-max", type=float, default=1e5)
    q.add_argument("--n", type=int, default=2048)
    q.add_argument("--t-min", type=float, default=10.0)
    q.add_argument("--t-max", type=float, default=1e7)
    q.add_argument("--count", type=int, default=48)
    q.add_argument("--modes", type=int, default=30)
    q.add_argument("--calibration-fraction", type=float, default=0.5)
    q.set_defaults(func=cmd_check_bounds)

    q = sub.add_parser("hardy", parents=[common], **sub_kw, help="Hardy constant and sharpness sequence")
    q.add_argument("--dirichlet", action="store_true")
    q.add_argument("--sigma0", type=float, default=1.0)
    q.add_argument("--r-max", type=float, default=1e4)
    q.add_argument("--n", type=int, default=8192)
    q.add_argument("--sequence", type=_float_list, default=[10.0, 100.0, 1000.0])
    q.add_argument("--profile", default="literal", choices=("literal", "loglog"))
    q.set_defaults(func=cmd_hardy)

    q = sub.add_parser("eigen", parents=[common], **sub_kw, help="lowest eigenvalues of one radial mode")
    grid_args(q)
    q.add_argument("--spacing", default="log", choices=SPACINGS)
    q.add_argument("--h-min", type=float, default=None)
    q.add_argument("--lambda", dest="lam", type=float, default=0.0)
    q.add_argument("--potential", default="u_sigma", choices=POTENTIAL_CHOICES + ("hardy",))
    q.add_argument("--mode", type=int, default=0)
    q.add_argument("--count", type=int, default=10)
    q.set_defaults(func=cmd_eigen)

    q = sub.add_parser("hlt", parents=[common], **sub_kw, help="eigenvalue-moment bounds over a potential family")
    q.add_argument("--bound", default="hlt", choices=("hlt", "hclr", "lieb"))
    q.add_argument("--gamma", type=float, default=1.0)
    q.add_argument("--lambda", dest="lam", type=float, default=1.0)
    q.add_argument("--b", type=float, default=1.0)
    q.add_argument("--family", type=_float_list, default=[1.0, 2.0, 4.0, 8.0])
    q.add_argument("--r1", type=float, default=2.0)
    q.add_argument("--r2", type=float, default=3.0)
    q.add_argument("--r-max", type=float, default=1e4)
    q.add_argument("--n", type=int, default=2048)
    q.set_defaults(func=cmd_hlt)

    q = sub.add_parser("volume", parents=[common], **sub_kw, help="volume lemmas and Harnack weight comparison")
    q.add_argument("--sweep", default="default", choices=("default", "dense"))
    q.add_argument("--alpha", type=float, default=1.0)
    q.add_argument("--beta", type=float, default=1.0)
    q.set_defaults(func=cmd_volume)

    q = sub.add_parser("transform-check", parents=[common], **sub_kw, help="ground-state transform refinement study")
    q.add_argument("--dimension", type=int, default=1, choices=(1, 2))
    q.add_argument("--sigma0", type=float, default=1.0)
    q.add_argument("--lambdas", type=_float_list, default=[0.0, 0.5, 1.0])
    q.add_argument("--sizes", type=_int_list, default=[512, 1024])
    q.add_argument("--r-max", type=float, default=100.0)
    q.add_argument("--min-ratio", type=float, default=3.5)
    q.set_defaults(func=cmd_transform_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.command != "run":
        args.out = Path(args.out or "out")
        args.out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except (ConfigError, GridError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
