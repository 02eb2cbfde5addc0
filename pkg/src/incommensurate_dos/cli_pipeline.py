"""Command-line orchestration, finite-difference term estimates and reports.

Subcommands: ``dos``, ``expansion-terms``, ``compare``, ``critical-points``,
``harmonic``, ``wigner-overlay``.  Every run writes CSV files with
``#``-prefixed metadata and a ``manifest.txt`` recording the resolved
configuration, the output hashes and the run status.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bloch_symbol import band_surface, band_surfaces, k_grid, X_grid
from .config import RunConfig, format_value, parse_config, read_config, schema_field
from .core_model import DosCurve, EnergyGrid, PotentialSpec
from .effective_harmonic import (HarmonicDosModel, find_critical_points, harmonic_dos,
                                 level_set_overlay, wigner_field)
from .errors import ConfigurationError, DomainError
from .momentum_space import REDUCED_PROFILE, TruncationParams, error_balance_defaults, momentum_space_dos
from .parallel import resolve_threads
from .semiclassical import SemiclassicalQuadrature, expansion_terms

__all__ = ["parse_config", "RunConfig", "estimate_expansion_terms_fd", "compare_curves",
           "ComparisonReport", "run", "main"]

FD_LABEL = "quadratic interpolation in eps through three samples, extrapolated to eps = 0"


# ---------------------------------------------------------------------------
# Finite-difference estimates


def estimate_expansion_terms_fd(eps, curves):
    """Pointwise ``a + b eps + c eps^2`` through three ``(eps, curve)`` samples.

    Parameters
    ----------
    eps : three distinct positive values.
    curves : three DosCurve objects (same grid) or an array ``(3, n)``.

    Returns
    -------
    tuple of three arrays (or signed DosCurves when curves were given)
        Estimates of ``L0``, ``L1``, ``L2``.
    """
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (3,):
        raise DomainError(f"exactly three eps values are required, got {eps.shape}")
    if np.min(np.abs(np.subtract.outer(eps, eps)) + np.eye(3)) < 1e-14:
        raise DomainError(f"eps values must be distinct, got {eps.tolist()}")
    as_curves = all(isinstance(c, DosCurve) for c in curves)
    if as_curves:
        grid = curves[0].grid
        if any(c.grid != grid for c in curves):
            raise DomainError("curves must share the energy grid")
        Y = np.stack([c.values for c in curves])
    else:
        Y = np.asarray(curves, dtype=float)
    if Y.shape[0] != 3:
        raise DomainError(f"three curves are required, got {Y.shape[0]}")
    V = np.vander(eps, 3, increasing=True)
    coef = np.linalg.solve(V, Y.reshape(3, -1)).reshape(Y.shape)
    if not as_curves:
        return coef[0], coef[1], coef[2]
    meta = {"method": "finite-difference", "scheme": FD_LABEL, "eps": eps.tolist()}
    return tuple(DosCurve(grid, coef[i], {**meta, "term": f"L{i}"}, signed=True) for i in range(3))


# ---------------------------------------------------------------------------
# Comparison


@dataclass(frozen=True)
class WindowNorms:
    window: tuple
    sup: float
    l2: float
    rel_sup: float
    rel_l2: float


@dataclass
class ComparisonReport:
    """Difference norms per ``(eps, sigma)`` and window, plus remainder orders."""

    entries: dict = field(default_factory=dict)     # (eps, sigma) -> [WindowNorms]
    orders: list = field(default_factory=list)      # (sigma, window, eps1, eps2, ratio, order)

    def sup(self, eps, sigma, window):
        for w in self.entries[(eps, sigma)]:
            if w.window == tuple(window):
                return w.sup
        raise KeyError(window)

    def add_orders(self):
        """Remainder ratios ``r(eps2) / r(eps1)`` for consecutive eps per window."""
        self.orders = []
        sigmas = sorted({s for _, s in self.entries})
        for s in sigmas:
            eps = sorted(e for e, ss in self.entries if ss == s)
            for e1, e2 in zip(eps[:-1], eps[1:]):
                for w1, w2 in zip(self.entries[(e1, s)], self.entries[(e2, s)]):
                    ratio = w2.sup / w1.sup if w1.sup > 0 else math.inf
                    order = math.log(ratio) / math.log(e2 / e1) if 0 < ratio < math.inf else math.nan
                    self.orders.append((s, w1.window, e1, e2, ratio, order))
        return self

    def to_text(self, precision: int = 17) -> str:
        fmt = f".{precision}g"
        lines = ["# comparison report: a = momentum-space, b = second-order semiclassical",
                 "eps,sigma,E_lo,E_hi,sup,l2,rel_sup,rel_l2"]
        for (e, s), norms in sorted(self.entries.items()):
            for w in norms:
                lines.append(",".join(format(x, fmt) for x in
                                      (e, s, w.window[0], w.window[1], w.sup, w.l2, w.rel_sup, w.rel_l2)))
        if self.orders:
            lines.append("# remainder ratios r(eps2)/r(eps1) and implied order")
            lines.append("sigma,E_lo,E_hi,eps1,eps2,ratio,order")
            for s, w, e1, e2, ratio, order in self.orders:
                lines.append(",".join(format(x, fmt) for x in (s, w[0], w[1], e1, e2, ratio, order)))
        return "\n".join(lines) + "\n"


def window_norms(a: DosCurve, b: DosCurve, window) -> WindowNorms:
    lo, hi = window
    mask = a.grid.window_mask(lo, hi)
    if not mask.any():
        raise DomainError(f"window [{lo}, {hi}] contains no grid points")
    d = a.values[mask] - b.values[mask]
    sup = float(np.max(np.abs(d)))
    l2 = float(math.sqrt(np.sum(d * d) * a.grid.spacing))
    scale = float(np.max(np.abs(a.values)))
    rel = (lambda x: x / scale) if scale > 0 else (lambda x: 0.0 if x == 0 else math.inf)
    return WindowNorms((float(lo), float(hi)), sup, l2, rel(sup), rel(l2))


def compare_curves(a: DosCurve, b: DosCurve, windows=((-20.0, 20.0),), eps=None, sigma=None,
                   report: ComparisonReport | None = None) -> ComparisonReport:
    """Sup and L2 norms of ``a - b`` on each window; relative versions use ``max |a|``."""
    if a.grid != b.grid:
        raise DomainError("curves are on different energy grids")
    report = ComparisonReport() if report is None else report
    eps = a.meta.get("eps") if eps is None else eps
    sigma = a.meta.get("sigma") if sigma is None else sigma
    report.entries[(eps, sigma)] = [window_norms(a, b, w) for w in windows]
    return report


# ---------------------------------------------------------------------------
# Output


def _fmt(x, precision):
    return format(float(x), f".{precision}g")


def _meta_lines(meta: dict):
    for k in sorted(meta):
        v = meta[k]
        if isinstance(v, DosCurve):
            continue
        if isinstance(v, (list, tuple)):
            v = "[" + ", ".join(str(x) for x in v) + "]"
        yield f"# {k} = {v}\n"


def curves_csv(columns: dict, meta: dict, precision: int = 17) -> str:
    """CSV text; ``columns`` maps header names to equal-length arrays."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    out = list(_meta_lines(meta))
    out.append(",".join(names) + "\n")
    for row in zip(*data):
        out.append(",".join(_fmt(x, precision) for x in row) + "\n")
    return "".join(out)


def read_csv(path):
    """Metadata dict and column dict of a CSV written by this module."""
    meta, rows, header = {}, [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = line.strip().split(",")
            else:
                rows.append(line.strip().split(","))
    cols = {}
    for i, name in enumerate(header or []):
        vals = [r[i] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = vals
    return meta, cols


def version_string() -> str:
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                              text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        tag = desc.stdout.strip() if desc.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        tag = ""
    return f"{__version__}+{tag}" if tag else __version__


class Artifacts:
    """Output directory with a manifest tracking every written file."""

    def __init__(self, directory, config: RunConfig, command: str, args: dict):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.command = command
        self.args = args
        self.files: list[tuple[str, str]] = []

    @property
    def precision(self):
        return self.config["output.precision"]

    def write(self, name: str, text: str):
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.files.append((name, hashlib.sha256(text.encode()).hexdigest()))
        return path

    def manifest(self, status: str, error: str | None = None):
        lines = [f"version = {version_string()}", f"command = {self.command}",
                 f"status = {status}", f"config_sha256 = {self.config.digest()}"]
        if error:
            lines.append(f"error = {error}")
        for k, v in sorted(self.args.items()):
            lines.append(f"arg.{k} = {format_value(v)}")
        for k, v in self.config.items():
            lines.append(f"{k} = {format_value(v, schema_field(k).kind)}  # {self.config.provenance.get(k, 'default')}")
        for name, digest in self.files:
            lines.append(f"file.{name} = sha256:{digest}")
        (self.dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Jobs


def potential_from(config: RunConfig) -> PotentialSpec:
    return PotentialSpec.from_parameters(config["potential.A1"], config["potential.A2"],
                                         config["potential.sigma1"], config["potential.sigma2"])


def grid_from(config: RunConfig) -> EnergyGrid:
    return EnergyGrid(config["model.E_min"], config["model.E_max"], config["model.n_points"])


def truncation_from(config: RunConfig, sigma: float) -> TruncationParams:
    base = REDUCED_PROFILE if config["momentum.profile"] == "reduced" else error_balance_defaults(sigma)
    vals = {k: config[f"momentum.{k}"] for k in ("W", "L", "h")}
    return TruncationParams(*(getattr(base, k) if v == "auto" else v for k, v in vals.items()))


def quadrature_from(config: RunConfig) -> SemiclassicalQuadrature:
    return SemiclassicalQuadrature(config["semiclassical.n_k"], config["semiclassical.n_X"],
                                   config["semiclassical.E_cut"], config["semiclassical.band_margin"])


def _tag(x) -> str:
    return format(float(x), ".6g")


def momentum_curve(config, eps, sigma, threads) -> DosCurve:
    return momentum_space_dos(potential_from(config), eps, grid_from(config), sigma,
                              truncation_from(config, sigma), threads=threads,
                              rule=config["momentum.moment_rule"], kernel=config["momentum.kernel"],
                              tol=config["momentum.tol"], n_buckets=config["momentum.n_buckets"],
                              use_symmetry=config["momentum.symmetry"])


def _expansion(config, sigma, threads):
    return expansion_terms(potential_from(config), quadrature_from(config), grid_from(config),
                           sigma, threads)


def job_dos(config, art: Artifacts, threads, method: str):
    for sigma in config["model.sigma"]:
        if method == "semiclassical":
            res = _expansion(config, sigma, threads)
        for eps in config["model.eps"]:
            if method == "momentum":
                curve = momentum_curve(config, eps, sigma, threads)
            elif method == "semiclassical":
                curve = res.combined(eps)
            else:
                raise ConfigurationError(f"unknown method {method!r}")
            art.write(f"dos_{method}_eps{_tag(eps)}_sigma{_tag(sigma)}.csv",
                      curves_csv({"E": curve.energies, "value": curve.values}, curve.meta, art.precision))


def job_expansion_terms(config, art: Artifacts, threads):
    eps = config["model.eps"]
    for sigma in config["model.sigma"]:
        res = _expansion(config, sigma, threads)
        cols = {"E": res.L0.energies, "L0": res.L0.values, "L1": res.L1.values,
                "L2": res.L2.values, "L2_general": res.L2_general.values}
        meta = dict(res.meta)
        if config["compare.fd"]:
            if len(eps) != 3:
                raise ConfigurationError(f"the finite-difference estimate needs three eps values, got {len(eps)}")
            ms = [momentum_curve(config, e, sigma, threads) for e in eps]
            fd = estimate_expansion_terms_fd(eps, ms)
            cols.update({"L0_fd": fd[0].values, "L1_fd": fd[1].values, "L2_fd": fd[2].values})
            meta.update(fd_scheme=FD_LABEL, fd_eps=list(eps),
                        **{f"momentum_{k}": v for k, v in truncation_from(config, sigma).as_dict().items()})
        art.write(f"expansion_sigma{_tag(sigma)}.csv", curves_csv(cols, meta, art.precision))


def job_compare(config, art: Artifacts, threads):
    report = ComparisonReport()
    windows = config["compare.windows"]
    for sigma in config["model.sigma"]:
        res = _expansion(config, sigma, threads)
        for eps in config["model.eps"]:
            ms = momentum_curve(config, eps, sigma, threads)
            sc = res.combined(eps)
            compare_curves(ms, sc, windows, eps, sigma, report)
            meta = {**ms.meta, "semiclassical": "L0 + eps L1 + eps^2 L2", **quadrature_from(config).as_dict()}
            art.write(f"compare_eps{_tag(eps)}_sigma{_tag(sigma)}.csv",
                      curves_csv({"E": ms.energies, "momentum": ms.values, "semiclassical": sc.values,
                                  "difference": ms.values - sc.values}, meta, art.precision))
    report.add_orders()
    art.write("comparison_report.csv", report.to_text(art.precision))
    return report


def _records(config, threads, bands=None):
    spec = potential_from(config)
    bands = config["harmonic.bands"] if bands is None else bands
    n = config["harmonic.seed_grid"]
    E_cut = config["harmonic.E_cut"]
    surfs = band_surfaces(spec, bands, k_grid(n), X_grid(n), E_cut, threads)
    out = []
    for j in bands:
        out.extend(find_critical_points(surfs[j], spec, E_cut))
    out.sort(key=lambda r: (math.inf if math.isnan(r.energy) else r.energy, r.k0, r.X0))
    return out


def job_critical_points(config, art: Artifacts, threads):
    recs = _records(config, threads)
    p = art.precision
    lines = [f"# E_cut = {config['harmonic.E_cut']}", f"# seed_grid = {config['harmonic.seed_grid']}",
             "p,band,E,A,B,C,omega,k0,X0,classification"]
    for i, r in enumerate(recs, start=1):
        omega = "" if r.omega is None else _fmt(r.omega, p)
        lines.append(",".join([str(i), str(r.band)] + [_fmt(x, p) for x in (r.energy, r.A, r.B, r.C)]
                              + [omega, _fmt(r.k0, p), _fmt(r.X0, p), r.classification]))
    art.write("critical_points.csv", "\n".join(lines) + "\n")
    return recs


def job_harmonic(config, art: Artifacts, threads):
    recs = tuple(r for r in _records(config, threads) if r.has_frequency)
    grid = grid_from(config)
    n_max = config["harmonic.n_max"]
    p = art.precision
    lines = ["band,k0,X0,eps,sigma,n,level"]
    for sigma in config["model.sigma"]:
        for eps in config["model.eps"]:
            model = HarmonicDosModel(recs, eps, sigma, config["harmonic.window_half"])
            curve = harmonic_dos(model, grid)
            art.write(f"harmonic_eps{_tag(eps)}_sigma{_tag(sigma)}.csv",
                      curves_csv({"E": curve.energies, "value": curve.values}, curve.meta, p))
            for r in recs:
                count = model.level_count(r) if n_max == "window" else n_max + 1
                for n in range(count):
                    lev = r.energy + eps * r.omega * (n + 0.5)
                    lines.append(",".join([str(r.band), _fmt(r.k0, p), _fmt(r.X0, p), _fmt(eps, p),
                                           _fmt(sigma, p), str(n), _fmt(lev, p)]))
    art.write("harmonic_levels.csv", "\n".join(lines) + "\n")


def job_wigner_overlay(config, art: Artifacts, threads):
    band = config["harmonic.band"]
    recs = [r for r in _records(config, threads, [band]) if r.has_frequency]
    idx = config["harmonic.point"]
    if idx > len(recs):
        raise ConfigurationError(f"harmonic.point = {idx} but band {band} has {len(recs)} oscillator points")
    rec = recs[idx - 1]
    eps = config["model.eps"][0]
    wf = wigner_field(rec, eps, config["harmonic.level"])
    n = config["harmonic.seed_grid"]
    pad_k = 0.05 * (wf.k[-1] - wf.k[0])
    pad_X = 0.05 * (wf.X[-1] - wf.X[0])
    surf = band_surface(potential_from(config), band, np.linspace(wf.k[0] - pad_k, wf.k[-1] + pad_k, n),
                        np.linspace(wf.X[0] - pad_X, wf.X[-1] + pad_X, n), config["harmonic.E_cut"], threads)
    overlay = level_set_overlay(surf, wf)
    p = art.precision
    lines = [f"# band = {band}", f"# k0 = {_fmt(rec.k0, p)}", f"# X0 = {_fmt(rec.X0, p)}",
             f"# eps = {eps}", f"# level = {wf.n}", f"# ell = {_fmt(wf.ell, p)}",
             "family,level,line,k,X"]
    for family, level, i, k, X in overlay.rows():
        lines.append(f"{family},{_fmt(level, p)},{i},{_fmt(k, p)},{_fmt(X, p)}")
    art.write("wigner_overlay.csv", "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Entry points


def _parse_list(text, cast):
    return tuple(cast(t) for t in text.replace("[", "").replace("]", "").split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="incdos", description="Regularized density of states of "
                                 "a 1D incommensurate Schrodinger operator.")
    ap.add_argument("--config", help="key-value configuration file")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--threads", type=int, help="worker threads (default: $INCDOS_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--eps", help="comma-separated eps values")
        p.add_argument("--sigma", help="comma-separated smearing widths")
        return p

    common(sub.add_parser("dos", help="DoS curves")).add_argument(
        "--method", choices=("momentum", "semiclassical"), default="momentum")
    common(sub.add_parser("expansion-terms", help="L0/L1/L2 and finite-difference estimates"))
    common(sub.add_parser("compare", help="momentum-space vs semiclassical report"))
    sub.add_parser("critical-points", help="critical-point table").add_argument("--bands")
    p = common(sub.add_parser("harmonic", help="harmonic-model DoS and levels"))
    p.add_argument("--bands")
    p = common(sub.add_parser("wigner-overlay", help="level sets of E_j and |Wigner|"))
    p.add_argument("--band", type=int)
    p.add_argument("--level", type=int)
    p.add_argument("--point", type=int)
    return ap


def config_from_args(args) -> RunConfig:
    config = read_config(args.config) if args.config else parse_config("")
    over = {}
    if args.out:
        over["output.directory"] = args.out
    for name, key, cast in (("eps", "model.eps", float), ("sigma", "model.sigma", float),
                            ("bands", "harmonic.bands", int)):
        v = getattr(args, name, None)
        if v:
            over[key] = "[" + ",".join(str(x) for x in _parse_list(v, cast)) + "]"
    for name in ("band", "level", "point"):
        v = getattr(args, name, None)
        if v is not None:
            over[f"harmonic.{name}"] = str(v)
    return config.with_overrides(over) if over else config


JOBS = {
    "dos": lambda c, a, t, args: job_dos(c, a, t, args.method),
    "expansion-terms": lambda c, a, t, args: job_expansion_terms(c, a, t),
    "compare": lambda c, a, t, args: job_compare(c, a, t),
    "critical-points": lambda c, a, t, args: job_critical_points(c, a, t),
    "harmonic": lambda c, a, t, args: job_harmonic(c, a, t),
    "wigner-overlay": lambda c, a, t, args: job_wigner_overlay(c, a, t),
}


def run(config: RunConfig, command: str, threads=None, args=None) -> Path:
    """Execute ``command`` and return the artifact directory.

    On failure the manifest is written with ``status = incomplete`` and the
    error is re-raised.
    """
    if command not in JOBS:
        raise ConfigurationError(f"unknown command {command!r}")
    args = args if args is not None else argparse.Namespace(method="momentum")
    threads = resolve_threads(threads)
    shown = {"method": args.method} if command == "dos" else {}
    art = Artifacts(config["output.directory"], config, command, shown)
    try:
        JOBS[command](config, art, threads, args)
    except Exception as exc:
        art.manifest("incomplete", f"{type(exc).__name__}: {exc}")
        raise
    art.manifest("complete")
    return art.dir


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        config = config_from_args(args)
        out = run(config, args.command, args.threads, args)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
