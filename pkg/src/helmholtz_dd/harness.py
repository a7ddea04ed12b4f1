"""Experiment engine: configuration, grid runner, CSV/JSON reports and plots."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .assembly import assemble_global
from .coarse import CoarseKind, CoarseSpec, assemble_coarse, verify_dtn_geneo_link
from .linalg import gmres_right_preconditioned
from .media import MediumKind, MediumSpec
from .mesh import build_unit_square_mesh, wavenumber_for_resolution
from .partition import PouKind, build_decomposition
from .precond import build_oras

log = logging.getLogger(__name__)

MAX_DESK_RESOLUTION = 400

CSV_COLUMNS = ("k", "omega", "rho", "m", "N", "overlap", "coarse_kind", "threshold_rule", "coarse_size",
               "iterations", "converged", "final_residual", "t_assembly_s", "t_partition_s",
               "t_eigensolve_s", "t_factorize_s", "t_solve_s")


class ConfigError(ValueError):
    pass


def _as_list(v):
    if v is None:
        return [None]
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass
class ExperimentConfig:
    """A grid of runs.  List-valued fields are swept in nested order
    ``m -> contrast -> N -> overlap -> coarse``.

    ``omega`` of ``None`` means the pollution rule ``k = (2 pi m^2 / 10)^(1/3)``
    for every ``m``.  Each entry of ``coarse`` is ``{"kind": ..., "threshold": ...}``.
    """

    m: list = field(default_factory=lambda: [100])
    medium: str = "homogeneous"
    contrast: list = field(default_factory=lambda: [1.0])
    omega: float | None = None
    partition: str = "uniform"
    n_parts: list = field(default_factory=lambda: [25])
    overlap: list = field(default_factory=lambda: [2])
    coarse: list = field(default_factory=lambda: [{"kind": "none"}])
    tol: float = 1e-6
    maxit: int = 500
    pou: str = "smooth"
    oras_pou: str | None = None
    workers: int = 1
    seed: int = 0
    csv: str | None = None
    json: str | None = None
    plots: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**data)
        for name in ("m", "contrast", "n_parts", "overlap", "coarse"):
            setattr(cfg, name, _as_list(getattr(cfg, name)))
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def coarse_specs(self) -> list[CoarseSpec]:
        specs = []
        for entry in self.coarse:
            if isinstance(entry, str):
                entry = {"kind": entry}
            specs.append(CoarseSpec(**entry))
        return specs

    def validate(self, allow_large=False) -> None:
        """Raise :class:`ConfigError` on anything that would fail later."""
        try:
            MediumKind(self.medium)
            PouKind(self.pou)
            if self.oras_pou is not None:
                PouKind(self.oras_pou)
            specs = self.coarse_specs()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if not specs:
            raise ConfigError("at least one coarse entry is required")
        for m in self.m:
            if not isinstance(m, int) or m < 2:
                raise ConfigError(f"resolution must be an integer >= 2, got {m!r}")
            if m % 2:
                raise ConfigError(f"resolution must be even so the point source sits on a node, got {m}")
            if m > MAX_DESK_RESOLUTION and not allow_large:
                raise ConfigError(f"m={m} exceeds {MAX_DESK_RESOLUTION}; pass --allow-large to run it")
        for rho in self.contrast:
            if rho is None or rho < 1:
                raise ConfigError(f"contrast must be >= 1, got {rho!r}")
        if self.omega is not None and self.omega <= 0:
            raise ConfigError("omega must be positive")
        if self.partition not in ("uniform", "graph"):
            raise ConfigError(f"partition must be 'uniform' or 'graph', got {self.partition!r}")
        for n in self.n_parts:
            if not isinstance(n, int) or n < 1:
                raise ConfigError(f"subdomain count must be a positive integer, got {n!r}")
            if self.partition == "uniform":
                r = math.isqrt(n)
                if r * r != n:
                    raise ConfigError(f"uniform partitions need a square subdomain count, got {n}")
                if any(r > m for m in self.m):
                    raise ConfigError(f"{r}x{r} blocks do not fit the coarsest resolution")
        for ov in self.overlap:
            if not isinstance(ov, int) or ov < 2 or ov % 2:
                raise ConfigError(f"overlap must be an even integer >= 2, got {ov!r}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not isinstance(self.maxit, int) or self.maxit < 1:
            raise ConfigError("maxit must be a positive integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers must be a positive integer")


@dataclass
class ExperimentReport:
    k: float
    omega: float
    rho: float
    m: int
    N: int
    overlap: int
    coarse_kind: str
    threshold_rule: str
    coarse_size: int
    iterations: int
    converged: bool
    final_residual: float
    t_assembly_s: float = 0.0
    t_partition_s: float = 0.0
    t_eigensolve_s: float = 0.0
    t_factorize_s: float = 0.0
    t_solve_s: float = 0.0
    error: str | None = None
    coarse_summary: list = field(default_factory=list)

    @property
    def label(self) -> str:
        if self.coarse_kind == CoarseKind.NONE.value:
            return "one-level"
        return f"{self.coarse_kind}({self.threshold_rule})"

    @property
    def eigensolve_share(self) -> float:
        total = (self.t_assembly_s + self.t_partition_s + self.t_eigensolve_s
                 + self.t_factorize_s + self.t_solve_s)
        return self.t_eigensolve_s / total if total > 0 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eigensolve_share"] = self.eigensolve_share
        return d


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def run_experiment(config: ExperimentConfig, allow_large=False, progress=None) -> list[ExperimentReport]:
    """Run every grid point of ``config`` in order.

    Numerical failures are recorded in the row's ``error`` field and the grid
    carries on.  Meshes, systems and decompositions are reused between rows
    that share them; their build times are reported on every such row.
    """
    config.validate(allow_large)
    specs = config.coarse_specs()
    reports = []
    for m in config.m:
        mesh = build_unit_square_mesh(m)
        for rho in config.contrast:
            omega = wavenumber_for_resolution(m) if config.omega is None else float(config.omega)
            medium = MediumSpec(config.medium, rho, omega)
            system, t_asm = _timed(assemble_global, mesh, medium)
            k = float(system.k_elem.max())
            for n_parts in config.n_parts:
                for overlap in config.overlap:
                    dec, t_part = _timed(build_decomposition, mesh, config.partition, n_parts,
                                         overlap=overlap, pou=config.pou)
                    for spec in specs:
                        row = ExperimentReport(k, omega, float(rho), m, n_parts, overlap, spec.kind.value,
                                               spec.rule_label, 0, 0, False, float("nan"),
                                               t_assembly_s=t_asm, t_partition_s=t_part)
                        try:
                            _run_point(row, system, dec, spec, config)
                        except Exception as exc:  # recorded per row, grid continues
                            log.warning("m=%d N=%d %s failed: %s", m, n_parts, spec.label, exc)
                            row.error = f"{type(exc).__name__}: {exc}"
                        reports.append(row)
                        if progress is not None:
                            progress(row)
    return reports


def _run_point(row: ExperimentReport, system, dec, spec: CoarseSpec, config: ExperimentConfig):
    coarse = None
    if spec.kind is not CoarseKind.NONE:
        coarse, row.t_eigensolve_s = _timed(assemble_coarse, system, dec, spec, config.workers)
        row.coarse_size = coarse.size
        row.coarse_summary = coarse.summary()
    precond, row.t_factorize_s = _timed(build_oras, system, dec, coarse, config.workers, config.oras_pou)
    try:
        res, row.t_solve_s = _timed(gmres_right_preconditioned, system.A, precond, system.f,
                                    config.tol, config.maxit)
    finally:
        precond.close()
    row.iterations = res.iterations
    row.converged = bool(res.converged)
    row.final_residual = float(res.final_residual)


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(reports, path) -> Path:
    if not reports:
        raise ValueError("no reports to write")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return path


_CSV_TYPES = {"k": float, "omega": float, "rho": float, "m": int, "N": int, "overlap": int,
              "coarse_kind": str, "threshold_rule": str, "coarse_size": int, "iterations": int,
              "converged": lambda s: s == "true", "final_residual": float}


def read_csv(path) -> list[ExperimentReport]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            out.append(ExperimentReport(**{c: _CSV_TYPES.get(c, float)(rec[c]) for c in CSV_COLUMNS}))
    return out


def emit_json(reports, path, config: ExperimentConfig | None = None) -> Path:
    path = Path(path)
    doc = {"config": config.to_dict() if config else None, "runs": [r.to_dict() for r in reports]}
    path.write_text(json.dumps(doc, indent=2, default=float) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def fit_power_law(x, y):
    """Least-squares fit of ``y = c x^p`` in log-log space; returns ``(p, c)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2 or np.unique(x).size < 2:
        raise ValueError("need at least two distinct abscissae")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    p, logc = np.polyfit(np.log(x), np.log(y), 1)
    return float(p), float(np.exp(logc))


def _series(reports, var):
    """Group rows into series over ``var`` ('k' or 'N') with everything else fixed."""
    other = "N" if var == "k" else "k"
    groups = {}
    for r in reports:
        if r.error or r.coarse_size <= 0:
            continue
        key = (r.label, round(getattr(r, other), 1), r.rho, r.overlap)
        groups.setdefault(key, {})[getattr(r, var)] = r.coarse_size
    out = {}
    for key, pts in groups.items():
        if len(pts) >= 2:
            xs = sorted(pts)
            out[key] = (np.array(xs, float), np.array([pts[x] for x in xs], float))
    return out


def emit_plots(reports, out_dir) -> dict:
    """Log-log coarse size against ``k`` and against ``N`` with fitted exponents.

    Writes ``coarse_size_vs_k.svg`` and ``coarse_size_vs_N.svg`` where the data
    allow, and returns ``{(variable, label, fixed value): exponent}``.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    fits = {}
    for var, name in (("k", "k"), ("N", "N")):
        series = _series(reports, var)
        if not series:
            warnings.warn(f"not enough distinct {var} values to plot coarse size against {var}")
            continue
        out_dir.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(5.5, 4.2))
        for (label, fixed, _rho, _ov), (x, y) in sorted(series.items(), key=lambda kv: str(kv[0])):
            p, c = fit_power_law(x, y)
            fits[(var, label, fixed)] = p
            line = ax.loglog(x, y, "o", label=f"{label}: ~{name}^{p:.2f}")[0]
            xx = np.geomspace(x.min(), x.max(), 32)
            ax.loglog(xx, c * xx ** p, "-", color=line.get_color(), lw=1)
        ax.set_xlabel(name)
        ax.set_ylabel("coarse space size")
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / f"coarse_size_vs_{var}.svg", format="svg")
        plt.close(fig)
    return fits


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

@dataclass
class LinkCheckConfig:
    m: int = 8
    grid: tuple = (2, 2)
    k: float | None = None
    negative_control: bool = False
    tol: float = 1e-8


def run_link_check(config: LinkCheckConfig, out=None) -> dict:
    """Run the DtN/GenEO Schur-complement link check and optionally write JSON."""
    if config.m > 16:
        raise ConfigError(f"the link check uses dense solves; m must be <= 16, got {config.m}")
    mesh = build_unit_square_mesh(config.m)
    k = wavenumber_for_resolution(config.m) if config.k is None else config.k
    system = assemble_global(mesh, MediumSpec("homogeneous", 1.0, k), with_source=False)
    dec = build_decomposition(mesh, "uniform", grid=tuple(config.grid), overlap=2)
    report = verify_dtn_geneo_link(system, dec, tol=config.tol, use_interface_mass=config.negative_control)
    verdict = {"m": config.m, "grid": list(config.grid), "k": k, "negative_control": config.negative_control,
               "verdict": "PASS" if report.passed else "FAIL", **report.to_dict()}
    if out is not None:
        Path(out).write_text(json.dumps(verdict, indent=2) + "\n", encoding="utf-8")
    return verdict


def run_invariant_checks(seed=0) -> list[tuple[str, bool, str]]:
    """Cheap exactness checks on small problems; returns ``(name, passed, detail)``."""
    from .linalg import dense_generalized_eigen, real_part_below, shift_invert_arnoldi
    from .coarse import geneo_pencil
    from .partition import partition_of_unity_sum

    rng = np.random.default_rng(seed)
    results = []
    mesh = build_unit_square_mesh(12)
    system = assemble_global(mesh, MediumSpec("homogeneous", 1.0, wavenumber_for_resolution(12)))

    worst = 0.0
    for pou in PouKind:
        dec = build_decomposition(mesh, "uniform", 4, overlap=2, pou=pou)
        worst = max(worst, float(np.abs(partition_of_unity_sum(dec) - 1).max()))
    results.append(("partition of unity sums to identity", worst <= 1e-15, f"max deviation {worst:.1e}"))

    dec = build_decomposition(mesh, "uniform", 4, overlap=2)
    cs = assemble_coarse(system, dec, CoarseSpec("h_geneo", 0.5))
    z = cs.Z.toarray()
    qaz = np.column_stack([cs.apply_q(system.A @ z[:, j]) for j in range(z.shape[1])])
    err = float(np.linalg.norm(qaz - z, axis=0).max() / np.linalg.norm(z, axis=0).min())
    results.append(("deflation Q A Z = Z", err <= 1e-10, f"relative error {err:.1e}"))

    one = build_decomposition(mesh, "uniform", 1, overlap=2)
    res = gmres_right_preconditioned(system.A, build_oras(system, one), system.f)
    results.append(("single subdomain converges in one iteration", res.iterations == 1,
                    f"{res.iterations} iterations"))

    k, m = geneo_pencil(system, dec, 0, CoarseKind.H_GENEO)
    sel = real_part_below(0.5)
    fast = shift_invert_arnoldi(k, m, sel)
    dense = dense_generalized_eigen(k.toarray(), m.toarray())
    ref = np.sort_complex(dense.values[sel.accepts(dense.values)])
    ok = ref.size == fast.values.size and np.allclose(np.sort_complex(fast.values), ref, rtol=0, atol=1e-6)
    results.append(("Arnoldi matches dense oracle", bool(ok), f"{fast.values.size} vs {ref.size} eigenvalues"))

    b = rng.standard_normal(system.n) + 1j * rng.standard_normal(system.n)
    res = gmres_right_preconditioned(system.A, build_oras(system, dec), b)
    ratio = res.final_residual / max(res.recurrence_residual, 1e-300)
    results.append(("true residual within 1.1x of recurrence residual", ratio <= 1.1, f"ratio {ratio:.3f}"))
    return results
