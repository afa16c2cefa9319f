"""Monte-Carlo harness: central scenario, one-parameter sweeps, single runs.

Every unit of work is a pure function of ``(spec, seed)``. Seeds run in
parallel worker processes and results are gathered by seed index, so the
emitted CSVs do not depend on the worker count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import (
    Clustering,
    clustering_diameter,
    compress,
    transformation_matrix,
    ward_partitions,
)
from .datagen import ConfigurationError, Dataset, ScenarioConfig, make_scenario, make_weight_map
from .dlasso import InferenceBackendConfig, diagnostics
from .grid import delta_null_region
from .metrics import RunOutcome, summarize
from .pipeline import (
    PValueFamily,
    bootstrap_clusterings,
    cludl,
    encludl_from_clusterings,
    select,
)

log = logging.getLogger(__name__)

METHODS = ("cludl", "dlasso-full", "encludl")
SWEEP_PARAMS = ("sigma_eps", "n", "rho", "h")
# grids of the simulation study, used for warnings only
REFERENCE_GRIDS = {
    "n": (50, 100, 200, 400),
    "h": (2, 4, 6, 8),
    "rho": (0.5, 0.75, 0.9, 0.95),
    "sigma_eps": (1, 2, 3, 4),
}
# entropy word separating the bootstrap streams from the data streams
BOOTSTRAP_STREAM = 1

SUMMARY_COLUMNS = (
    "scenario_id", "method", "C", "B", "gamma", "alpha", "delta", "n_seeds",
    "delta_fwer", "ci_lo", "ci_hi", "tpr_median", "tpr_d10", "tpr_d90", "wall_time_s",
    "fwer", "sweep_param", "sweep_value", "seed_start", "seed_stop", "config_hash", "error",
)


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    methods: tuple[str, ...] = ("encludl",)
    C_grid: tuple[int, ...] = (200,)
    alpha: float = 0.1
    n_seeds: int = 100
    sweep: tuple[str, tuple] | None = None
    output_dir: str = "results"
    B: int = 25
    gamma: float = 0.5
    subsample_fraction: float = 0.7
    seed: int = 0
    backend: InferenceBackendConfig = field(default_factory=InferenceBackendConfig)

    def __post_init__(self):
        methods = tuple(sorted(set(self.methods)))
        bad = [m for m in methods if m not in METHODS]
        if bad or not methods:
            raise ConfigurationError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        object.__setattr__(self, "methods", methods)
        Cs = tuple(sorted({int(c) for c in self.C_grid}))
        p = self.scenario.p
        if any(m != "dlasso-full" for m in methods):
            if not Cs:
                raise ConfigurationError("C_grid is empty")
            if Cs[0] < 2 or Cs[-1] > p:
                raise ConfigurationError(f"cluster counts must lie in [2, {p}], got {list(Cs)}")
        object.__setattr__(self, "C_grid", Cs)
        if self.n_seeds < 1:
            raise ConfigurationError("n_seeds must be at least 1")
        if not (0 < self.alpha < 1):
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not (0 < self.gamma < 1):
            raise ConfigurationError("gamma must lie in (0, 1)")
        if self.B < 1:
            raise ConfigurationError("B must be at least 1")
        if not (0 < self.subsample_fraction <= 1):
            raise ConfigurationError("subsample_fraction must lie in (0, 1]")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        if self.sweep is not None:
            name, values = self.sweep
            if name not in SWEEP_PARAMS:
                raise ConfigurationError(f"cannot sweep {name!r}; choose from {list(SWEEP_PARAMS)}")
            values = tuple(sorted(values))
            if not values:
                raise ConfigurationError("sweep needs at least one value")
            for v in values:
                replace(self.scenario, **{name: v})  # validates the override
                if v not in REFERENCE_GRIDS[name]:
                    log.warning("sweep value %s=%s is outside the reference grid %s",
                                name, v, REFERENCE_GRIDS[name])
            object.__setattr__(self, "sweep", (name, values))

    @property
    def seeds(self) -> range:
        return range(self.seed, self.seed + self.n_seeds)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = None if self.sweep is None else {"param": self.sweep[0],
                                                      "values": list(self.sweep[1])}
        return d

    def config_hash(self) -> str:
        """Hash of everything that determines the numbers (not the output path)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def scenario_id(s: ScenarioConfig) -> str:
    sid = f"H{s.H}-n{s.n}-h{s.h}-rho{s.rho:g}-sigma{s.sigma_eps:g}"
    if s.amplitude != 1.0:
        sid += f"-amp{s.amplitude:g}"
    if s.signed:
        sid += "-signed"
    return sid


@dataclass
class MethodRun:
    """Result of one method at one cluster count on one seed."""
    selected: np.ndarray | None = None
    diameter: int = 0
    bootstrap_diameters: list[int] = field(default_factory=list)
    pvalues: np.ndarray | None = None
    error: str | None = None
    seconds: float = 0.0
    phi_min_hat: float | None = None  # advisory conditioning of the compressed design


def _keep(fam: PValueFamily, keep: bool):
    return np.array(fam.values) if keep else None


def run_methods(ds: Dataset, spec: ExperimentSpec, seed: int,
                keep_pvalues: bool = False) -> dict[tuple[str, int], MethodRun]:
    """All requested methods at every cluster count on one dataset.

    CluDL clusters the full design; EnCluDL clusters ``B`` row subsamples
    (one agglomeration per subsample, cut at every count of the grid) and
    runs inference on the full data.
    """
    X, y, dom = ds.X, ds.y, ds.domain
    out: dict[tuple[str, int], MethodRun] = {}
    Cs = list(spec.C_grid)

    if "dlasso-full" in spec.methods:
        t0 = time.perf_counter()
        r = MethodRun()
        try:
            c = Clustering.singletons(dom)
            fam = cludl(X, y, transformation_matrix(c), c, spec.backend, "full-design")
            r.selected, r.pvalues = select(fam, spec.alpha), _keep(fam, keep_pvalues)
        except Exception as exc:  # recorded per row, run continues
            r.error = f"{type(exc).__name__}: {exc}"
        r.seconds = time.perf_counter() - t0
        out[("dlasso-full", dom.p)] = r

    if "cludl" in spec.methods:
        t0 = time.perf_counter()
        try:
            parts = ward_partitions(X, dom, Cs)
            err = None
        except Exception as exc:
            parts, err = {}, f"{type(exc).__name__}: {exc}"
        share = (time.perf_counter() - t0) / len(Cs)
        for C in Cs:
            t1 = time.perf_counter()
            r = MethodRun(error=err)
            if err is None:
                c = parts[C]
                try:
                    A = transformation_matrix(c)
                    fam = cludl(X, y, A, c, spec.backend, f"cludl:{C}")
                    r.selected, r.pvalues = select(fam, spec.alpha), _keep(fam, keep_pvalues)
                    r.diameter = clustering_diameter(c)
                    r.phi_min_hat = diagnostics(compress(X, A))["phi_min_hat"]
                except Exception as exc:
                    r.error = f"{type(exc).__name__}: {exc}"
            r.seconds = share + time.perf_counter() - t1
            out[("cludl", C)] = r

    if "encludl" in spec.methods:
        t0 = time.perf_counter()
        try:
            boots = bootstrap_clusterings(X, dom, Cs, spec.B, spec.subsample_fraction,
                                          (seed, BOOTSTRAP_STREAM))
            err = None
        except Exception as exc:
            boots, err = [], f"{type(exc).__name__}: {exc}"
        share = (time.perf_counter() - t0) / len(Cs)
        for C in Cs:
            t1 = time.perf_counter()
            r = MethodRun(error=err)
            if err is None:
                try:
                    res = encludl_from_clusterings(X, y, [b[C] for b in boots], spec.gamma,
                                                   spec.backend)
                    r.selected, r.pvalues = select(res.family, spec.alpha), _keep(res.family, keep_pvalues)
                    r.diameter = res.delta
                    r.bootstrap_diameters = list(res.diameters)
                except Exception as exc:
                    r.error = f"{type(exc).__name__}: {exc}"
            r.seconds = share + time.perf_counter() - t1
            out[("encludl", C)] = r
    return out


def _seed_task(args):
    spec, scenario, seed, keep = args
    t0 = time.perf_counter()
    ds = make_scenario(replace(scenario, seed=seed))
    runs = run_methods(ds, spec, seed, keep)
    info = {"seed": seed, "snr": ds.snr, "achieved_rho": ds.achieved_rho,
            "smoothing": ds.smoothing, "seconds": time.perf_counter() - t0}
    return seed, runs, info


def run_seeds(spec: ExperimentSpec, scenario: ScenarioConfig, workers: int = 1,
              keep_pvalues: bool = False):
    """Run every seed of ``spec`` on ``scenario``; results come back in seed order."""
    tasks = [(spec, scenario, s, keep_pvalues) for s in spec.seeds]
    results = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(min(workers, len(tasks))) as pool:
            for seed, runs, info in pool.map(_seed_task, tasks):
                log.info("seed %d done in %.1fs", seed, info["seconds"])
                results.append((seed, runs, info))
    else:
        for t in tasks:
            seed, runs, info = _seed_task(t)
            log.info("seed %d done in %.1fs", seed, info["seconds"])
            results.append((seed, runs, info))
    return results


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else repr(float(x))
    return str(x)


def summarize_runs(spec: ExperimentSpec, scenario: ScenarioConfig, results,
                   timing: bool = False, sweep_value=None) -> list[dict]:
    """One summary row per (method, C).

    The declared tolerance of a row is the largest clustering diameter
    realized over all its seeds (and bootstraps); every seed is scored at
    that tolerance.
    """
    w = make_weight_map(scenario.H, scenario.h, scenario.amplitude, scenario.signed)
    support = w.support()
    keys = sorted({k for _, runs, _ in results for k in runs})
    rows = []
    for method, C in keys:
        runs = [(seed, r[(method, C)]) for seed, r, _ in results]
        ok = [(s, r) for s, r in runs if r.error is None]
        failed = [(s, r) for s, r in runs if r.error is not None]
        row = {
            "scenario_id": scenario_id(scenario),
            "method": method,
            "C": C,
            "B": spec.B if method == "encludl" else 1,
            "gamma": spec.gamma if method == "encludl" else None,
            "alpha": spec.alpha,
            "n_seeds": len(ok),
            "sweep_param": spec.sweep[0] if spec.sweep else None,
            "sweep_value": sweep_value,
            "seed_start": spec.seeds.start,
            "seed_stop": spec.seeds.stop - 1,
            "config_hash": spec.config_hash(),
            "wall_time_s": sum(r.seconds for _, r in runs) if timing else None,
            "error": None,
        }
        if failed:
            row["error"] = f"{len(failed)}/{len(runs)} seeds failed (first: seed {failed[0][0]}: {failed[0][1].error})"
        if ok:
            delta = max(r.diameter for _, r in ok)
            dnull = delta_null_region(w, delta)
            nulls = w.null_region()
            outs = [RunOutcome(r.selected, support, dnull, spec.alpha, delta) for _, r in ok]
            classical = [RunOutcome(r.selected, support, nulls, spec.alpha, 0) for _, r in ok]
            row["delta"] = delta
            row.update(summarize(outs, classical))
        rows.append(row)
    return rows


def write_summary(rows: Sequence[dict], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SUMMARY_COLUMNS)
        for row in rows:
            wr.writerow([_fmt(row.get(col)) for col in SUMMARY_COLUMNS])
    return path


def write_family(values, path: Path) -> Path:
    """Covariate-wise family as ``covariate_index,p_value``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("covariate_index", "p_value"))
        for j, v in enumerate(np.asarray(values, dtype=float)):
            wr.writerow((j, repr(float(v))))
    return path


def _manifest(spec, scenario, results, timing, extra=None) -> dict:
    seeds = []
    for seed, runs, info in results:
        entry = {k: v for k, v in info.items() if k != "seconds" or timing}
        entry["runs"] = {
            f"{m}:{C}": {"delta": r.diameter, "bootstrap_diameters": r.bootstrap_diameters,
                         "n_selected": None if r.selected is None else int(r.selected.size),
                         "error": r.error,
                         **({"phi_min_hat": r.phi_min_hat} if r.phi_min_hat is not None else {}),
                         **({"seconds": r.seconds} if timing else {})}
            for (m, C), r in sorted(runs.items())
        }
        seeds.append(entry)
    out = {"spec": spec.to_dict(), "scenario": asdict(scenario),
           "config_hash": spec.config_hash(), "seeds": seeds}
    if extra:
        out.update(extra)
    return out


def _dump_pvalues(results, directory: Path, tag: str = ""):
    directory.mkdir(parents=True, exist_ok=True)
    for seed, runs, _ in results:
        for (m, C), r in sorted(runs.items()):
            if r.pvalues is not None:
                write_family(r.pvalues, directory / f"{m}_C{C}{tag}_seed{seed}.csv")


def run_central_scenario(spec: ExperimentSpec, workers: int | None = None,
                         keep_pvalues: bool = False, timing: bool = False) -> list[dict]:
    """Monte-Carlo run of every method and cluster count; writes ``summary.csv`` and ``manifest.json``."""
    workers = workers or os.cpu_count() or 1
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = run_seeds(spec, spec.scenario, workers, keep_pvalues)
    rows = summarize_runs(spec, spec.scenario, results, timing)
    write_summary(rows, out / "summary.csv")
    extra = {"rows": rows}
    if timing:
        extra["wall_time_s"] = time.perf_counter() - t0
    (out / "manifest.json").write_text(json.dumps(
        _manifest(spec, spec.scenario, results, timing, extra), indent=2, default=_jsonable))
    if keep_pvalues:
        _dump_pvalues(results, out / "pvalues")
    return rows


def run_sweep(spec: ExperimentSpec, workers: int | None = None,
              keep_pvalues: bool = False, timing: bool = False) -> list[dict]:
    """Central scenario re-run with one parameter overridden per value.

    Writes ``sweep_<param>=<value>/summary.csv`` per value and a combined
    long-format ``summary.csv``.
    """
    if spec.sweep is None:
        raise ConfigurationError("spec has no sweep")
    workers = workers or os.cpu_count() or 1
    name, values = spec.sweep
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_rows, manifests = [], []
    for v in values:
        scenario = replace(spec.scenario, **{name: v})
        results = run_seeds(spec, scenario, workers, keep_pvalues)
        rows = summarize_runs(spec, scenario, results, timing, sweep_value=v)
        sub = out / f"sweep_{name}={v}"
        sub.mkdir(exist_ok=True)
        write_summary(rows, sub / "summary.csv")
        if keep_pvalues:
            _dump_pvalues(results, sub / "pvalues")
        manifests.append(_manifest(spec, scenario, results, timing, {"sweep_value": v}))
        all_rows.extend(rows)
    all_rows.sort(key=lambda r: (r["method"], r["C"], r["sweep_value"]))
    write_summary(all_rows, out / "summary.csv")
    (out / "manifest.json").write_text(json.dumps(
        {"spec": spec.to_dict(), "config_hash": spec.config_hash(), "blocks": manifests,
         "rows": all_rows}, indent=2, default=_jsonable))
    return all_rows


def run_single(ds: Dataset, method: str, out_dir, C: int = 200, B: int = 25,
               gamma: float = 0.5, alpha: float = 0.1, seed: int = 0,
               subsample_fraction: float = 0.7,
               backend: InferenceBackendConfig | None = None) -> dict:
    """One method on one dataset: writes p-values, the selection and a manifest."""
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; choose from {list(METHODS)}")
    backend = backend or InferenceBackendConfig()
    X, y, dom = ds.X, ds.y, ds.domain
    if method != "dlasso-full" and not (2 <= C <= dom.p):
        raise ConfigurationError(f"cluster count {C} outside [2, {dom.p}]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"method": method, "alpha": alpha, "n": int(X.shape[0]), "p": int(dom.p),
                "backend": asdict(backend)}
    clusterings: list[Clustering] = []
    if method == "dlasso-full":
        c = Clustering.singletons(dom)
        fam = cludl(X, y, transformation_matrix(c), c, backend, "full-design")
        manifest.update(C=dom.p, delta=0)
    elif method == "cludl":
        c = ward_partitions(X, dom, [C])[C]
        fam = cludl(X, y, transformation_matrix(c), c, backend, f"cludl:{C}")
        clusterings = [c]
        manifest.update(C=C, delta=clustering_diameter(c))
    else:
        boots = bootstrap_clusterings(X, dom, [C], B, subsample_fraction, (seed, BOOTSTRAP_STREAM))
        res = encludl_from_clusterings(X, y, [b[C] for b in boots], gamma, backend)
        fam = res.family
        clusterings = res.clusterings
        manifest.update(C=C, B=B, gamma=gamma, seed=seed, delta=res.delta,
                        bootstrap_diameters=res.diameters)
    sel = select(fam, alpha)
    write_family(fam.values, out / "pvalues.csv")
    with open(out / "selection.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("covariate_index",))
        wr.writerows((int(j),) for j in sel)
    if clusterings:
        with open(out / "clustering.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("covariate_index",) + tuple(f"labels_{b}" for b in range(len(clusterings))))
            labels = np.column_stack([c.labels for c in clusterings])
            for j in range(dom.p):
                wr.writerow((j, *labels[j].tolist()))
    manifest["n_selected"] = int(sel.size)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
    return manifest


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not np.isfinite(o):
        return None
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
