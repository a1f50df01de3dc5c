from __future__ import annotations

import csv
import logging
import math
import os
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from smoothgnn.config import RunConfig
from smoothgnn.errors import DatasetLoadError, DatasetValidationError, ResultsSchemaError
from smoothgnn.graph import Dataset, dataset_statistics, load_dataset, normalize_features, save_dataset
from smoothgnn.infogain import (
    NoiseModel,
    aggregated_noise_power,
    build_histograms,
    chi_square_kl_approx,
    kl_divergence,
    monte_carlo_noise_check,
    smoothness_kl_sweep,
)
from smoothgnn.models import (
    CORE_FAMILIES,
    FEATURE_FAMILIES,
    GNN_FAMILIES,
    TOPOLOGY_FAMILIES,
    GraphInputs,
)
from smoothgnn.smoothness import (
    broadcast_smooth,
    drop_cross_label_edges,
    feature_smoothness,
    label_smoothness,
    smoothness_report,
)
from smoothgnn.synthetic import generate_sbm
from smoothgnn.training import RunResult, train
from smoothgnn.wavelets import TopoFeatureMatrix, all_topo_features, load_topo_cache, save_topo_cache

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1
RESULTS_SCHEMA_PREFIX = "# smoothgnn results schema "
RESULTS_COLUMNS = (
    "experiment_id", "dataset", "model", "seed", "sweep_param", "sweep_value",
    "lambda_f", "lambda_l", "kl", "f1_test", "wall_time",
)
PLOT_COLUMNS = ("model", "sweep_param", "sweep_value", "smoothness", "mean_f1", "std_f1", "runs")


# --- Table de résultats ---
@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    dataset: str
    model: str
    seed: int
    sweep_param: str
    sweep_value: float
    lambda_f: float
    lambda_l: float
    kl: float
    f1_test: float
    wall_time: float

    def as_record(self) -> List[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            out.append(repr(float(value)) if isinstance(value, float) else str(value))
        return out

    def payload(self) -> Tuple:
        # Colonnes reproductibles (tout sauf le temps d'exécution)
        return tuple(getattr(self, c) for c in RESULTS_COLUMNS if c != "wall_time")

    @classmethod
    def from_record(cls, record: Sequence[str]) -> "ResultRow":
        values = dict(zip(RESULTS_COLUMNS, record))
        return cls(
            experiment_id=values["experiment_id"], dataset=values["dataset"], model=values["model"],
            seed=int(values["seed"]), sweep_param=values["sweep_param"],
            sweep_value=float(values["sweep_value"]), lambda_f=float(values["lambda_f"]),
            lambda_l=float(values["lambda_l"]), kl=float(values["kl"]),
            f1_test=float(values["f1_test"]), wall_time=float(values["wall_time"]),
        )


class ResultsTable:
    # Un seul point d'écriture : les réplicats concurrents passent par le verrou

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._ensure_header()

    def _ensure_header(self) -> None:
        if os.path.isfile(self.path) and os.path.getsize(self.path) > 0:
            _check_schema(self.path)
            return
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(self.path, "w", encoding="utf-8", newline="") as f:
            f.write(f"{RESULTS_SCHEMA_PREFIX}{RESULTS_SCHEMA_VERSION}\n")
            csv.writer(f).writerow(RESULTS_COLUMNS)

    def append(self, rows: Iterable[ResultRow]) -> None:
        rows = list(rows)
        with self._lock:
            with open(self.path, "a", encoding="utf-8", newline="") as f:
                writer = csv.writer(f)
                for row in rows:
                    writer.writerow(row.as_record())


def _check_schema(path: str) -> None:
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\n")
        header = next(csv.reader([f.readline()]), [])
    if not first.startswith(RESULTS_SCHEMA_PREFIX):
        raise ResultsSchemaError(f"{path}: en-tête de schéma absent")
    version = first[len(RESULTS_SCHEMA_PREFIX):].strip()
    if version != str(RESULTS_SCHEMA_VERSION):
        raise ResultsSchemaError(f"{path}: version de schéma {version} inconnue")
    if tuple(header) != RESULTS_COLUMNS:
        raise ResultsSchemaError(f"{path}: colonnes inattendues {header}")


def read_results(path: str) -> List[ResultRow]:
    if not os.path.isfile(path):
        raise DatasetLoadError("fichier de résultats introuvable", path=path)
    _check_schema(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        next(reader)
        next(reader)
        rows = []
        for lineno, record in enumerate(reader, 3):
            if not record:
                continue
            if len(record) != len(RESULTS_COLUMNS):
                raise ResultsSchemaError(f"{path}:{lineno}: {len(record)} colonnes")
            try:
                rows.append(ResultRow.from_record(record))
            except ValueError:
                raise ResultsSchemaError(f"{path}:{lineno}: valeur illisible")
    return rows


@dataclass(frozen=True)
class PlotPoint:
    model: str
    sweep_param: str
    sweep_value: float
    smoothness: float
    mean_f1: float
    std_f1: float
    runs: int


def write_plot_data(path: str, points: Sequence[PlotPoint]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PLOT_COLUMNS)
        for p in points:
            writer.writerow([p.model, p.sweep_param, repr(float(p.sweep_value)), repr(float(p.smoothness)),
                             repr(float(p.mean_f1)), repr(float(p.std_f1)), p.runs])


# --- Préparation ---
def prepare_dataset(cfg: RunConfig) -> Dataset:
    d = cfg.dataset
    if d.synthetic:
        return generate_sbm(cfg.synthetic)
    cfg.validate()
    ds = load_dataset(
        d.edges, d.features, d.labels, split_spec=d.splits, seed=d.split_seed,
        num_classes=d.num_classes, id_map_path=d.id_map, name=d.name,
    )
    return normalize_features(ds) if d.normalize else ds


def prepare_topo(ds: Dataset, cfg: RunConfig, use_cache: bool = True) -> TopoFeatureMatrix:
    cache = cfg.topo_cache if use_cache else None
    if cache and os.path.isfile(cache):
        logger.info(f"Caractéristiques topologiques lues depuis {cache}")
        return load_topo_cache(cache, expected=cfg.topo, num_nodes=ds.num_nodes)
    started = time.perf_counter()
    topo = all_topo_features(ds, cfg.topo)
    logger.info(f"Ondelettes de chaleur : {ds.num_nodes} noeuds en {time.perf_counter() - started:.1f}s")
    if cache:
        save_topo_cache(cache, topo)
    return topo


def dataset_measures(ds: Dataset, cfg: RunConfig) -> Tuple[float, float, float]:
    # (lambda_f, lambda_l, KL) ; nan quand la mesure est indéfinie sur ce graphe
    if ds.num_edges == 0:
        return float("nan"), float("nan"), float("nan")
    X = ds.features
    raw = bool(X.size) and (X.min() < 0.0 or X.max() > 1.0)
    lam_f = feature_smoothness(ds, raw=raw)
    try:
        lam_l = label_smoothness(ds)
    except DatasetValidationError:
        lam_l = float("nan")
    kl = float("nan")
    if not raw:
        kl = kl_divergence(build_histograms(ds, bins=cfg.info.bins, mode=cfg.info.mode), cfg.info.epsilon)
    return lam_f, lam_l, kl


def _needs_topology(cfg: RunConfig, families: Sequence[str]) -> bool:
    return any(replace(cfg.model, family=f).uses_topology for f in families)


def run_models(
    ds: Dataset,
    families: Sequence[str],
    seeds: Sequence[int],
    cfg: RunConfig,
    topo: Optional[TopoFeatureMatrix] = None,
    tag: str = "",
) -> List[RunResult]:
    # Ordre déterministe (famille puis graine), quel que soit le nombre de workers
    plain = GraphInputs.from_dataset(ds)
    with_topo = GraphInputs.from_dataset(ds, topo=topo) if topo is not None else None
    ckpt_dir = os.path.join(cfg.output.directory, "checkpoints")
    if cfg.output.checkpoints:
        os.makedirs(ckpt_dir, exist_ok=True)

    def one(task: Tuple[str, int]) -> RunResult:
        family, seed = task
        spec = replace(cfg.model, family=family)
        inputs = with_topo if spec.uses_topology else plain
        path = None
        if cfg.output.checkpoints:
            path = os.path.join(ckpt_dir, f"{cfg.experiment_id}-{family}-s{seed}{tag}.ckpt")
        return train(ds, spec, replace(cfg.train, seed=seed), inputs=inputs, checkpoint_path=path)

    tasks = [(f, s) for f in families for s in seeds]
    if cfg.output.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.output.workers) as pool:
            return list(pool.map(one, tasks))
    return [one(t) for t in tasks]


def _rows(cfg: RunConfig, results: Sequence[RunResult], measures: Tuple[float, float, float],
          sweep_param: str = "none", sweep_value: float = 0.0) -> List[ResultRow]:
    lam_f, lam_l, kl = measures
    return [
        ResultRow(
            experiment_id=cfg.experiment_id, dataset=cfg.dataset_name, model=r.family, seed=r.seed,
            sweep_param=sweep_param, sweep_value=float(sweep_value), lambda_f=lam_f, lambda_l=lam_l,
            kl=kl, f1_test=r.test_f1, wall_time=r.wall_time,
        )
        for r in results
    ]


def _aggregate(results: Sequence[RunResult], sweep_param: str, sweep_value: float,
               smoothness: float) -> List[PlotPoint]:
    by_model: Dict[str, List[float]] = {}
    for r in results:
        by_model.setdefault(r.family, []).append(r.test_f1)
    return [
        PlotPoint(model, sweep_param, float(sweep_value), float(smoothness),
                  float(np.mean(f1s)), float(np.std(f1s)), len(f1s))
        for model, f1s in by_model.items()
    ]


# --- Commandes ---
@dataclass(frozen=True, eq=False)
class MetricsSummary:
    statistics: Dict[str, float]
    report: object
    kl: float
    chi_square: float
    noise_mean: float
    noise_sum: float
    fan_in: int

    def to_text(self) -> str:
        lines = [f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}" for k, v in self.statistics.items()]
        lines.append(self.report.to_text())
        lines += [
            f"kl_bits = {self.kl:.6g}",
            f"chi_square_approx = {self.chi_square:.6g}",
            f"noise_fan_in = {self.fan_in}",
            f"noise_power_mean = {self.noise_mean:.6g}",
            f"noise_power_sum = {self.noise_sum:.6g}",
        ]
        return "\n".join(lines)


def cmd_metrics(cfg: RunConfig, out: TextIO = sys.stdout) -> MetricsSummary:
    started = time.perf_counter()
    ds = prepare_dataset(cfg)
    report = smoothness_report(ds)
    hist = build_histograms(ds, bins=cfg.info.bins, mode=cfg.info.mode)
    kl = kl_divergence(hist, cfg.info.epsilon)
    chi = chi_square_kl_approx(hist, epsilon=cfg.info.epsilon)
    stats = dataset_statistics(ds)
    fan_in = max(1, int(round(stats["average_degree"])))
    summary = MetricsSummary(
        statistics={"dataset": ds.name, **stats}, report=report, kl=kl, chi_square=chi,
        noise_mean=aggregated_noise_power(NoiseModel.mean_aggregator(fan_in)),
        noise_sum=aggregated_noise_power(NoiseModel.sum_aggregator(fan_in)),
        fan_in=fan_in,
    )
    print(summary.to_text(), file=out)
    row = ResultRow(
        experiment_id=cfg.experiment_id, dataset=cfg.dataset_name, model="-", seed=cfg.dataset.split_seed,
        sweep_param="none", sweep_value=0.0, lambda_f=report.lambda_f, lambda_l=report.lambda_l,
        kl=kl, f1_test=float("nan"), wall_time=time.perf_counter() - started,
    )
    ResultsTable(cfg.output.csv_path).append([row])
    return summary


def cmd_train(cfg: RunConfig, out: TextIO = sys.stdout) -> List[RunResult]:
    families = list(CORE_FAMILIES) if cfg.all_models else [cfg.model.family]
    ds = prepare_dataset(cfg)
    topo = prepare_topo(ds, cfg) if _needs_topology(cfg, families) else None
    results = run_models(ds, families, [cfg.train.seed], cfg, topo)
    ResultsTable(cfg.output.csv_path).append(_rows(cfg, results, dataset_measures(ds, cfg)))
    for r in results:
        print(f"{r.family:14s} seed={r.seed} val_f1={r.best_val_f1:.4f} test_f1={r.test_f1:.4f} "
              f"epochs={r.epochs_run}", file=out)
    return results


def cmd_sweep_broadcast(cfg: RunConfig, out: TextIO = sys.stdout) -> List[PlotPoint]:
    ds = prepare_dataset(cfg)
    models = list(cfg.sweep.models)
    # Les caractéristiques topologiques ne dépendent que de la structure
    topo = prepare_topo(ds, cfg) if _needs_topology(cfg, models) else None
    table = ResultsTable(cfg.output.csv_path)
    points: List[PlotPoint] = []
    current, done = ds, 0
    for t in sorted(set(cfg.sweep.rounds)):
        current = broadcast_smooth(current, t - done)
        done = t
        measures = dataset_measures(current, cfg)
        logger.info(f"diffusion {t} rounds : lambda_f = {measures[0]:.6g}")
        results = run_models(current, models, cfg.sweep.seeds, cfg, topo, tag=f"-t{t}")
        table.append(_rows(cfg, results, measures, "rounds", t))
        points += _aggregate(results, "rounds", t, measures[0])
    path = os.path.join(cfg.output.directory, f"{cfg.experiment_id}-plot.csv")
    write_plot_data(path, points)
    for p in points:
        print(f"rounds={int(p.sweep_value):4d} lambda_f={p.smoothness:.6g} {p.model:14s} "
              f"f1={p.mean_f1:.4f}±{p.std_f1:.4f}", file=out)
    return points


def cmd_sweep_edgedrop(cfg: RunConfig, out: TextIO = sys.stdout) -> List[PlotPoint]:
    ds = prepare_dataset(cfg)
    models = list(cfg.sweep.models)
    needs_topo = _needs_topology(cfg, models)
    table = ResultsTable(cfg.output.csv_path)
    points: List[PlotPoint] = []
    for fraction in cfg.sweep.fractions:
        results: List[RunResult] = []
        lam_ls = []
        for seed in cfg.sweep.seeds:
            # Nouveau tirage d'arêtes pour chaque réplicat
            dropped = drop_cross_label_edges(ds, fraction, seed=seed)
            measures = dataset_measures(dropped, cfg)
            lam_ls.append(measures[1])
            topo = prepare_topo(dropped, cfg, use_cache=False) if needs_topo else None
            runs = run_models(dropped, models, [seed], cfg, topo, tag=f"-f{fraction:g}")
            table.append(_rows(cfg, runs, measures, "fraction", fraction))
            results += runs
        lam_l = float(np.mean(lam_ls))
        logger.info(f"fraction {fraction:g} : lambda_l moyen = {lam_l:.6g}")
        points += _aggregate(results, "fraction", fraction, lam_l)
    path = os.path.join(cfg.output.directory, f"{cfg.experiment_id}-plot.csv")
    write_plot_data(path, points)
    for p in points:
        print(f"fraction={p.sweep_value:.2f} lambda_l={p.smoothness:.4f} {p.model:14s} "
              f"f1={p.mean_f1:.4f}±{p.std_f1:.4f}", file=out)
    return points


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    expected: float
    threshold: str
    passed: bool


@dataclass(frozen=True)
class VerifyReport:
    checks: Tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [f"{'check':28s} {'measured':>12s} {'expected':>12s}  threshold        status"]
        for c in self.checks:
            lines.append(f"{c.name:28s} {c.measured:12.6g} {c.expected:12.6g}  {c.threshold:16s} "
                         f"{'PASS' if c.passed else 'FAIL'}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def noise_checks(samples: int, tolerance: float, seed: int = 0) -> List[CheckResult]:
    cases = [
        ("noise_mean_n4", NoiseModel.mean_aggregator(4)),
        ("noise_sum_n4", NoiseModel.sum_aggregator(4)),
        ("noise_weighted_0.5_0.3_0.2", NoiseModel(1.0, (0.5, 0.3, 0.2))),
    ]
    checks = []
    for i, (name, nm) in enumerate(cases):
        expected = aggregated_noise_power(nm)
        measured = monte_carlo_noise_check(nm, samples=samples, seed=seed + i)
        rel = abs(measured - expected) / expected
        checks.append(CheckResult(name, measured, expected, f"rel<={tolerance:g}", rel <= tolerance))
    return checks


def cmd_verify(cfg: RunConfig, out: TextIO = sys.stdout) -> VerifyReport:
    info = cfg.info
    checks = noise_checks(info.noise_samples, info.noise_tolerance, seed=cfg.train.seed)

    ds = prepare_dataset(cfg)
    flat = ds.with_features(np.zeros_like(ds.features))
    lam0 = feature_smoothness(flat)
    kl0 = kl_divergence(build_histograms(flat, bins=info.bins, mode=info.mode), info.epsilon)
    checks.append(CheckResult("kl_at_zero_smoothness", kl0, 0.0, "lambda_f=0,kl<1e-12",
                              lam0 == 0.0 and kl0 < 1e-12))

    points, rho = smoothness_kl_sweep(ds, info.verify_rounds, info.bins, info.epsilon)
    for t, lam, kl in points:
        logger.debug(f"balayage t={t} : lambda_f={lam:.6g} KL={kl:.6g}")
    ok = bool(np.isfinite(rho)) and rho > info.spearman_threshold
    checks.append(CheckResult("spearman_lambda_f_kl", rho, 1.0, f">{info.spearman_threshold:g}", ok))

    report = VerifyReport(tuple(checks))
    print(report.to_text(), file=out)
    return report


def cmd_gen_sbm(cfg: RunConfig, out: TextIO = sys.stdout) -> Dict[str, str]:
    ds = generate_sbm(cfg.synthetic)
    paths = save_dataset(ds, cfg.output.directory, prefix=cfg.synthetic.name)
    for kind, path in paths.items():
        print(f"{kind} = {path}", file=out)
    return paths


@dataclass(frozen=True)
class ModelSummary:
    dataset: str
    model: str
    mean_f1: float
    std_f1: float
    runs: int


def group_improvements(summaries: Sequence[ModelSummary]) -> Dict[str, Dict[str, float]]:
    # Amélioration relative (%) des moyennes de groupes, par jeu de données
    out: Dict[str, Dict[str, float]] = {}
    for dataset in sorted({s.dataset for s in summaries}):
        rows = [s for s in summaries if s.dataset == dataset]

        def group_mean(members) -> float:
            vals = [s.mean_f1 for s in rows if s.model in members]
            return float(np.mean(vals)) if vals else float("nan")

        existing = group_mean(GNN_FAMILIES - {"csgnn"})
        csgnn = group_mean({"csgnn"})
        bases = {"topology": group_mean(TOPOLOGY_FAMILIES), "feature": group_mean(FEATURE_FAMILIES)}
        entry = {}
        for gname, gval in (("gnn", existing), ("csgnn", csgnn)):
            for bname, bval in bases.items():
                ok = math.isfinite(gval) and math.isfinite(bval) and bval > 0
                entry[f"{gname}_over_{bname}"] = 100.0 * (gval - bval) / bval if ok else float("nan")
        out[dataset] = entry
    return out


def cmd_report(csv_path: str, out: TextIO = sys.stdout) -> Tuple[List[ModelSummary], Dict[str, Dict[str, float]]]:
    rows = [r for r in read_results(csv_path) if math.isfinite(r.f1_test)]
    groups: Dict[Tuple[str, str], List[float]] = {}
    for r in rows:
        groups.setdefault((r.dataset, r.model), []).append(r.f1_test)
    summaries = [
        ModelSummary(dataset, model, float(np.mean(v)), float(np.std(v)), len(v))
        for (dataset, model), v in sorted(groups.items())
    ]
    for s in summaries:
        print(f"{s.dataset:16s} {s.model:14s} f1={100 * s.mean_f1:6.2f} ± {100 * s.std_f1:5.2f} (n={s.runs})",
              file=out)
    improvements = group_improvements(summaries)
    for dataset, entry in improvements.items():
        parts = " ".join(f"{k}={v:+.2f}%" for k, v in entry.items() if math.isfinite(v))
        print(f"{dataset:16s} {parts or 'improvements: n/a'}", file=out)
    return summaries, improvements
