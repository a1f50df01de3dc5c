"""Run configuration read from INI files.

Sections: [dataset] [synthetic] [model] [train] [topo] [info] [sweep] [output].
A ``preset`` key in [model] fills the per-dataset hyperparameters; explicit keys
in the file win over the preset, command-line flags win over the file.
"""
from __future__ import annotations

import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple, Union

from smoothgnn.errors import ConfigError, DatasetLoadError
from smoothgnn.graph import DEFAULT_SPLIT_RATIOS
from smoothgnn.infogain import DEFAULT_BINS, DEFAULT_EPSILON, MODE_JOINT, MODE_MARGINAL
from smoothgnn.models import ALL_FAMILIES, ModelSpec
from smoothgnn.synthetic import SBMConfig
from smoothgnn.training import TrainConfig
from smoothgnn.wavelets import TopoConfig, default_sample_points

logger = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("metrics", "train", "sweep-broadcast", "sweep-edgedrop", "verify", "gen-sbm", "report")

# Réglages communs à tous les jeux de données
COMMON_SETTINGS = {"lr": 0.01, "patience": 100, "batch_size": 512, "topo_dim": 64, "residual": True}

# dropout (= dropout d'attention), weight decay, taille cachée
PRESETS: Dict[str, Dict[str, float]] = {
    "citeseer": {"dropout": 0.2, "weight_decay": 0.01, "hidden": 8},
    "cora": {"dropout": 0.2, "weight_decay": 0.01, "hidden": 8},
    "pubmed": {"dropout": 0.3, "weight_decay": 0.0, "hidden": 16},
    "amazon": {"dropout": 0.3, "weight_decay": 0.0, "hidden": 32},
    "bgp-small": {"dropout": 0.3, "weight_decay": 0.0, "hidden": 32},
    "bgp-full": {"dropout": 0.3, "weight_decay": 0.0, "hidden": 32},
}


@dataclass(frozen=True)
class DatasetConfig:
    name: Optional[str] = None
    edges: Optional[str] = None
    features: Optional[str] = None
    labels: Optional[str] = None
    splits: Union[Tuple[float, float, float], str] = DEFAULT_SPLIT_RATIOS
    id_map: Optional[str] = None
    num_classes: Optional[int] = None
    split_seed: int = 7
    normalize: bool = True
    synthetic: bool = True

    def paths(self) -> Dict[str, str]:
        out = {"edges": self.edges, "features": self.features, "labels": self.labels}
        if isinstance(self.splits, str):
            out["splits"] = self.splits
        return {k: v for k, v in out.items() if v is not None}


@dataclass(frozen=True)
class InfoConfig:
    bins: int = DEFAULT_BINS
    epsilon: float = DEFAULT_EPSILON
    mode: str = MODE_MARGINAL
    noise_samples: int = 1_000_000
    noise_tolerance: float = 0.05
    verify_rounds: Tuple[int, ...] = (0, 1, 2, 4, 8, 16, 32, 64)
    spearman_threshold: float = 0.9

    def __post_init__(self):
        if self.mode not in (MODE_JOINT, MODE_MARGINAL):
            raise ConfigError(f"mode d'histogramme inconnu : {self.mode}")
        if self.bins < 1 or self.epsilon <= 0:
            raise ConfigError("bins >= 1 et epsilon > 0 sont requis")


@dataclass(frozen=True)
class SweepConfig:
    rounds: Tuple[int, ...] = tuple(2 ** i for i in range(9))
    fractions: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    models: Tuple[str, ...] = ("gcn", "gat", "csgnn", "mlp")

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("la liste de graines d'un balayage ne peut pas être vide")
        if not self.rounds or min(self.rounds) < 0:
            raise ConfigError("liste de rounds vide ou négative")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ConfigError("fractions hors de [0, 1]")
        unknown = [m for m in self.models if m not in ALL_FAMILIES]
        if unknown:
            raise ConfigError(f"modèles inconnus dans [sweep] : {unknown}")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    csv: str = "results.csv"
    experiment_id: str = ""
    workers: int = 1
    checkpoints: bool = True

    @property
    def csv_path(self) -> str:
        return self.csv if os.path.isabs(self.csv) else os.path.join(self.directory, self.csv)


@dataclass(frozen=True)
class RunConfig:
    kind: str = "train"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    synthetic: SBMConfig = field(default_factory=SBMConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    topo: TopoConfig = field(default_factory=TopoConfig)
    topo_cache: Optional[str] = None
    info: InfoConfig = field(default_factory=InfoConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    all_models: bool = False
    source: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"type d'expérience inconnu : {self.kind}")

    @property
    def dataset_name(self) -> str:
        if self.dataset.name:
            return self.dataset.name
        return self.synthetic.name if self.dataset.synthetic else "dataset"

    @property
    def experiment_id(self) -> str:
        return self.output.experiment_id or f"{self.kind}-{self.dataset_name}"

    def validate(self) -> "RunConfig":
        # Chemins vérifiés au moment de la validation, pas à la lecture
        if not self.dataset.synthetic:
            paths = self.dataset.paths()
            for key in ("edges", "features", "labels"):
                if key not in paths:
                    raise ConfigError(f"[dataset] {key} manquant")
            for key, path in paths.items():
                if not os.path.isfile(path):
                    raise DatasetLoadError(f"fichier [dataset] {key} introuvable", path=path)
        return self


# --- Lecture ---
def _split_list(raw: str):
    return [tok.strip() for tok in raw.replace(";", ",").split(",") if tok.strip()]


def _get(parser: configparser.ConfigParser, section: str, key: str, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw == "":
        return default
    try:
        if cast is bool:
            return parser.getboolean(section, key)
        if cast == "ints":
            return tuple(int(x) for x in _split_list(raw))
        if cast == "floats":
            return tuple(float(x) for x in _split_list(raw))
        if cast == "strs":
            return tuple(_split_list(raw))
        return cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} : valeur invalide")


def _resolve(base_dir: str, path: Optional[str]) -> Optional[str]:
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def _dataset_section(p, base_dir) -> DatasetConfig:
    s = "dataset"
    d = DatasetConfig()
    splits_raw = _get(p, s, "splits", str, None)
    splits: Union[Tuple[float, float, float], str] = d.splits
    if splits_raw is not None:
        parts = _split_list(splits_raw)
        try:
            ratios = tuple(float(x) for x in parts)
        except ValueError:
            # Pas des nombres : chemin d'un fichier de splits
            splits = _resolve(base_dir, splits_raw)  # type: ignore[assignment]
        else:
            if len(ratios) != 3:
                raise ConfigError(f"[dataset] splits : trois ratios attendus, {len(ratios)} reçus")
            splits = ratios  # type: ignore[assignment]
    edges = _resolve(base_dir, _get(p, s, "edges", str, None))
    return DatasetConfig(
        name=_get(p, s, "name", str, None),
        edges=edges,
        features=_resolve(base_dir, _get(p, s, "features", str, None)),
        labels=_resolve(base_dir, _get(p, s, "labels", str, None)),
        splits=splits,
        id_map=_resolve(base_dir, _get(p, s, "id_map", str, None)),
        num_classes=_get(p, s, "num_classes", int, None),
        split_seed=_get(p, s, "split_seed", int, d.split_seed),
        normalize=_get(p, s, "normalize", bool, d.normalize),
        synthetic=_get(p, s, "synthetic", bool, edges is None),
    )


def _synthetic_section(p) -> SBMConfig:
    s = "synthetic"
    d = SBMConfig()
    return SBMConfig(
        nodes=_get(p, s, "nodes", int, d.nodes),
        blocks=_get(p, s, "blocks", int, d.blocks),
        p_intra=_get(p, s, "p_intra", float, d.p_intra),
        p_inter=_get(p, s, "p_inter", float, d.p_inter),
        feature_dim=_get(p, s, "feature_dim", int, d.feature_dim),
        mean_scale=_get(p, s, "mean_scale", float, d.mean_scale),
        feature_noise=_get(p, s, "feature_noise", float, d.feature_noise),
        label_noise=_get(p, s, "label_noise", float, d.label_noise),
        seed=_get(p, s, "seed", int, d.seed),
        split=_get(p, s, "split", "floats", d.split),
        name=_get(p, s, "name", str, d.name),
    )


def _preset(p) -> Dict[str, float]:
    name = _get(p, "model", "preset", str, None)
    if name is None:
        return {}
    if name not in PRESETS:
        raise ConfigError(f"preset inconnu : {name} (choix : {', '.join(sorted(PRESETS))})")
    return dict(COMMON_SETTINGS, **PRESETS[name])


def _model_section(p, preset) -> ModelSpec:
    s = "model"
    d = ModelSpec()
    dropout = _get(p, s, "dropout", float, preset.get("dropout", d.dropout))
    return ModelSpec(
        family=_get(p, s, "family", str, d.family),
        rounds=_get(p, s, "rounds", int, d.rounds),
        hidden_dim=_get(p, s, "hidden", int, int(preset.get("hidden", d.hidden_dim))),
        dropout=dropout,
        attention_dropout=_get(p, s, "attention_dropout", float, dropout),
        use_topo_features=_get(p, s, "use_topo_features", bool, d.use_topo_features),
        residual=_get(p, s, "residual", bool, bool(preset.get("residual", d.residual))),
        heads=_get(p, s, "heads", int, d.heads),
        renormalize_dropped=_get(p, s, "renormalize_dropped", bool, d.renormalize_dropped),
        elu_alpha=_get(p, s, "elu_alpha", float, d.elu_alpha),
        leaky_slope=_get(p, s, "leaky_slope", float, d.leaky_slope),
    )


def _train_section(p, preset) -> TrainConfig:
    s = "train"
    d = TrainConfig()
    batch = _get(p, s, "batch_size", int, preset.get("batch_size"))
    if _get(p, s, "full_batch", bool, False):
        batch = None
    return TrainConfig(
        lr=_get(p, s, "lr", float, preset.get("lr", d.lr)),
        weight_decay=_get(p, s, "weight_decay", float, preset.get("weight_decay", d.weight_decay)),
        dropout=_get(p, s, "dropout", float, None),
        patience=_get(p, s, "patience", int, int(preset.get("patience", d.patience))),
        max_epochs=_get(p, s, "max_epochs", int, d.max_epochs),
        seed=_get(p, s, "seed", int, d.seed),
        batch_size=int(batch) if batch is not None else None,
        label_prop_iters=_get(p, s, "label_prop_iters", int, d.label_prop_iters),
        label_prop_tolerance=_get(p, s, "label_prop_tolerance", float, d.label_prop_tolerance),
    )


def _topo_section(p, preset, base_dir) -> Tuple[TopoConfig, Optional[str]]:
    s = "topo"
    d = TopoConfig()
    dim = _get(p, s, "dim", int, int(preset.get("topo_dim", d.dim)))
    t_max = _get(p, s, "t_max", float, 20.0)
    topo = TopoConfig(
        dim=dim,
        hops=_get(p, s, "hops", int, d.hops),
        scale=_get(p, s, "scale", float, d.scale),
        sample_points=default_sample_points(dim // 2, t_max),
        max_nodes=_get(p, s, "max_nodes", int, d.max_nodes),
        seed=_get(p, s, "seed", int, d.seed),
        workers=_get(p, s, "workers", int, d.workers),
    )
    return topo, _resolve(base_dir, _get(p, s, "cache", str, None))


def _info_section(p) -> InfoConfig:
    s = "info"
    d = InfoConfig()
    return InfoConfig(
        bins=_get(p, s, "bins", int, d.bins),
        epsilon=_get(p, s, "epsilon", float, d.epsilon),
        mode=_get(p, s, "mode", str, d.mode),
        noise_samples=_get(p, s, "noise_samples", int, d.noise_samples),
        noise_tolerance=_get(p, s, "noise_tolerance", float, d.noise_tolerance),
        verify_rounds=_get(p, s, "verify_rounds", "ints", d.verify_rounds),
        spearman_threshold=_get(p, s, "spearman_threshold", float, d.spearman_threshold),
    )


def _sweep_section(p) -> SweepConfig:
    s = "sweep"
    d = SweepConfig()
    return SweepConfig(
        rounds=_get(p, s, "rounds", "ints", d.rounds),
        fractions=_get(p, s, "fractions", "floats", d.fractions),
        seeds=_get(p, s, "seeds", "ints", d.seeds),
        models=_get(p, s, "models", "strs", d.models),
    )


def _output_section(p, base_dir) -> OutputConfig:
    s = "output"
    d = OutputConfig()
    return OutputConfig(
        directory=_resolve(base_dir, _get(p, s, "dir", str, d.directory)),
        csv=_get(p, s, "csv", str, d.csv),
        experiment_id=_get(p, s, "experiment_id", str, d.experiment_id),
        workers=_get(p, s, "workers", int, d.workers),
        checkpoints=_get(p, s, "checkpoints", bool, d.checkpoints),
    )


def parse_config(text: str, kind: str = "train", base_dir: str = ".", source: Optional[str] = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as e:
        raise ConfigError(f"configuration illisible : {e}")
    preset = _preset(parser)
    try:
        topo, cache = _topo_section(parser, preset, base_dir)
        return RunConfig(
            kind=kind,
            dataset=_dataset_section(parser, base_dir),
            synthetic=_synthetic_section(parser),
            model=_model_section(parser, preset),
            train=_train_section(parser, preset),
            topo=topo,
            topo_cache=cache,
            info=_info_section(parser),
            sweep=_sweep_section(parser),
            output=_output_section(parser, base_dir),
            source=source,
        )
    except ConfigError:
        raise
    except ValueError as e:
        # Erreurs de validation des dataclasses de configuration
        raise ConfigError(str(e))


def load_config(path: Optional[str], kind: str = "train") -> RunConfig:
    if path is None:
        return RunConfig(kind=kind)
    if not os.path.isfile(path):
        raise ConfigError(f"fichier de configuration introuvable : {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    cfg = parse_config(text, kind=kind, base_dir=os.path.dirname(os.path.abspath(path)), source=path)
    logger.debug(f"Configuration {path} chargée ({cfg.model.family}, graine {cfg.train.seed})")
    return cfg


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, object]) -> RunConfig:
    # Drapeaux de ligne de commande : --model --seed --out --all-models --workers
    out = cfg
    if overrides.get("model"):
        out = replace(out, model=replace(out.model, family=str(overrides["model"])))
    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])  # type: ignore[arg-type]
        out = replace(out, train=replace(out.train, seed=seed))
    if overrides.get("out"):
        out = replace(out, output=replace(out.output, directory=str(overrides["out"])))
    if overrides.get("workers"):
        out = replace(out, output=replace(out.output, workers=int(overrides["workers"])))  # type: ignore[arg-type]
    if overrides.get("all_models"):
        out = replace(out, all_models=True)
    return out
