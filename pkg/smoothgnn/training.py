from __future__ import annotations

import logging
import os
import struct
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from sklearn.metrics import f1_score

from smoothgnn import autodiff as ad
from smoothgnn.errors import CheckpointError, ConfigError, DatasetValidationError, TrainingDivergenceError
from smoothgnn.graph import UNLABELED, Dataset
from smoothgnn.models import (
    FEATURE_FAMILIES,
    GraphInputs,
    ModelSpec,
    NodeClassifier,
    ParamStore,
    build_model,
)

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CSGN"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sH32sI")

# Familles entraînées par mini-lots quand batch_size est fixé
MINIBATCH_FAMILIES = FEATURE_FAMILIES | {"topo-logistic"}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 0.0
    dropout: Optional[float] = None
    patience: int = 100
    max_epochs: int = 2000
    seed: int = 0
    batch_size: Optional[int] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    label_prop_iters: int = 1000
    label_prop_tolerance: float = 1e-6

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr doit être > 0")
        if self.patience < 1:
            raise ConfigError("patience doit être >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs doit être >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay doit être >= 0")
        if self.dropout is not None and not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout={self.dropout} hors de [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size doit être >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float


@dataclass(frozen=True, eq=False)
class RunResult:
    family: str
    seed: int
    best_val_f1: float
    test_f1: float
    train_f1: float
    epochs_run: int
    best_epoch: int
    history: Tuple[EpochRecord, ...] = ()
    wall_time: float = 0.0
    model: Optional[NodeClassifier] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("best_val_f1", "test_f1", "train_f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} hors de [0, 1]")

    def payload(self) -> Tuple:
        # Tout sauf le temps d'exécution : deux exécutions de même graine doivent coïncider
        return (self.family, self.seed, self.best_val_f1, self.test_f1, self.train_f1,
                self.epochs_run, self.best_epoch, self.history)


def f1_micro(pred: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("f1_micro : masque vide")
    y_true = np.asarray(truth)[idx]
    if np.any(y_true == UNLABELED):
        raise ValueError("f1_micro : noeud non étiqueté dans le masque")
    return float(f1_score(y_true, np.asarray(pred)[idx], average="micro"))


def evaluate(model: NodeClassifier, inputs: GraphInputs, ds: Dataset) -> Dict[str, float]:
    pred = model.predict(inputs)
    return {
        "train": f1_micro(pred, ds.labels, ds.train_mask),
        "val": f1_micro(pred, ds.labels, ds.val_mask),
        "test": f1_micro(pred, ds.labels, ds.test_mask),
    }


def effective_spec(spec: ModelSpec, cfg: TrainConfig) -> ModelSpec:
    # Le dropout de la configuration d'entraînement remplace celui du modèle
    if cfg.dropout is None:
        return spec
    return replace(spec, dropout=cfg.dropout, attention_dropout=cfg.dropout)


def _check_splits(ds: Dataset) -> None:
    for name, mask in (("train", ds.train_mask), ("val", ds.val_mask), ("test", ds.test_mask)):
        if not np.any(mask):
            raise DatasetValidationError(f"split '{name}' vide")
    if int(ds.train_mask.sum()) < ds.num_classes:
        raise DatasetValidationError(
            f"{int(ds.train_mask.sum())} noeuds d'entraînement pour {ds.num_classes} classes"
        )


def _step_seed(seed: int, epoch: int, batch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, batch]).generate_state(1)[0])


def _batches(ds: Dataset, family: str, cfg: TrainConfig, epoch: int) -> List[np.ndarray]:
    if cfg.batch_size is None or family not in MINIBATCH_FAMILIES:
        return [ds.train_mask]
    train = np.flatnonzero(ds.train_mask)
    order = np.random.default_rng([cfg.seed, epoch]).permutation(train)
    masks = []
    for start in range(0, len(order), cfg.batch_size):
        m = np.zeros(ds.num_nodes, dtype=bool)
        m[order[start:start + cfg.batch_size]] = True
        masks.append(m)
    return masks


def train(
    ds: Dataset,
    spec: ModelSpec,
    cfg: Optional[TrainConfig] = None,
    topo=None,
    inputs: Optional[GraphInputs] = None,
    checkpoint_path: Optional[str] = None,
) -> RunResult:
    cfg = cfg or TrainConfig()
    _check_splits(ds)
    spec = effective_spec(spec, cfg)
    if inputs is None:
        inputs = GraphInputs.from_dataset(ds, topo=topo if spec.uses_topology else None)
    started = time.perf_counter()
    model = build_model(spec, inputs, ds.num_classes, seed=cfg.seed)

    if not model.trainable:
        lp = model.fit(ds, max_iters=cfg.label_prop_iters, tolerance=cfg.label_prop_tolerance)
        scores = evaluate(model, inputs, ds)
        if checkpoint_path:
            save_checkpoint(checkpoint_path, model.params, model.spec_hash)
        return RunResult(
            family=spec.family, seed=cfg.seed, best_val_f1=scores["val"], test_f1=scores["test"],
            train_f1=scores["train"], epochs_run=lp.iterations, best_epoch=lp.iterations,
            wall_time=time.perf_counter() - started, model=model,
        )

    params = dict(model.params.items())
    opt = ad.Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    history: List[EpochRecord] = []
    best_val, best_epoch, best_params = -1.0, 0, model.params.arrays()
    since_best = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        losses = []
        for b, mask in enumerate(_batches(ds, spec.family, cfg, epoch)):
            opt.zero_grad()
            logits = model.forward(inputs, training=True, seed=_step_seed(cfg.seed, epoch, b))
            loss = ad.softmax_cross_entropy(logits, ds.labels, mask)
            if cfg.weight_decay:
                loss = ad.add(loss, ad.l2_penalty(params.values(), cfg.weight_decay))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergenceError(
                    f"{spec.family} : perte non finie ({value}) à l'époque {epoch}, lot {b}"
                )
            ad.backward(loss)
            opt.step()
            losses.append(value)

        val_f1 = f1_micro(model.predict(inputs), ds.labels, ds.val_mask)
        history.append(EpochRecord(epoch, float(np.mean(losses)), val_f1))
        # Amélioration stricte : à égalité l'époque la plus ancienne est conservée
        if val_f1 > best_val:
            best_val, best_epoch, best_params = val_f1, epoch, model.params.arrays()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                logger.info(f"{spec.family} : arrêt anticipé à l'époque {epoch} (meilleure : {best_epoch})")
                break
        if epoch % 50 == 0:
            logger.debug(f"{spec.family} époque {epoch} : perte {history[-1].train_loss:.4f} F1 val {val_f1:.4f}")

    model.params.assign(best_params)
    scores = evaluate(model, inputs, ds)
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model.params, model.spec_hash)
    result = RunResult(
        family=spec.family, seed=cfg.seed, best_val_f1=best_val, test_f1=scores["test"],
        train_f1=scores["train"], epochs_run=epoch, best_epoch=best_epoch, history=tuple(history),
        wall_time=time.perf_counter() - started, model=model,
    )
    logger.info(
        f"{spec.family} graine {cfg.seed} : F1 val {result.best_val_f1:.4f}, "
        f"F1 test {result.test_f1:.4f} ({epoch} époques)"
    )
    return result


# --- Checkpoints ---
def save_checkpoint(path: str, params: Union[ParamStore, Mapping[str, np.ndarray]], spec_hash: bytes) -> None:
    if len(spec_hash) != 32:
        raise CheckpointError("empreinte de spec attendue sur 32 octets")
    arrays = params.arrays() if isinstance(params, ParamStore) else dict(params)
    chunks = [_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, spec_hash, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype=np.float64)
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp, path)


def load_checkpoint(path: str, expected_hash: Optional[bytes] = None) -> ParamStore:
    # Lecture complète avant de construire quoi que ce soit : pas d'état partiel
    if not os.path.isfile(path):
        raise CheckpointError(f"{path}: checkpoint introuvable")
    with open(path, "rb") as f:
        blob = f.read()
    try:
        magic, version, spec_hash, count = _CKPT_HEADER.unpack_from(blob, 0)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: magic inconnu {magic!r}")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: version {version} non prise en charge")
        offset = _CKPT_HEADER.size
        arrays: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (n_name,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + n_name].decode("utf-8")
            offset += n_name
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(shape, dtype=np.int64)) * 8
            if offset + size > len(blob):
                raise CheckpointError(f"{path}: fichier tronqué dans '{name}'")
            arrays[name] = np.frombuffer(blob, dtype="<f8", count=size // 8, offset=offset).reshape(shape).copy()
            offset += size
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: fichier tronqué ou corrompu ({e})")
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} octets en trop")
    if expected_hash is not None and spec_hash != expected_hash:
        raise CheckpointError(f"{path}: empreinte de spec différente (modèle incompatible)")
    return ParamStore.from_arrays(arrays)


def restore_model(model: NodeClassifier, path: str) -> NodeClassifier:
    store = load_checkpoint(path, expected_hash=model.spec_hash)
    model.params.assign(store.arrays())
    return model
