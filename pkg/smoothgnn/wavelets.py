from __future__ import annotations

import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.csgraph import laplacian

from smoothgnn.errors import DatasetLoadError, DatasetValidationError
from smoothgnn.graph import Dataset, Subgraph, khop_subgraph

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"TOPO"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sHQQdQ")


def default_sample_points(count: int = 32, t_max: float = 20.0) -> Tuple[float, ...]:
    # Points régulièrement espacés dans (0, t_max]
    return tuple(np.linspace(t_max / count, t_max, count).tolist())


@dataclass(frozen=True)
class TopoConfig:
    dim: int = 64
    hops: int = 2
    scale: float = 1.0
    sample_points: Tuple[float, ...] = field(default_factory=default_sample_points)
    max_nodes: int = 500
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.scale <= 0:
            raise DatasetValidationError("l'échelle s du noyau de chaleur doit être > 0")
        if self.hops < 1:
            raise DatasetValidationError("hops doit être >= 1")
        if self.dim != 2 * len(self.sample_points):
            raise DatasetValidationError(
                f"dim={self.dim} incompatible avec {len(self.sample_points)} points (dim = 2 x points)"
            )


@dataclass(frozen=True, eq=False)
class TopoFeatureMatrix:
    vectors: np.ndarray
    scale: float
    sample_points: Tuple[float, ...]
    hops: int = 2
    truncated_nodes: int = 0

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def num_nodes(self) -> int:
        return int(self.vectors.shape[0])


def heat_wavelet(sg: Subgraph, s: float) -> np.ndarray:
    # Psi = U diag(exp(-s lambda)) U^T sur le laplacien normalisé symétrique du sous-graphe
    if s <= 0:
        raise ValueError("s doit être > 0")
    if sg.num_nodes == 0:
        raise ValueError("sous-graphe vide")
    L = laplacian(sg.adjacency.toarray(), normed=True)
    lam, U = eigh(L)
    lam = np.clip(lam, 0.0, 2.0)
    psi = (U * np.exp(-s * lam)) @ U.T
    return 0.5 * (psi + psi.T)


def characteristic_embedding(psi_column: np.ndarray, sample_points: Sequence[float]) -> np.ndarray:
    # phi(t) = moyenne des exp(i t psi_j) ; sortie (Re phi(t1), Im phi(t1), Re phi(t2), ...)
    t = np.asarray(sample_points, dtype=np.float64)
    phi = np.exp(1j * np.outer(t, np.sort(psi_column))).mean(axis=1)
    out = np.empty(2 * len(t))
    out[0::2] = phi.real
    out[1::2] = phi.imag
    return out


def node_topo_feature(
    ds: Dataset,
    v: int,
    K: int = 2,
    s: float = 1.0,
    sample_points: Optional[Sequence[float]] = None,
    dim: int = 64,
    max_nodes: Optional[int] = 500,
    seed: int = 0,
) -> np.ndarray:
    points = default_sample_points() if sample_points is None else tuple(sample_points)
    if dim != 2 * len(points):
        raise DatasetValidationError("dim doit valoir 2 x nombre de points d'échantillonnage")
    sg = khop_subgraph(ds, v, K, max_nodes=max_nodes, seed=seed)
    psi = heat_wavelet(sg, s)
    # Le centre est toujours en position 0 dans le sous-graphe
    return characteristic_embedding(psi[:, 0], points)


def all_topo_features(ds: Dataset, config: Optional[TopoConfig] = None) -> TopoFeatureMatrix:
    config = config or TopoConfig()

    def one(v: int) -> Tuple[np.ndarray, bool]:
        sg = khop_subgraph(ds, v, config.hops, max_nodes=config.max_nodes, seed=config.seed)
        psi = heat_wavelet(sg, config.scale)
        return characteristic_embedding(psi[:, 0], config.sample_points), sg.truncated

    nodes = range(ds.num_nodes)
    if config.workers > 1:
        # map conserve l'ordre des noeuds
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, nodes))
    else:
        results = [one(v) for v in nodes]

    vectors = np.zeros((ds.num_nodes, config.dim))
    truncated = 0
    for v, (vec, cut) in enumerate(results):
        vectors[v] = vec
        truncated += int(cut)
    if truncated:
        logger.warning(
            f"{truncated} sous-graphes tronqués à {config.max_nodes} noeuds (hubs sous-échantillonnés)"
        )
    vectors.setflags(write=False)
    return TopoFeatureMatrix(
        vectors=vectors, scale=config.scale, sample_points=tuple(config.sample_points),
        hops=config.hops, truncated_nodes=truncated,
    )


def save_topo_cache(path: str, topo: TopoFeatureMatrix) -> None:
    n, dim = topo.vectors.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, n, dim, topo.scale, topo.hops))
        f.write(np.asarray(topo.sample_points, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(topo.vectors, dtype="<f8").tobytes())


def load_topo_cache(path: str, expected: Optional[TopoConfig] = None,
                    num_nodes: Optional[int] = None) -> TopoFeatureMatrix:
    if not os.path.isfile(path):
        raise DatasetLoadError("cache de topologie introuvable", path=path)
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise DatasetLoadError("cache de topologie tronqué", path=path)
    magic, version, n, dim, scale, hops = _HEADER.unpack_from(blob, 0)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise DatasetLoadError("cache de topologie : magic ou version inconnus", path=path)
    n_points = dim // 2
    body = blob[_HEADER.size:]
    if len(body) != 8 * (n_points + n * dim):
        raise DatasetLoadError("cache de topologie tronqué", path=path)
    points = tuple(np.frombuffer(body[:8 * n_points], dtype="<f8").tolist())
    vectors = np.frombuffer(body[8 * n_points:], dtype="<f8").reshape(n, dim).astype(np.float64)
    if expected is not None and (
        expected.dim != dim or expected.scale != scale or expected.hops != hops
        or tuple(expected.sample_points) != points
    ):
        raise DatasetValidationError(f"{path}: paramètres du cache différents de la configuration")
    if num_nodes is not None and num_nodes != n:
        raise DatasetValidationError(f"{path}: {n} lignes pour {num_nodes} noeuds")
    vectors.setflags(write=False)
    return TopoFeatureMatrix(vectors=vectors, scale=scale, sample_points=points, hops=hops)
