from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from sklearn.preprocessing import MinMaxScaler

from smoothgnn.errors import DatasetLoadError, DatasetValidationError

logger = logging.getLogger(__name__)

UNLABELED = -1

SPLIT_NONE = -1
SPLIT_TRAIN = 0
SPLIT_VAL = 1
SPLIT_TEST = 2
SPLIT_NAMES: Dict[str, int] = {"train": SPLIT_TRAIN, "val": SPLIT_VAL, "test": SPLIT_TEST}
SPLIT_TAGS: Dict[int, str] = {v: k for k, v in SPLIT_NAMES.items()}

DEFAULT_SPLIT_RATIOS = (0.7, 0.1, 0.2)

PathLike = Union[str, "os.PathLike[str]"]
SplitSpec = Union[Tuple[float, float, float], PathLike, None]


def _readonly(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    # Graphe non orienté en CSR : les voisins de v sont indices[indptr[v]:indptr[v+1]], triés
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    num_classes: int
    name: str = "dataset"
    id_map: Optional[Tuple[str, ...]] = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "indptr", _readonly(self.indptr, np.int64))
        object.__setattr__(self, "indices", _readonly(self.indices, np.int64))
        feats = np.array(self.features, dtype=np.float64, copy=True)
        if feats.ndim == 1:
            feats = feats.reshape(-1, 1)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", _readonly(self.labels, np.int64))
        object.__setattr__(self, "splits", _readonly(self.splits, np.int8))
        object.__setattr__(self, "meta", dict(self.meta))
        self._validate()

    # --- Validation des invariants ---
    def _validate(self) -> None:
        n = self.num_nodes
        if n < 0 or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise DatasetValidationError("indptr incohérent avec la liste d'adjacence")
        if np.any(np.diff(self.indptr) < 0):
            raise DatasetValidationError("indptr doit être croissant")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise DatasetValidationError("identifiant de voisin hors plage")
        src, dst = self.edge_index
        if np.any(src == dst):
            raise DatasetValidationError("boucle sur un noeud dans l'adjacence")
        keys = dst * max(n, 1) + src
        if np.any(np.diff(keys) <= 0):
            raise DatasetValidationError("listes de voisins non triées ou arêtes en double")
        if not np.array_equal(np.sort(src * max(n, 1) + dst), keys):
            raise DatasetValidationError("adjacence non symétrique")
        if len(self.indices) % 2 != 0:
            raise DatasetValidationError("nombre impair d'entrées d'adjacence")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetValidationError(
                f"matrice de caractéristiques {self.features.shape} pour {n} noeuds"
            )
        if self.labels.shape != (n,) or self.splits.shape != (n,):
            raise DatasetValidationError("labels et splits doivent couvrir tous les noeuds")
        labeled = self.labels != UNLABELED
        if np.any(self.labels[labeled] < 0) or np.any(self.labels[labeled] >= self.num_classes):
            raise DatasetValidationError(f"classe hors de [0, {self.num_classes})")
        if not np.all(np.isin(self.splits, (SPLIT_NONE, SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST))):
            raise DatasetValidationError("étiquette de split inconnue")
        if np.any(self.splits[~labeled] != SPLIT_NONE):
            raise DatasetValidationError("un noeud non étiqueté ne peut pas appartenir a un split")
        if self.id_map is not None and len(self.id_map) != n:
            raise DatasetValidationError("id_map ne couvre pas tous les noeuds")

    # --- Accès ---
    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @cached_property
    def edge_index(self) -> Tuple[np.ndarray, np.ndarray]:
        # 2|E| paires orientées (source, cible) alignées sur l'ordre CSR, cible = ligne
        dst = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.indptr))
        src = np.asarray(self.indices)
        dst.setflags(write=False)
        return src, dst

    @cached_property
    def adjacency(self) -> csr_matrix:
        n = self.num_nodes
        data = np.ones(len(self.indices), dtype=np.float64)
        return csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(n, n))

    def undirected_edges(self) -> Tuple[np.ndarray, np.ndarray]:
        src, dst = self.edge_index
        keep = dst < src
        return dst[keep], src[keep]

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED

    @property
    def train_mask(self) -> np.ndarray:
        return self.splits == SPLIT_TRAIN

    @property
    def val_mask(self) -> np.ndarray:
        return self.splits == SPLIT_VAL

    @property
    def test_mask(self) -> np.ndarray:
        return self.splits == SPLIT_TEST

    def with_features(self, features: np.ndarray) -> "Dataset":
        return replace(self, features=features)


@dataclass(frozen=True, eq=False)
class Subgraph:
    center: int
    nodes: np.ndarray
    adjacency: csr_matrix
    truncated: bool = False

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.nnz // 2)


def _csr_from_edges(n: int, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    keep = u != v
    u, v = u[keep], v[keep]
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.sort_indices()
    return adj.indptr.astype(np.int64), adj.indices.astype(np.int64)


def build_dataset(
    num_nodes: int,
    src: Sequence[int],
    dst: Sequence[int],
    features: np.ndarray,
    labels: Optional[Sequence[int]] = None,
    splits: Optional[Sequence[int]] = None,
    num_classes: Optional[int] = None,
    name: str = "dataset",
    id_map: Optional[Sequence[str]] = None,
    meta: Optional[Mapping[str, object]] = None,
) -> Dataset:
    # Les arêtes en double ou inversées sont fusionnées, les boucles retirées
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src) != len(dst):
        raise DatasetValidationError("listes d'extremites de longueurs différentes")
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
        raise DatasetValidationError("identifiant de noeud hors de [0, n)")
    indptr, indices = _csr_from_edges(num_nodes, src, dst)
    if labels is None:
        labels = np.full(num_nodes, UNLABELED, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if np.any(labels != UNLABELED) else 0
    if splits is None:
        splits = np.full(num_nodes, SPLIT_NONE, dtype=np.int8)
    return Dataset(
        indptr=indptr,
        indices=indices,
        features=np.asarray(features, dtype=np.float64),
        labels=labels,
        splits=np.asarray(splits),
        num_classes=int(num_classes),
        name=name,
        id_map=tuple(id_map) if id_map is not None else None,
        meta=dict(meta or {}),
    )


def replace_edges(ds: Dataset, u: np.ndarray, v: np.ndarray) -> Dataset:
    indptr, indices = _csr_from_edges(ds.num_nodes, u, v)
    return replace(ds, indptr=indptr, indices=indices)


# --- Lecture des fichiers texte ---
def _iter_tokens(path: PathLike):
    # Renvoie (numéro_de_ligne, jetons) en ignorant lignes vides et commentaires '#'
    if not os.path.isfile(path):
        raise DatasetLoadError("fichier introuvable", path=str(path))
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            yield lineno, line.split()


def _read_features(path: PathLike) -> np.ndarray:
    it = _iter_tokens(path)
    try:
        lineno, header = next(it)
    except StopIteration:
        raise DatasetLoadError("fichier de caractéristiques vide", path=str(path))
    if len(header) != 2:
        raise DatasetLoadError("en-tête attendu 'n d'", path=str(path), line=lineno)
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise DatasetLoadError("en-tête 'n d' non entier", path=str(path), line=lineno)
    rows: List[np.ndarray] = []
    for lineno, toks in it:
        if len(toks) != d:
            raise DatasetLoadError(f"{len(toks)} valeurs au lieu de {d}", path=str(path), line=lineno)
        try:
            rows.append(np.array(toks, dtype=np.float64))
        except ValueError:
            raise DatasetLoadError("valeur décimale invalide", path=str(path), line=lineno)
    if len(rows) != n:
        raise DatasetValidationError(f"{path}: {len(rows)} lignes de caractéristiques pour n={n}")
    if n == 0:
        return np.zeros((0, d))
    return np.vstack(rows)


def _read_pairs(path: PathLike, what: str) -> List[Tuple[int, str, str]]:
    pairs = []
    for lineno, toks in _iter_tokens(path):
        if len(toks) != 2:
            raise DatasetLoadError(f"ligne {what} attendue sur deux colonnes", path=str(path), line=lineno)
        pairs.append((lineno, toks[0], toks[1]))
    return pairs


def _read_id_map(path: PathLike) -> Dict[str, int]:
    mapping: Dict[str, int] = {}
    for lineno, toks in _iter_tokens(path):
        if len(toks) != 2:
            raise DatasetLoadError("ligne 'id_original id_dense' attendue", path=str(path), line=lineno)
        try:
            mapping[toks[0]] = int(toks[1])
        except ValueError:
            raise DatasetLoadError("identifiant dense non entier", path=str(path), line=lineno)
    return mapping


def _write_id_map(path: PathLike, mapping: Dict[str, int]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for token, idx in sorted(mapping.items(), key=lambda kv: kv[1]):
            f.write(f"{token} {idx}\n")


def _resolve_ids(tokens: List[str], id_map_path: Optional[PathLike]) -> Tuple[Dict[str, int], bool]:
    # Identifiants entiers utilisés tels quels ; sinon passage par le fichier id-map persisté
    if id_map_path is not None and os.path.isfile(id_map_path):
        return _read_id_map(id_map_path), True
    mapping: Dict[str, int] = {}
    try:
        for t in tokens:
            mapping[t] = int(t)
        return mapping, False
    except ValueError:
        pass
    if id_map_path is None:
        raise DatasetValidationError("identifiants non entiers : un fichier id-map est requis")
    mapping = {}
    for t in tokens:
        if t not in mapping:
            mapping[t] = len(mapping)
    _write_id_map(id_map_path, mapping)
    logger.info(f"Table d'identifiants écrite dans {id_map_path} ({len(mapping)} noeuds)")
    return mapping, True


def split_by_ratios(labels: np.ndarray, ratios: Sequence[float], seed: int) -> np.ndarray:
    # Tirage uniquement parmi les noeuds étiquetés
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or not np.isclose(sum(ratios), 1.0):
        raise DatasetValidationError(f"ratios de split invalides : {ratios}")
    labeled = np.flatnonzero(np.asarray(labels) != UNLABELED)
    order = np.random.default_rng(seed).permutation(labeled)
    m = len(order)
    n_train = int(round(ratios[0] * m))
    n_val = min(int(round(ratios[1] * m)), m - n_train)
    splits = np.full(len(labels), SPLIT_NONE, dtype=np.int8)
    splits[order[:n_train]] = SPLIT_TRAIN
    splits[order[n_train:n_train + n_val]] = SPLIT_VAL
    splits[order[n_train + n_val:]] = SPLIT_TEST
    return splits


def load_dataset(
    edge_path: PathLike,
    feature_path: PathLike,
    label_path: PathLike,
    split_spec: SplitSpec = DEFAULT_SPLIT_RATIOS,
    seed: int = 7,
    num_classes: Optional[int] = None,
    id_map_path: Optional[PathLike] = None,
    name: Optional[str] = None,
) -> Dataset:
    features = _read_features(feature_path)
    n = features.shape[0]

    edge_lines = _read_pairs(edge_path, "d'arête")
    label_lines = _read_pairs(label_path, "de label")
    split_lines = []
    if isinstance(split_spec, list):
        split_spec = tuple(split_spec)
    if split_spec is not None and not isinstance(split_spec, tuple):
        split_lines = _read_pairs(split_spec, "de split")

    tokens = [t for _, a, b in edge_lines for t in (a, b)]
    tokens += [a for _, a, _ in label_lines] + [a for _, a, _ in split_lines]
    mapping, remapped = _resolve_ids(tokens, id_map_path)

    def node_id(token: str, path: PathLike, lineno: int) -> int:
        if token not in mapping:
            raise DatasetValidationError(f"{path}:{lineno}: identifiant '{token}' absent de la table")
        v = mapping[token]
        if v < 0 or v >= n:
            raise DatasetValidationError(
                f"{path}:{lineno}: noeud {token} hors de [0, {n}) (trou dans la numerotation)"
            )
        return v

    src = np.empty(len(edge_lines), dtype=np.int64)
    dst = np.empty(len(edge_lines), dtype=np.int64)
    for i, (lineno, a, b) in enumerate(edge_lines):
        src[i] = node_id(a, edge_path, lineno)
        dst[i] = node_id(b, edge_path, lineno)
    self_loops = int(np.sum(src == dst))
    if self_loops:
        logger.warning(f"{edge_path}: {self_loops} boucles rejetées")

    labels = np.full(n, UNLABELED, dtype=np.int64)
    for lineno, a, c in label_lines:
        v = node_id(a, label_path, lineno)
        try:
            labels[v] = int(c)
        except ValueError:
            raise DatasetLoadError("classe non entiere", path=str(label_path), line=lineno)
    labeled = labels != UNLABELED
    if np.any(labels[labeled] < 0):
        raise DatasetValidationError(f"{label_path}: classe négative")
    inferred = int(labels[labeled].max()) + 1 if np.any(labeled) else 0
    if num_classes is None:
        num_classes = inferred
    elif inferred > num_classes:
        raise DatasetValidationError(f"{label_path}: classe {inferred - 1} hors de [0, {num_classes})")

    if isinstance(split_spec, tuple):
        splits = split_by_ratios(labels, split_spec, seed)
    else:
        splits = np.full(n, SPLIT_NONE, dtype=np.int8)
        for lineno, a, tag in split_lines:
            v = node_id(a, split_spec, lineno)
            if tag not in SPLIT_NAMES:
                raise DatasetLoadError(f"split inconnu '{tag}'", path=str(split_spec), line=lineno)
            if labels[v] == UNLABELED:
                raise DatasetValidationError(f"{split_spec}:{lineno}: noeud non étiqueté dans un split")
            splits[v] = SPLIT_NAMES[tag]

    id_map = None
    if remapped:
        inverse = {idx: tok for tok, idx in mapping.items()}
        id_map = tuple(inverse.get(i, str(i)) for i in range(n))

    ds = build_dataset(
        n, src, dst, features,
        labels=labels, splits=splits, num_classes=num_classes,
        name=name or os.path.splitext(os.path.basename(str(edge_path)))[0],
        id_map=id_map,
        meta={"self_loops_dropped": self_loops, "edge_lines": len(edge_lines)},
    )
    duplicates = len(edge_lines) - self_loops - ds.num_edges
    if duplicates:
        logger.debug(f"{edge_path}: {duplicates} arêtes en double fusionnées")
    logger.info(f"Graphe {ds.name} chargé : {n} noeuds, {ds.num_edges} aretes, d={ds.feature_dim}")
    return ds


def save_dataset(ds: Dataset, directory: PathLike, prefix: Optional[str] = None) -> Dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    prefix = prefix or ds.name
    paths = {
        "edges": os.path.join(directory, f"{prefix}.edges"),
        "features": os.path.join(directory, f"{prefix}.features"),
        "labels": os.path.join(directory, f"{prefix}.labels"),
        "splits": os.path.join(directory, f"{prefix}.splits"),
    }
    u, v = ds.undirected_edges()
    with open(paths["edges"], "w", encoding="utf-8") as f:
        for a, b in zip(u.tolist(), v.tolist()):
            f.write(f"{a} {b}\n")
    # 17 chiffres significatifs : relecture exacte au bit près
    np.savetxt(paths["features"], ds.features, fmt="%.17g",
               header=f"{ds.num_nodes} {ds.feature_dim}", comments="")
    with open(paths["labels"], "w", encoding="utf-8") as f:
        for node in np.flatnonzero(ds.labeled_mask).tolist():
            f.write(f"{node} {int(ds.labels[node])}\n")
    with open(paths["splits"], "w", encoding="utf-8") as f:
        for node in np.flatnonzero(ds.splits != SPLIT_NONE).tolist():
            f.write(f"{node} {SPLIT_TAGS[int(ds.splits[node])]}\n")
    if ds.id_map is not None:
        paths["id_map"] = os.path.join(directory, f"{prefix}.idmap")
        _write_id_map(paths["id_map"], {tok: i for i, tok in enumerate(ds.id_map)})
    return paths


def normalize_features(ds: Dataset) -> Dataset:
    # Min-max par dimension vers [0,1] ; dimensions constantes -> 0
    if not np.all(np.isfinite(ds.features)):
        raise DatasetValidationError("caractéristiques NaN ou infinies")
    if ds.num_nodes == 0 or ds.feature_dim == 0:
        return ds
    scaler = MinMaxScaler(feature_range=(0.0, 1.0), clip=True)
    return ds.with_features(scaler.fit_transform(np.asarray(ds.features)))


def khop_subgraph(
    ds: Dataset,
    v: int,
    K: int,
    max_nodes: Optional[int] = None,
    seed: int = 0,
) -> Subgraph:
    if not 0 <= v < ds.num_nodes:
        raise DatasetValidationError(f"noeud {v} hors de [0, {ds.num_nodes})")
    if K < 1:
        raise ValueError("K doit être >= 1")
    order = [int(v)]
    visited = np.zeros(ds.num_nodes, dtype=bool)
    visited[v] = True
    frontier = np.array([v], dtype=np.int64)
    truncated = False
    rng = None
    for _ in range(K):
        cand = np.concatenate([ds.neighbors(u) for u in frontier]) if len(frontier) else np.array([], dtype=np.int64)
        layer = np.unique(cand[~visited[cand]])  # ordre BFS, égalités par id croissant
        if len(layer) == 0:
            break
        if max_nodes is not None and len(order) + len(layer) > max_nodes:
            # Plafond pour les hubs : sous-échantillonnage uniforme de la couche
            if rng is None:
                rng = np.random.default_rng([seed, int(v)])
            room = max(0, max_nodes - len(order))
            layer = np.sort(rng.choice(layer, size=room, replace=False))
            truncated = True
        visited[layer] = True
        order.extend(layer.tolist())
        frontier = layer
        if truncated:
            break
    nodes = np.asarray(order, dtype=np.int64)
    sub = ds.adjacency[nodes][:, nodes].tocsr()
    sub.sort_indices()
    return Subgraph(center=int(v), nodes=nodes, adjacency=sub, truncated=truncated)


def dataset_statistics(ds: Dataset) -> Dict[str, float]:
    n = ds.num_nodes
    return {
        "nodes": n,
        "edges": ds.num_edges,
        "average_degree": (2.0 * ds.num_edges / n) if n else 0.0,
        "feature_dim": ds.feature_dim,
        "classes": ds.num_classes,
        "labeled_fraction": float(np.mean(ds.labeled_mask)) if n else 0.0,
    }


def drop_unlabeled_nodes(ds: Dataset) -> Dataset:
    keep = np.flatnonzero(ds.labeled_mask)
    remap = np.full(ds.num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    u, v = ds.undirected_edges()
    both = (remap[u] >= 0) & (remap[v] >= 0)
    id_map = tuple(ds.id_map[i] for i in keep) if ds.id_map is not None else None
    return build_dataset(
        len(keep), remap[u[both]], remap[v[both]], ds.features[keep],
        labels=ds.labels[keep], splits=ds.splits[keep], num_classes=ds.num_classes,
        name=f"{ds.name}-labeled", id_map=id_map, meta=ds.meta,
    )
