from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Type

import numpy as np

from smoothgnn import autodiff as ad
from smoothgnn.autodiff import SegmentIndex, Tensor
from smoothgnn.errors import ConfigError, DatasetValidationError, ShapeError
from smoothgnn.graph import UNLABELED, Dataset
from smoothgnn.smoothness import attention_dim, feature_smoothness

logger = logging.getLogger(__name__)

# Les huit familles du tableau de résultats, puis les variantes additionnelles
CORE_FAMILIES = ("csgnn", "gcn", "sage-mean", "sage-maxpool", "gat", "mlp", "logistic", "labelprop")
EXTRA_FAMILIES = ("sage-gcn", "topo-logistic")
ALL_FAMILIES = CORE_FAMILIES + EXTRA_FAMILIES

GNN_FAMILIES = frozenset({"csgnn", "gcn", "sage-mean", "sage-maxpool", "sage-gcn", "gat"})
FEATURE_FAMILIES = frozenset({"mlp", "logistic"})
TOPOLOGY_FAMILIES = frozenset({"labelprop", "topo-logistic"})

Activation = Optional[Callable[[Tensor], Tensor]]


@dataclass(frozen=True)
class ModelSpec:
    family: str = "csgnn"
    rounds: int = 2
    hidden_dim: int = 8
    dropout: float = 0.0
    attention_dropout: float = 0.0
    use_topo_features: bool = True
    residual: bool = False
    heads: int = 1
    renormalize_dropped: bool = False
    elu_alpha: float = 1.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.family not in ALL_FAMILIES:
            raise ConfigError(f"famille de modèle inconnue : {self.family}")
        if self.family in GNN_FAMILIES | {"mlp"} and self.rounds < 1:
            raise ConfigError("K >= 1 est requis pour les modèles à passage de messages")
        if self.hidden_dim < 1 or self.heads < 1:
            raise ConfigError("hidden_dim et heads doivent être positifs")
        for name in ("dropout", "attention_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{name}={p} hors de [0, 1)")

    @property
    def uses_topology(self) -> bool:
        return (self.family == "csgnn" and self.use_topo_features) or self.family == "topo-logistic"

    def spec_hash(self, in_dim: int, num_classes: int, topo_dim: int = 0) -> bytes:
        payload = dict(asdict(self), in_dim=int(in_dim), num_classes=int(num_classes), topo_dim=int(topo_dim))
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).digest()


class ParamStore:
    # Paramètres nommés, dans l'ordre de création (ordre du checkpoint)

    def __init__(self):
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, shape: Tuple[int, ...], rng: Optional[np.random.Generator] = None,
            init: str = "glorot") -> Tensor:
        if name in self._params:
            raise ValueError(f"paramètre déjà défini : {name}")
        if init == "zeros" or rng is None:
            data = np.zeros(shape)
        elif init == "glorot":
            fan_out, fan_in = shape[0], shape[-1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"initialisation inconnue : {init}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "ParamStore":
        store = cls()
        for name, arr in arrays.items():
            store._params[name] = Tensor(arr, requires_grad=True, name=name)
        return store

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    @property
    def num_values(self) -> int:
        return int(sum(p.data.size for p in self._params.values()))

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def assign(self, arrays: Mapping[str, np.ndarray]) -> None:
        # Tout est vérifié avant la moindre écriture
        if set(arrays) != set(self._params):
            diff = sorted(set(self._params) ^ set(arrays))
            raise ValueError(f"jeu de paramètres différent : {diff[:5]}")
        for name, arr in arrays.items():
            if np.shape(arr) != self._params[name].shape:
                raise ShapeError(f"assign {name}", self._params[name].shape, np.shape(arr))
        for name, arr in arrays.items():
            self._params[name].data[...] = arr

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None


def train_label_smoothness(ds: Dataset) -> float:
    # lambda_l restreint aux arêtes entre noeuds d'entraînement (aucun label de test)
    u, v = ds.undirected_edges()
    both = ds.train_mask[u] & ds.train_mask[v]
    if not np.any(both):
        return 0.0
    return float(np.mean(ds.labels[u[both]] != ds.labels[v[both]]))


@dataclass(frozen=True, eq=False)
class GraphInputs:
    features: np.ndarray
    index: SegmentIndex
    topo: Optional[np.ndarray] = None
    lambda_f: float = 0.0
    lambda_l: float = 0.0

    @classmethod
    def from_dataset(cls, ds: Dataset, topo=None, lambda_f: Optional[float] = None,
                     lambda_l: Optional[float] = None) -> "GraphInputs":
        if topo is not None:
            topo = np.asarray(getattr(topo, "vectors", topo), dtype=np.float64)
            if topo.shape[0] != ds.num_nodes:
                raise ShapeError("topo", topo.shape, (ds.num_nodes,))
        if lambda_f is None:
            X = ds.features
            raw = bool(X.size) and (X.min() < 0.0 or X.max() > 1.0)
            lambda_f = feature_smoothness(ds, raw=raw) if ds.num_edges else 0.0
        if lambda_l is None:
            lambda_l = train_label_smoothness(ds)
        return cls(
            features=np.asarray(ds.features),
            index=SegmentIndex.from_csr(ds.indptr, ds.indices),
            topo=topo,
            lambda_f=float(lambda_f),
            lambda_l=float(lambda_l),
        )

    @property
    def num_nodes(self) -> int:
        return int(self.features.shape[0])

    @cached_property
    def self_loop_index(self) -> SegmentIndex:
        return self.index.with_self_loops()

    @cached_property
    def gcn_coefficients(self) -> np.ndarray:
        return gcn_coefficients(self.self_loop_index)


# --- CS-GNN ---
def csgnn_attention(h: Tensor, t, W_p: Tensor, W_q: Tensor, index: SegmentIndex,
                    alpha: float = 1.0) -> Tensor:
    # p_i = W_p (h_i || t_i) ; q_ij = p_i - W_q h_j ; a = softmax_voisins(ELU(p_i . q_ij))
    ctx = h if t is None else ad.concat([h, t])
    p = ad.linear(ctx, W_p)
    q_src = ad.row_gather(ad.linear(h, W_q), index.src)
    p_dst = ad.row_gather(p, index.dst)
    logits = ad.elu(ad.row_sum(ad.mul(p_dst, ad.sub(p_dst, q_src))), alpha)
    return ad.segment_softmax(logits, index)


def drop_threshold(values: np.ndarray, lambda_l: float) -> Optional[float]:
    # r-ième plus petite valeur parmi tous les coefficients, r = ceil(m * lambda_l)
    m = len(values)
    r = min(m, int(math.ceil(m * lambda_l - 1e-9)))
    if r <= 0:
        return None
    return float(np.partition(np.asarray(values), r - 1)[r - 1])


def drop_low_attention(a: Tensor, lambda_l: float, index: Optional[SegmentIndex] = None,
                       renormalize: bool = False) -> Tensor:
    # Strictement inférieur au seuil -> 0 ; les égalités au seuil survivent
    threshold = drop_threshold(a.data, lambda_l)
    if threshold is None:
        return a
    keep = (a.data >= threshold).astype(np.float64)
    if keep.all():
        return a
    out = ad.mul(a, keep)
    if renormalize:
        if index is None:
            raise ValueError("la renormalisation exige l'index des segments")
        sums = ad.segment_sum(out, index)
        empty = (sums.data == 0.0).astype(np.float64)
        out = ad.div(out, ad.add(ad.row_gather(sums, index.dst), empty[index.dst]))
    return out


def csgnn_layer(h: Tensor, a: Tensor, W_l: Tensor, index: SegmentIndex, residual: bool = False,
                activation: Activation = ad.relu) -> Tensor:
    # h_i' = A(W_l (h_i || somme_j a_ij h_j)), sans boucle sur i
    agg = ad.weighted_neighbor_sum(h, a, index)
    out = ad.linear(ad.concat([h, agg]), W_l)
    if activation is not None:
        out = activation(out)
    if residual and out.shape == h.shape:
        out = ad.add(out, h)
    return out


def csgnn_predict(h: Tensor, t, W: Tensor) -> Tensor:
    x = h if t is None else ad.concat([h, t])
    return ad.linear(x, W)


# --- Couches de référence ---
def gcn_coefficients(index_with_loops: SegmentIndex) -> np.ndarray:
    # 1 / sqrt((|N_i|+1)(|N_j|+1)), les degrés de l'index incluent déjà la boucle
    deg = index_with_loops.degrees.astype(np.float64)
    return 1.0 / np.sqrt(deg[index_with_loops.dst] * deg[index_with_loops.src])


def gcn_layer(h: Tensor, W: Tensor, index_with_loops: SegmentIndex,
              coefficients: Optional[np.ndarray] = None, activation: Activation = ad.relu) -> Tensor:
    coef = gcn_coefficients(index_with_loops) if coefficients is None else coefficients
    out = ad.weighted_neighbor_sum(ad.linear(h, W), Tensor(coef), index_with_loops)
    return activation(out) if activation is not None else out


def sage_layer(h: Tensor, W: Tensor, index: SegmentIndex, aggregator: str = "mean",
               W_pool: Optional[Tensor] = None, b_pool: Optional[Tensor] = None,
               activation: Activation = ad.relu) -> Tensor:
    # Noeud isolé : agrégat nul
    if aggregator == "mean":
        deg = index.degrees.astype(np.float64)
        agg = ad.weighted_neighbor_sum(h, Tensor(1.0 / deg[index.dst]), index)
        out = ad.linear(ad.concat([h, agg]), W)
    elif aggregator == "maxpool":
        if W_pool is None or b_pool is None:
            raise ValueError("maxpool exige W_pool et b_pool")
        pooled = ad.relu(ad.add(ad.linear(h, W_pool), b_pool))
        agg = ad.segment_max(ad.row_gather(pooled, index.src), index)
        out = ad.linear(ad.concat([h, agg]), W)
    elif aggregator == "gcn":
        # Moyenne sur N_i U {i}, sans concaténation ; index avec boucles attendu
        deg = index.degrees.astype(np.float64)
        agg = ad.weighted_neighbor_sum(h, Tensor(1.0 / deg[index.dst]), index)
        out = ad.linear(agg, W)
    else:
        raise ValueError(f"agrégateur inconnu : {aggregator}")
    return activation(out) if activation is not None else out


def gat_attention(z: Tensor, a_src: Tensor, a_dst: Tensor, index_with_loops: SegmentIndex,
                  slope: float = 0.2) -> Tensor:
    # e_ij = LeakyReLU(a_dst . z_i + a_src . z_j) sur N_i U {i}
    s_dst = ad.row_sum(ad.mul(z, a_dst))
    s_src = ad.row_sum(ad.mul(z, a_src))
    e = ad.leaky_relu(ad.add(ad.row_gather(s_dst, index_with_loops.dst),
                             ad.row_gather(s_src, index_with_loops.src)), slope)
    return ad.segment_softmax(e, index_with_loops)


def gat_lite_layer(h: Tensor, W: Tensor, a_src: Tensor, a_dst: Tensor, index_with_loops: SegmentIndex,
                   slope: float = 0.2, activation: Activation = ad.elu,
                   attention_dropout: float = 0.0, seed=0, training: bool = False) -> Tensor:
    z = ad.linear(h, W)
    coef = gat_attention(z, a_src, a_dst, index_with_loops, slope)
    coef = ad.dropout(coef, attention_dropout, seed, training)
    out = ad.weighted_neighbor_sum(z, coef, index_with_loops)
    return activation(out) if activation is not None else out


def logistic_forward(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.linear(x, W), b)


def mlp_forward(x: Tensor, layers: Sequence[Tuple[Tensor, Tensor]]) -> Tensor:
    # Couches cachées ReLU puis sortie affine
    h = x
    for W, b in layers[:-1]:
        h = ad.relu(ad.add(ad.linear(h, W), b))
    W, b = layers[-1]
    return ad.add(ad.linear(h, W), b)


# --- Propagation de labels ---
@dataclass(frozen=True, eq=False)
class LabelPropagationResult:
    predictions: np.ndarray
    distributions: np.ndarray
    unreachable: np.ndarray
    iterations: int
    converged: bool


def label_propagation(ds: Dataset, max_iters: int = 1000, tolerance: float = 1e-6,
                      seed_mask: Optional[np.ndarray] = None) -> LabelPropagationResult:
    seeds = ds.train_mask if seed_mask is None else np.asarray(seed_mask, dtype=bool)
    if seeds.shape != (ds.num_nodes,):
        raise DatasetValidationError(f"masque de graines de forme {seeds.shape} pour {ds.num_nodes} noeuds")
    if not np.any(seeds):
        raise DatasetValidationError("propagation de labels sans aucun noeud d'entraînement")
    unlabeled = seeds & (ds.labels == UNLABELED)
    if np.any(unlabeled):
        raise DatasetValidationError(
            f"{int(unlabeled.sum())} graine(s) sans label, par exemple le noeud {int(np.flatnonzero(unlabeled)[0])}"
        )
    n, C = ds.num_nodes, ds.num_classes
    Y0 = np.zeros((n, C))
    Y0[np.flatnonzero(seeds), ds.labels[seeds]] = 1.0
    deg = ds.degrees.astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    P = ds.adjacency.multiply(inv[:, None]).tocsr()

    F = Y0.copy()
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        F_new = P @ F
        F_new[seeds] = Y0[seeds]
        change = float(np.max(np.abs(F_new - F))) if F.size else 0.0
        F = F_new
        if change < tolerance:
            converged = True
            break

    mass = F.sum(axis=1)
    unreachable = mass <= 0.0
    dist = np.empty_like(F)
    dist[~unreachable] = F[~unreachable] / mass[~unreachable, None]
    dist[unreachable] = 1.0 / max(C, 1)
    if np.any(unreachable):
        logger.warning(f"{int(unreachable.sum())} noeuds sans chemin vers un label : distribution uniforme")
    if not converged:
        logger.warning(f"propagation de labels non convergée après {max_iters} itérations")
    preds = np.argmax(dist, axis=1).astype(np.int64)
    return LabelPropagationResult(
        predictions=preds, distributions=dist, unreachable=unreachable,
        iterations=it, converged=converged,
    )


# --- Modèles complets ---
class NodeClassifier:
    family = ""
    trainable = True

    def __init__(self, spec: ModelSpec, inputs: GraphInputs, num_classes: int, seed: int = 0):
        if spec.family != self.family:
            raise ConfigError(f"spec {spec.family} pour un modèle {self.family}")
        if spec.uses_topology and inputs.topo is None:
            raise ConfigError(f"{spec.family} : caractéristiques topologiques requises")
        self.spec = spec
        self.num_classes = int(num_classes)
        self.in_dim = int(inputs.features.shape[1])
        self.topo_dim = int(inputs.topo.shape[1]) if spec.uses_topology else 0
        self.params = ParamStore()
        self._rng = np.random.default_rng(seed)
        self.build(inputs)

    @property
    def spec_hash(self) -> bytes:
        return self.spec.spec_hash(self.in_dim, self.num_classes, self.topo_dim)

    def _param(self, name: str, shape: Tuple[int, ...], init: str = "glorot") -> Tensor:
        return self.params.add(name, shape, self._rng, init)

    def _drop(self, x: Tensor, training: bool, seed: int, *path: int) -> Tensor:
        return ad.dropout(x, self.spec.dropout, [seed, *path], training)

    def _residual(self, out: Tensor, h: Tensor) -> Tensor:
        return ad.add(out, h) if self.spec.residual and out.shape == h.shape else out

    def _classifier(self, width: int) -> None:
        self._param("out.W", (self.num_classes, width))
        self._param("out.b", (1, self.num_classes), init="zeros")

    def _classify(self, h: Tensor) -> Tensor:
        return logistic_forward(h, self.params["out.W"], self.params["out.b"])

    def build(self, inputs: GraphInputs) -> None:
        raise NotImplementedError

    def forward(self, inputs: GraphInputs, training: bool = False, seed: int = 0) -> Tensor:
        raise NotImplementedError

    def predict(self, inputs: GraphInputs) -> np.ndarray:
        # argmax : en cas d'égalité la plus petite classe gagne
        return np.argmax(self.forward(inputs, training=False).data, axis=1).astype(np.int64)


class CSGNN(NodeClassifier):
    family = "csgnn"

    def build(self, inputs):
        s = self.spec
        d_in = self.in_dim
        self.attn_dims: List[int] = []
        for k in range(s.rounds):
            a_dim = attention_dim(d_in, inputs.lambda_f)
            self.attn_dims.append(a_dim)
            for hd in range(s.heads):
                pre = f"round{k}.head{hd}"
                self._param(f"{pre}.W_p", (a_dim, d_in + self.topo_dim))
                self._param(f"{pre}.W_q", (a_dim, d_in))
                self._param(f"{pre}.W_l", (s.hidden_dim, 2 * d_in))
            d_in = s.hidden_dim * s.heads
        # Couche finale sans biais : y = W (h^K || t)
        self._param("W", (self.num_classes, d_in + self.topo_dim))
        logger.debug(f"CS-GNN : dimensions d'attention {self.attn_dims} (lambda_f={inputs.lambda_f:.4g})")

    def forward(self, inputs, training=False, seed=0):
        s = self.spec
        t = inputs.topo if self.topo_dim else None
        h = Tensor(inputs.features)
        for k in range(s.rounds):
            h = self._drop(h, training, seed, k, 0)
            heads = []
            for hd in range(s.heads):
                pre = f"round{k}.head{hd}"
                a = csgnn_attention(h, t, self.params[f"{pre}.W_p"], self.params[f"{pre}.W_q"],
                                    inputs.index, s.elu_alpha)
                a = drop_low_attention(a, inputs.lambda_l, inputs.index, s.renormalize_dropped)
                a = ad.dropout(a, s.attention_dropout, [seed, k, hd, 1], training)
                heads.append(csgnn_layer(h, a, self.params[f"{pre}.W_l"], inputs.index, s.residual))
            h = heads[0] if len(heads) == 1 else ad.concat(heads)
        return csgnn_predict(h, t, self.params["W"])


class GCN(NodeClassifier):
    family = "gcn"

    def build(self, inputs):
        d_in = self.in_dim
        for k in range(self.spec.rounds):
            self._param(f"round{k}.W", (self.spec.hidden_dim, d_in))
            d_in = self.spec.hidden_dim
        self._classifier(d_in)

    def forward(self, inputs, training=False, seed=0):
        h = Tensor(inputs.features)
        for k in range(self.spec.rounds):
            x = self._drop(h, training, seed, k, 0)
            out = gcn_layer(x, self.params[f"round{k}.W"], inputs.self_loop_index, inputs.gcn_coefficients)
            h = self._residual(out, h)
        return self._classify(h)


class GraphSAGE(NodeClassifier):
    aggregator = "mean"

    def build(self, inputs):
        d_in = self.in_dim
        width = 1 if self.aggregator == "gcn" else 2
        for k in range(self.spec.rounds):
            if self.aggregator == "maxpool":
                self._param(f"round{k}.W_pool", (d_in, d_in))
                self._param(f"round{k}.b_pool", (1, d_in), init="zeros")
            self._param(f"round{k}.W", (self.spec.hidden_dim, width * d_in))
            d_in = self.spec.hidden_dim
        self._classifier(d_in)

    def forward(self, inputs, training=False, seed=0):
        index = inputs.self_loop_index if self.aggregator == "gcn" else inputs.index
        h = Tensor(inputs.features)
        for k in range(self.spec.rounds):
            x = self._drop(h, training, seed, k, 0)
            pool = (self.params[f"round{k}.W_pool"], self.params[f"round{k}.b_pool"]) \
                if self.aggregator == "maxpool" else (None, None)
            h = self._residual(sage_layer(x, self.params[f"round{k}.W"], index, self.aggregator, *pool), h)
        return self._classify(h)


class SageMean(GraphSAGE):
    family = "sage-mean"
    aggregator = "mean"


class SageMaxPool(GraphSAGE):
    family = "sage-maxpool"
    aggregator = "maxpool"


class SageGCN(GraphSAGE):
    family = "sage-gcn"
    aggregator = "gcn"


class GATLite(NodeClassifier):
    family = "gat"

    def build(self, inputs):
        s = self.spec
        d_in = self.in_dim
        for k in range(s.rounds):
            for hd in range(s.heads):
                pre = f"round{k}.head{hd}"
                self._param(f"{pre}.W", (s.hidden_dim, d_in))
                self._param(f"{pre}.a_src", (1, s.hidden_dim))
                self._param(f"{pre}.a_dst", (1, s.hidden_dim))
            d_in = s.hidden_dim * s.heads
        self._classifier(d_in)

    def forward(self, inputs, training=False, seed=0):
        s = self.spec
        h = Tensor(inputs.features)
        for k in range(s.rounds):
            x = self._drop(h, training, seed, k, 0)
            heads = []
            for hd in range(s.heads):
                pre = f"round{k}.head{hd}"
                heads.append(gat_lite_layer(
                    x, self.params[f"{pre}.W"], self.params[f"{pre}.a_src"], self.params[f"{pre}.a_dst"],
                    inputs.self_loop_index, s.leaky_slope,
                    activation=lambda x: ad.elu(x, s.elu_alpha),
                    attention_dropout=s.attention_dropout, seed=[seed, k, hd, 1], training=training,
                ))
            h = self._residual(heads[0] if len(heads) == 1 else ad.concat(heads), h)
        return self._classify(h)


class MLP(NodeClassifier):
    family = "mlp"

    def build(self, inputs):
        d_in = self.in_dim
        self._layers: List[Tuple[str, str]] = []
        for k in range(self.spec.rounds):
            self._param(f"layer{k}.W", (self.spec.hidden_dim, d_in))
            self._param(f"layer{k}.b", (1, self.spec.hidden_dim), init="zeros")
            self._layers.append((f"layer{k}.W", f"layer{k}.b"))
            d_in = self.spec.hidden_dim
        self._classifier(d_in)
        self._layers.append(("out.W", "out.b"))

    def forward(self, inputs, training=False, seed=0):
        x = self._drop(Tensor(inputs.features), training, seed, 0, 0)
        return mlp_forward(x, [(self.params[w], self.params[b]) for w, b in self._layers])


class Logistic(NodeClassifier):
    family = "logistic"

    def build(self, inputs):
        self._classifier(self.in_dim)

    def forward(self, inputs, training=False, seed=0):
        return self._classify(self._drop(Tensor(inputs.features), training, seed, 0, 0))


class TopoLogistic(NodeClassifier):
    family = "topo-logistic"

    def build(self, inputs):
        self._classifier(self.topo_dim)

    def forward(self, inputs, training=False, seed=0):
        return self._classify(self._drop(Tensor(inputs.topo), training, seed, 0, 0))


class LabelPropagationModel(NodeClassifier):
    family = "labelprop"
    trainable = False

    def build(self, inputs):
        self.result: Optional[LabelPropagationResult] = None

    def fit(self, ds: Dataset, max_iters: int = 1000, tolerance: float = 1e-6) -> LabelPropagationResult:
        self.result = label_propagation(ds, max_iters=max_iters, tolerance=tolerance)
        return self.result

    def forward(self, inputs, training=False, seed=0):
        if self.result is None:
            raise RuntimeError("propagation de labels non exécutée : appeler fit(ds)")
        return Tensor(self.result.distributions)


MODEL_REGISTRY: Dict[str, Type[NodeClassifier]] = {
    cls.family: cls
    for cls in (CSGNN, GCN, SageMean, SageMaxPool, SageGCN, GATLite, MLP, Logistic, TopoLogistic,
                LabelPropagationModel)
}


def build_model(spec: ModelSpec, inputs: GraphInputs, num_classes: int, seed: int = 0) -> NodeClassifier:
    return MODEL_REGISTRY[spec.family](spec, inputs, num_classes, seed)
