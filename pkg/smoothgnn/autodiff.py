from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

from smoothgnn.errors import BackwardError, GradientError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class Tensor:
    # Tableau dense en double précision ; les noeuds internes gardent parents et fermeture backward

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: Tuple["Tensor", ...] = (), _op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents = _parents
        self._op = _op
        self._backward: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None
        self._released = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None and not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} {self._op} shape={self.shape}>"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __matmul__(self, other): return matmul(self, other)


def tensor(data, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: Tuple[Tensor, ...], op: str,
            backward_fn: Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), _op=op)
    if needs:
        out._backward = backward_fn
    return out


# --- Graphe de calcul ---
@dataclass
class ComputeGraph:
    nodes: List[Tensor]
    parameters: List[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "ComputeGraph":
        # Ordre topologique itératif (pas de récursion sur les graphes profonds)
        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        params = [t for t in order if t.is_leaf and t.requires_grad]
        return cls(nodes=order, parameters=params)


def backward(loss: Tensor) -> ComputeGraph:
    if loss.data.size != 1:
        raise BackwardError(f"backward exige une perte scalaire, forme reçue {loss.shape}")
    if not loss.requires_grad:
        raise BackwardError("la perte ne dépend d'aucun paramètre")
    graph = ComputeGraph.trace(loss)
    if any(node._released for node in graph.nodes):
        raise BackwardError("backward déjà exécuté sur ce graphe : refaire la passe avant")
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # Feuille : les gradients s'accumulent jusqu'à zero_grad
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else prev + pg
    for node in graph.nodes:
        if node._backward is not None:
            node._released = True
            node._backward = None
    return graph


# --- Opérations élémentaires ---
def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("add", a, b)
    return _record(a.data + b.data, (a, b), "add",
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("sub", a, b)
    return _record(a.data - b.data, (a, b), "sub",
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("mul", a, b)
    return _record(a.data * b.data, (a, b), "mul",
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("div", a, b)
    out = a.data / b.data
    return _record(out, (a, b), "div",
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * out / b.data, b.shape)))


def scale(x: Tensor, c: float) -> Tensor:
    return _record(x.data * c, (x,), "scale", lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _record(a.data @ b.data, (a, b), "matmul",
                   lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, W: Tensor) -> Tensor:
    # x @ W^T, W stocké en (sortie x entrée)
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[1]:
        raise ShapeError("linear", x.shape, W.shape)
    return _record(x.data @ W.data.T, (x, W), "linear",
                   lambda g: (g @ W.data, g.T @ x.data))


def concat(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    lead = tensors[0].shape[:-1]
    if any(t.shape[:-1] != lead for t in tensors):
        raise ShapeError("concat", *[t.shape for t in tensors])
    widths = [t.shape[-1] for t in tensors]
    cuts = np.cumsum(widths)[:-1]
    return _record(np.concatenate([t.data for t in tensors], axis=-1), tuple(tensors), "concat",
                   lambda g: tuple(np.split(g, cuts, axis=-1)))


def relu(x: Tensor) -> Tensor:
    return _record(np.maximum(x.data, 0.0), (x,), "relu", lambda g: (g * (x.data > 0),))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = x.data <= 0
    expm = np.expm1(np.minimum(x.data, 0.0))
    out = np.where(neg, alpha * expm, x.data)
    return _record(out, (x,), "elu", lambda g: (g * np.where(neg, alpha * (expm + 1.0), 1.0),))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    return _record(np.where(pos, x.data, slope * x.data), (x,), "leaky_relu",
                   lambda g: (g * np.where(pos, 1.0, slope),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _record(out, (x,), "exp", lambda g: (g * out,))


def dropout(x: Tensor, p: float, seed: Union[int, Sequence[int]], training: bool = True) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout : p={p} hors de [0, 1)")
    if not training or p == 0.0:
        return x
    keep = np.random.default_rng(seed).random(x.shape) >= p
    mask = keep / (1.0 - p)
    return _record(x.data * mask, (x,), "dropout", lambda g: (g * mask,))


def row_sum(x: Tensor) -> Tensor:
    return _record(x.data.sum(axis=-1), (x,), "row_sum",
                   lambda g: (np.broadcast_to(g[..., None], x.shape).copy(),))


def sum_all(x: Tensor) -> Tensor:
    return _record(np.asarray(x.data.sum()), (x,), "sum", lambda g: (np.full(x.shape, g.item()),))


def row_gather(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def grad(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _record(x.data[idx], (x,), "row_gather", grad)


# --- Opérations par segments (voisinages) ---
@dataclass(frozen=True, eq=False)
class SegmentIndex:
    # Arêtes orientées triées par cible ; le segment i regroupe les arêtes de cible i
    src: np.ndarray
    dst: np.ndarray
    indptr: np.ndarray
    num_nodes: int

    def __post_init__(self):
        if len(self.src) != len(self.dst) or self.indptr[-1] != len(self.src):
            raise ShapeError("segment_index", (len(self.src),), (len(self.dst),), (int(self.indptr[-1]),))
        expected = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        if not np.array_equal(expected, self.dst):
            raise ValueError("les segments ne partitionnent pas le tableau d'arêtes")

    @classmethod
    def from_csr(cls, indptr: np.ndarray, indices: np.ndarray) -> "SegmentIndex":
        indptr = np.asarray(indptr, dtype=np.int64)
        n = len(indptr) - 1
        dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
        return cls(src=np.asarray(indices, dtype=np.int64), dst=dst, indptr=indptr, num_nodes=n)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def with_self_loops(self) -> "SegmentIndex":
        n = self.num_nodes
        loops = np.arange(n, dtype=np.int64)
        src = np.concatenate([self.src, loops])
        dst = np.concatenate([self.dst, loops])
        order = np.lexsort((src, dst))
        return SegmentIndex(src=src[order], dst=dst[order],
                            indptr=self.indptr + np.arange(n + 1), num_nodes=n)

    def operator(self, weights: np.ndarray) -> csr_matrix:
        # Matrice (n x n) dont la ligne i porte les poids des voisins de i
        return csr_matrix((weights, self.src, self.indptr), shape=(self.num_nodes, self.num_nodes))

    def reducer(self) -> csr_matrix:
        # Matrice (n x E) de somme par segment
        E = self.num_edges
        return csr_matrix((np.ones(E), np.arange(E), self.indptr), shape=(self.num_nodes, E))


def segment_sum(x: Tensor, index: SegmentIndex) -> Tensor:
    if x.shape[0] != index.num_edges:
        raise ShapeError("segment_sum", x.shape, (index.num_edges,))
    R = index.reducer()
    return _record(np.asarray(R @ x.data), (x,), "segment_sum", lambda g: (g[index.dst],))


def segment_softmax(logits: Tensor, index: SegmentIndex) -> Tensor:
    if logits.data.ndim != 1 or logits.shape[0] != index.num_edges:
        raise ShapeError("segment_softmax", logits.shape, (index.num_edges,))
    z = logits.data
    seg = index.dst
    n = index.num_nodes
    m = np.zeros(n)
    nonempty = index.degrees > 0
    if len(z):
        m[nonempty] = np.maximum.reduceat(z, index.indptr[:-1][nonempty])
    e = np.exp(z - m[seg])
    s = np.bincount(seg, weights=e, minlength=n)
    y = e / s[seg]

    def grad(g):
        dot = np.bincount(seg, weights=g * y, minlength=n)
        return (y * (g - dot[seg]),)

    return _record(y, (logits,), "segment_softmax", grad)


def segment_max(x: Tensor, index: SegmentIndex) -> Tensor:
    # Max par segment et par colonne ; segment vide -> 0 ; gradient vers la première occurrence
    if x.data.ndim != 2 or x.shape[0] != index.num_edges:
        raise ShapeError("segment_max", x.shape, (index.num_edges,))
    n, d = index.num_nodes, x.shape[1]
    nonempty = np.flatnonzero(index.degrees > 0)
    out = np.zeros((n, d))
    first = np.zeros((len(nonempty), d), dtype=np.int64)
    if len(nonempty):
        starts = index.indptr[:-1][nonempty]
        out[nonempty] = np.maximum.reduceat(x.data, starts, axis=0)
        hit = x.data == out[index.dst]
        cand = np.where(hit, np.arange(index.num_edges)[:, None], index.num_edges)
        first = np.minimum.reduceat(cand, starts, axis=0)

    def grad(g):
        gx = np.zeros_like(x.data)
        if len(nonempty):
            cols = np.broadcast_to(np.arange(d), first.shape)
            gx[first, cols] = g[nonempty]
        return (gx,)

    return _record(out, (x,), "segment_max", grad)


def weighted_neighbor_sum(h: Tensor, a: Tensor, index: SegmentIndex) -> Tensor:
    # out_i = somme_{e : dst(e)=i} a_e * h[src(e)]
    if h.data.ndim != 2 or h.shape[0] != index.num_nodes or a.shape != (index.num_edges,):
        raise ShapeError("weighted_neighbor_sum", h.shape, a.shape, (index.num_edges,))
    M = index.operator(a.data)

    def grad(g):
        gh = np.asarray(M.T @ g)
        ga = np.einsum("ij,ij->i", g[index.dst], h.data[index.src])
        return gh, ga

    return _record(np.asarray(M @ h.data), (h, a), "weighted_neighbor_sum", grad)


# --- Pertes ---
def softmax_cross_entropy(logits: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    # Moyenne sur les noeuds du masque ; gradient exactement nul hors masque
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("masque de perte vide")
    y = np.asarray(labels)[idx]
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ValueError("label hors plage dans le masque de perte")
    z = logits.data[idx]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(idx))
    loss = -logp[rows, y].mean()

    def grad(g):
        p = np.exp(logp)
        p[rows, y] -= 1.0
        gl = np.zeros_like(logits.data)
        gl[idx] = g.item() * p / len(idx)
        return (gl,)

    return _record(np.asarray(loss), (logits,), "softmax_cross_entropy", grad)


def l2_penalty(params: Iterable[Tensor], coeff: float) -> Tensor:
    # coeff * somme ||W||^2 / 2
    params = list(params)
    value = 0.5 * coeff * sum(float(np.sum(np.square(p.data))) for p in params)
    return _record(np.asarray(value), tuple(params), "l2_penalty",
                   lambda g: tuple(g.item() * coeff * p.data for p in params))


# --- Optimiseur ---
@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise GradientError(name)
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if weight_decay:
            g = g + weight_decay * p.data
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * np.square(g)
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:

    def __init__(self, params: Mapping[str, Tensor], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError("lr doit être > 0")
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2,
                  self.eps, self.weight_decay)


# --- Vérification par différences finies ---
def gradient_check(
    fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    max_coords: int = 100,
    full_limit: int = 1000,
    seed: int = 0,
    floor: float = 1e-4,
) -> float:
    """Compare analytic gradients of ``fn()`` with central finite differences.

    Every coordinate is checked when the parameters hold at most ``full_limit``
    values, otherwise a random subsample of ``max_coords`` coordinates. Returns
    the maximum relative error |a - n| / max(|a|, |n|, floor).
    """
    for p in params.values():
        p.grad = None
    backward(fn())
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1).copy()
                for name, p in params.items()}

    coords: List[Tuple[str, int]] = [(name, k) for name, p in params.items() for k in range(p.data.size)]
    if len(coords) > full_limit:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    worst = 0.0
    for name, k in coords:
        flat = params[name].data.reshape(-1)
        orig = flat[k]
        flat[k] = orig + step
        f_plus = fn().item()
        flat[k] = orig - step
        f_minus = fn().item()
        flat[k] = orig
        num = (f_plus - f_minus) / (2.0 * step)
        a = analytic[name][k]
        err = abs(a - num) / max(abs(a), abs(num), floor)
        worst = max(worst, err)
    for p in params.values():
        p.grad = None
    logger.debug(f"gradient_check : {len(coords)} coordonnées, erreur max {worst:.3e}")
    return worst
