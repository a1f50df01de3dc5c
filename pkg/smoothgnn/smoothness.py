from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from smoothgnn.errors import DatasetValidationError
from smoothgnn.graph import UNLABELED, Dataset, replace_edges

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmoothnessReport:
    lambda_f: float
    lambda_l: float
    labeled_edge_count: int
    num_edges: int
    lambda_l_is_estimate: bool = False
    raw_features: bool = False
    # Ordre d'évaluation : carré élément par élément puis norme L1
    evaluation_order: str = "elementwise-square-then-l1"
    lambda_f_node_set: str = "all-nodes"

    def __post_init__(self):
        if self.lambda_f < 0:
            raise DatasetValidationError("lambda_f négatif")
        if not 0.0 <= self.lambda_l <= 1.0:
            raise DatasetValidationError("lambda_l hors de [0, 1]")

    def attention_dim(self, d_k: int) -> int:
        return attention_dim(d_k, self.lambda_f)

    @property
    def drop_count_r(self) -> int:
        return drop_count(self.num_edges, self.lambda_l)

    def as_row(self) -> Dict[str, object]:
        return {
            "lambda_f": self.lambda_f,
            "lambda_l": self.lambda_l,
            "labeled_edge_count": self.labeled_edge_count,
            "num_edges": self.num_edges,
            "drop_count_r": self.drop_count_r,
            "lambda_l_is_estimate": int(self.lambda_l_is_estimate),
        }

    def to_text(self) -> str:
        coverage = self.labeled_edge_count / self.num_edges if self.num_edges else 0.0
        lines = [
            f"lambda_f = {self.lambda_f:.6g}",
            f"lambda_l = {self.lambda_l:.6g}",
            f"labeled_edges = {self.labeled_edge_count}",
            f"num_edges = {self.num_edges}",
            f"labeled_edge_coverage = {coverage:.4f}",
            f"lambda_l_estimate = {'yes' if self.lambda_l_is_estimate else 'no'}",
            f"drop_count_r = {self.drop_count_r}",
            f"lambda_f_features = {'raw' if self.raw_features else 'normalized'}",
            f"lambda_f_nodes = {self.lambda_f_node_set}",
            f"lambda_f_order = {self.evaluation_order}",
        ]
        return "\n".join(lines)


def attention_dim(d_k: int, lambda_f: float) -> int:
    return max(1, int(math.ceil(d_k * math.sqrt(max(lambda_f, 0.0)))))


def drop_count(num_edges: int, lambda_l: float) -> int:
    return min(2 * num_edges, int(math.ceil(2 * num_edges * lambda_l - 1e-9)))


def feature_smoothness(ds: Dataset, raw: bool = False) -> float:
    # || sum_v (sum_{v' in N(v)} (x_v - x_v'))^2 ||_1 / (|E| d)
    if ds.num_edges == 0:
        raise DatasetValidationError("lambda_f indéfini sans arêtes")
    X = np.asarray(ds.features)
    if not raw and X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise DatasetValidationError("caractéristiques hors de [0,1] : normaliser d'abord (ou raw=True)")
    d = ds.feature_dim
    if d == 0:
        return 0.0
    diff = ds.degrees[:, None] * X - ds.adjacency @ X
    total = float(np.sum(np.square(diff)))
    return total / (ds.num_edges * d)


def labeled_edge_counts(ds: Dataset) -> Tuple[int, int]:
    # (arêtes aux deux extrémités étiquetées, dont inter-classes)
    u, v = ds.undirected_edges()
    lu, lv = ds.labels[u], ds.labels[v]
    both = (lu != UNLABELED) & (lv != UNLABELED)
    return int(np.sum(both)), int(np.sum(both & (lu != lv)))


def label_smoothness(ds: Dataset) -> float:
    labeled, cross = labeled_edge_counts(ds)
    if labeled == 0:
        raise DatasetValidationError("aucune arête entièrement étiquetée : lambda_l indéfini")
    if labeled < ds.num_edges:
        logger.warning(
            f"lambda_l estimé sur {labeled}/{ds.num_edges} arêtes étiquetées"
        )
    return cross / labeled


def smoothness_report(ds: Dataset, raw: bool = False) -> SmoothnessReport:
    labeled, _ = labeled_edge_counts(ds)
    return SmoothnessReport(
        lambda_f=feature_smoothness(ds, raw=raw),
        lambda_l=label_smoothness(ds),
        labeled_edge_count=labeled,
        num_edges=ds.num_edges,
        lambda_l_is_estimate=labeled < ds.num_edges,
        raw_features=raw,
    )


def broadcast_smooth(ds: Dataset, rounds: int) -> Dataset:
    # Mise à jour synchrone : x_v <- (x_v + somme des voisins) / (1 + |N_v|)
    if rounds < 0:
        raise ValueError("rounds doit être >= 0")
    if rounds == 0:
        return ds
    A = ds.adjacency
    denom = (1.0 + ds.degrees.astype(np.float64))[:, None]
    X = np.array(ds.features, dtype=np.float64)
    for _ in range(rounds):
        X = (X + A @ X) / denom
    return ds.with_features(X)


def drop_cross_label_edges(ds: Dataset, fraction: float, seed: int) -> Dataset:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction hors de [0, 1]")
    u, v = ds.undirected_edges()
    lu, lv = ds.labels[u], ds.labels[v]
    cross = np.flatnonzero((lu != UNLABELED) & (lv != UNLABELED) & (lu != lv))
    k = int(math.floor(fraction * len(cross)))
    if k == 0:
        return ds
    rng = np.random.default_rng(seed)
    removed = rng.choice(cross, size=k, replace=False)
    keep = np.ones(len(u), dtype=bool)
    keep[removed] = False
    logger.debug(f"{k}/{len(cross)} arêtes inter-classes retirées")
    return replace_edges(ds, u[keep], v[keep])
