from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import networkx as nx
import numpy as np

from smoothgnn.errors import ConfigError
from smoothgnn.graph import DEFAULT_SPLIT_RATIOS, Dataset, build_dataset, normalize_features, split_by_ratios

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SBMConfig:
    nodes: int = 2000
    blocks: int = 4
    p_intra: float = 0.01
    p_inter: float = 0.001
    feature_dim: int = 16
    mean_scale: float = 1.0
    feature_noise: float = 1.0
    label_noise: float = 0.0
    seed: int = 0
    split: Tuple[float, float, float] = DEFAULT_SPLIT_RATIOS
    name: str = "sbm"

    def __post_init__(self):
        if self.nodes < self.blocks or self.blocks < 2:
            raise ConfigError("il faut au moins 2 blocs et un noeud par bloc")
        for name in ("p_intra", "p_inter", "label_noise"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}={p} hors de [0, 1]")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim doit être >= 1")
        if self.mean_scale < 0 or self.feature_noise < 0:
            raise ConfigError("mean_scale et feature_noise doivent être >= 0")


def block_sizes(nodes: int, blocks: int) -> List[int]:
    # Blocs de tailles égales, le reste va aux premiers blocs
    sizes = [nodes // blocks] * blocks
    for i in range(nodes % blocks):
        sizes[i] += 1
    return sizes


def expected_label_smoothness(cfg: SBMConfig) -> float:
    # Part attendue d'arêtes inter-blocs (blocs égaux, sans bruit de label)
    inter = (cfg.blocks - 1) * cfg.p_inter
    total = cfg.p_intra + inter
    return inter / total if total > 0 else 0.0


def inter_probability_for(lambda_l: float, p_intra: float, blocks: int) -> float:
    # p_inter qui donne lambda_l attendu pour p_intra fixé
    if not 0.0 <= lambda_l < 1.0:
        raise ConfigError("lambda_l cible hors de [0, 1)")
    return lambda_l * p_intra / ((blocks - 1) * (1.0 - lambda_l))


def generate_sbm(cfg: SBMConfig) -> Dataset:
    sizes = block_sizes(cfg.nodes, cfg.blocks)
    prob = np.full((cfg.blocks, cfg.blocks), cfg.p_inter)
    np.fill_diagonal(prob, cfg.p_intra)
    G = nx.stochastic_block_model(sizes=sizes, p=prob.tolist(), seed=cfg.seed)
    block = np.repeat(np.arange(cfg.blocks), sizes)

    rng = np.random.default_rng(cfg.seed)
    means = rng.normal(0.0, cfg.mean_scale, size=(cfg.blocks, cfg.feature_dim))
    X = means[block] + rng.normal(0.0, cfg.feature_noise, size=(cfg.nodes, cfg.feature_dim))

    labels = block.copy()
    if cfg.label_noise > 0:
        # Bruit de label : classe tirée parmi les autres blocs
        flip = rng.random(cfg.nodes) < cfg.label_noise
        shift = rng.integers(1, cfg.blocks, size=cfg.nodes)
        labels[flip] = (labels[flip] + shift[flip]) % cfg.blocks

    edges = np.array(list(G.edges()), dtype=np.int64).reshape(-1, 2)
    splits = split_by_ratios(labels, cfg.split, cfg.seed)
    ds = build_dataset(
        cfg.nodes, edges[:, 0], edges[:, 1], X,
        labels=labels, splits=splits, num_classes=cfg.blocks, name=cfg.name,
        meta={"generator": "sbm", "seed": cfg.seed, "sizes": sizes},
    )
    logger.info(
        f"SBM {cfg.name} : {ds.num_nodes} noeuds, {ds.num_edges} arêtes, "
        f"lambda_l attendu {expected_label_smoothness(cfg):.3f}"
    )
    return normalize_features(ds)
