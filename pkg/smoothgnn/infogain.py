from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import rel_entr
from scipy.stats import spearmanr

from smoothgnn.errors import DatasetValidationError
from smoothgnn.graph import Dataset
from smoothgnn.smoothness import broadcast_smooth, feature_smoothness

logger = logging.getLogger(__name__)

MODE_JOINT = "joint-lowdim"
MODE_MARGINAL = "marginal-average"

DEFAULT_BINS = 32
DEFAULT_EPSILON = 0.5


@dataclass(frozen=True, eq=False)
class HistogramPair:
    # Poids de bins : (1, r^k) en mode joint, (d, r) en mode marginal (une ligne par dimension)
    bins_per_dim: int
    mode: str
    dims_used: Optional[Tuple[int, ...]]
    context_weights: np.ndarray
    surrounding_weights: np.ndarray
    total_weight: float

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.context_weights, dtype=np.float64))
        S = np.atleast_2d(np.asarray(self.surrounding_weights, dtype=np.float64))
        if C.shape != S.shape:
            raise DatasetValidationError(f"histogrammes de formes différentes {C.shape} / {S.shape}")
        if np.any(C < 0) or np.any(S < 0):
            raise DatasetValidationError("poids de bin négatif")
        tol = 1e-9 * max(1.0, abs(self.total_weight))
        if np.any(np.abs(C.sum(axis=1) - self.total_weight) > tol) or \
                np.any(np.abs(S.sum(axis=1) - self.total_weight) > tol):
            raise DatasetValidationError("la masse des histogrammes diffère de 2|E|")
        object.__setattr__(self, "context_weights", C)
        object.__setattr__(self, "surrounding_weights", S)

    @classmethod
    def from_weights(cls, context: Sequence[float], surrounding: Sequence[float]) -> "HistogramPair":
        C = np.asarray(context, dtype=np.float64)
        return cls(
            bins_per_dim=len(C), mode=MODE_JOINT, dims_used=None,
            context_weights=C, surrounding_weights=np.asarray(surrounding, dtype=np.float64),
            total_weight=float(C.sum()),
        )

    @property
    def num_edges(self) -> float:
        return self.total_weight / 2.0


def _surrounding_means(ds: Dataset) -> Tuple[np.ndarray, np.ndarray]:
    deg = ds.degrees.astype(np.float64)
    active = deg > 0
    if not np.any(active):
        raise DatasetValidationError("graphe sans arête : aucun noeud ne porte de poids")
    X = np.asarray(ds.features)
    S = np.zeros_like(X)
    S[active] = (ds.adjacency @ X)[active] / deg[active, None]
    return S, deg


def build_histograms(
    ds: Dataset,
    bins: int = DEFAULT_BINS,
    mode: str = MODE_MARGINAL,
    dims: Optional[Sequence[int]] = None,
) -> HistogramPair:
    # Contexte : x_v de poids |N_v| ; entourage : moyenne des voisins de poids |N_v|
    X = np.asarray(ds.features)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise DatasetValidationError("caractéristiques hors de [0,1] : normaliser d'abord")
    S, deg = _surrounding_means(ds)
    active = deg > 0
    Xa, Sa, w = X[active], S[active], deg[active]
    bin_range = (0.0, 1.0)  # np.histogram range la valeur 1.0 dans le dernier bin

    if mode == MODE_JOINT:
        dims = tuple(range(ds.feature_dim)) if dims is None else tuple(int(j) for j in dims)
        if len(dims) == 0 or len(dims) > 3:
            raise ValueError("le mode joint exige 1 à 3 dimensions")
        rng = [bin_range] * len(dims)
        C, _ = np.histogramdd(Xa[:, dims], bins=bins, range=rng, weights=w)
        Sh, _ = np.histogramdd(Sa[:, dims], bins=bins, range=rng, weights=w)
        C, Sh = C.reshape(1, -1), Sh.reshape(1, -1)
        used: Optional[Tuple[int, ...]] = dims
    elif mode == MODE_MARGINAL:
        dims = range(ds.feature_dim) if dims is None else dims
        used = None if dims == range(ds.feature_dim) else tuple(int(j) for j in dims)
        cols = list(dims)
        C = np.zeros((len(cols), bins))
        Sh = np.zeros((len(cols), bins))
        for i, j in enumerate(cols):
            C[i], _ = np.histogram(Xa[:, j], bins=bins, range=bin_range, weights=w)
            Sh[i], _ = np.histogram(Sa[:, j], bins=bins, range=bin_range, weights=w)
    else:
        raise ValueError(f"mode d'histogramme inconnu : {mode}")

    return HistogramPair(
        bins_per_dim=bins, mode=mode, dims_used=used,
        context_weights=C, surrounding_weights=Sh,
        total_weight=float(2 * ds.num_edges),
    )


def kl_divergence(h: HistogramPair, epsilon: float = DEFAULT_EPSILON) -> float:
    # D_KL(S || C) en bits, lissage additif ; moyenne sur les dimensions en mode marginal
    if epsilon <= 0:
        raise ValueError("epsilon doit être > 0")
    C, S = h.context_weights, h.surrounding_weights
    r_total = C.shape[1]
    denom = h.total_weight + r_total * epsilon
    p_c = (C + epsilon) / denom
    p_s = (S + epsilon) / denom
    per_row = rel_entr(p_s, p_c).sum(axis=1) / math.log(2.0)
    return float(max(0.0, per_row.mean()))


def chi_square_kl_approx(h: HistogramPair, epsilon: float = 0.0) -> float:
    # (ln 2 / 4|E|) * somme delta_i^2 / |H_i|_S, moyenne sur les dimensions en mode marginal
    C = h.context_weights + epsilon
    S = h.surrounding_weights + epsilon
    delta = C - S
    active = delta != 0
    if np.any(S[active] <= 0):
        raise ValueError("bin d'entourage vide avec delta non nul : utiliser epsilon > 0")
    ratio = np.zeros_like(delta)
    ratio[active] = np.square(delta[active]) / S[active]
    total = h.total_weight + C.shape[1] * epsilon
    per_row = math.log(2.0) / (2.0 * total) * ratio.sum(axis=1)
    return float(per_row.mean())


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float
    coefficients: Tuple[float, ...]

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 doit être >= 0")
        object.__setattr__(self, "coefficients", tuple(float(a) for a in self.coefficients))

    @classmethod
    def mean_aggregator(cls, n: int, sigma2: float = 1.0) -> "NoiseModel":
        return cls(sigma2, (1.0 / n,) * n)

    @classmethod
    def sum_aggregator(cls, n: int, sigma2: float = 1.0) -> "NoiseModel":
        return cls(sigma2, (1.0,) * n)


def aggregated_noise_power(nm: NoiseModel) -> float:
    a = np.asarray(nm.coefficients, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("coefficients non finis")
    return float(nm.sigma2 * np.sum(np.square(a)))


def monte_carlo_noise_check(
    nm: NoiseModel,
    samples: int = 1_000_000,
    seed: int = 0,
    chunk_size: int = 1 << 17,
) -> float:
    # Variance empirique de sum_j a_j n_j, bruit gaussien centré de variance sigma2
    if samples < 100_000:
        raise ValueError("au moins 1e5 tirages sont requis")
    a = np.asarray(nm.coefficients, dtype=np.float64)
    n_chunks = (samples + chunk_size - 1) // chunk_size
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    total = 0.0
    total_sq = 0.0
    remaining = samples
    for child in children:
        m = min(chunk_size, remaining)
        remaining -= m
        if len(a) == 0:
            continue
        noise = np.random.default_rng(child).normal(0.0, math.sqrt(nm.sigma2), size=(m, len(a)))
        agg = noise @ a
        total += float(agg.sum())
        total_sq += float(np.dot(agg, agg))
    mean = total / samples
    return max(0.0, (total_sq - samples * mean * mean) / (samples - 1))


def smoothness_kl_sweep(
    ds: Dataset,
    rounds: Sequence[int] = (0, 1, 2, 4, 8, 16, 32, 64),
    bins: int = DEFAULT_BINS,
    epsilon: float = DEFAULT_EPSILON,
) -> Tuple[List[Tuple[int, float, float]], float]:
    # Lissage par diffusion progressif, (t, lambda_f, KL) à chaque point, puis Spearman
    points: List[Tuple[int, float, float]] = []
    current, done = ds, 0
    for t in sorted(rounds):
        current = broadcast_smooth(current, t - done)
        done = t
        lam = feature_smoothness(current)
        kl = kl_divergence(build_histograms(current, bins=bins, mode=MODE_MARGINAL), epsilon)
        points.append((t, lam, kl))
        logger.debug(f"diffusion t={t} : lambda_f={lam:.6g} KL={kl:.6g}")
    if len(points) < 2:
        return points, float("nan")
    rho = spearmanr([p[1] for p in points], [p[2] for p in points]).correlation
    return points, float(rho)
