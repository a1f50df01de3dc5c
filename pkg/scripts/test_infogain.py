import unittest
import sys
import os
import math

import numpy as np
from scipy.special import softmax
from scipy.stats import spearmanr

current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.append(current_dir)
parent_dir = os.path.dirname(current_dir)
sys.path.append(parent_dir)

from smoothgnn.errors import DatasetValidationError
from smoothgnn.graph import build_dataset
from smoothgnn.infogain import (
    MODE_JOINT,
    MODE_MARGINAL,
    HistogramPair,
    NoiseModel,
    aggregated_noise_power,
    build_histograms,
    chi_square_kl_approx,
    kl_divergence,
    monte_carlo_noise_check,
    smoothness_kl_sweep,
)
from smoothgnn.synthetic import SBMConfig, generate_sbm

# Les vérifications longues (1e6 tirages, SBM de 2000 noeuds) sont optionnelles
SLOW = os.environ.get("SMOOTHGNN_SLOW") == "1"


class TestHistograms(unittest.TestCase):

    def test_1_mass(self):
        print("\n[Test] Masse des histogrammes = 2|E|...")
        rng = np.random.default_rng(0)
        ds = build_dataset(6, [0, 1, 2, 3, 4], [1, 2, 3, 4, 5], rng.random((6, 2)))
        h = build_histograms(ds, bins=8, mode=MODE_MARGINAL)
        self.assertEqual(h.context_weights.shape, (2, 8))
        self.assertTrue(np.allclose(h.context_weights.sum(axis=1), 10.0))
        self.assertTrue(np.allclose(h.surrounding_weights.sum(axis=1), 10.0))
        joint = build_histograms(ds, bins=4, mode=MODE_JOINT)
        self.assertEqual(joint.context_weights.shape, (1, 16))
        print("   -> OK")

    def test_2_identical_features(self):
        print("\n[Test] Caractéristiques identiques : histogrammes égaux...")
        ds = build_dataset(4, [0, 1, 2], [1, 2, 3], np.full((4, 2), 0.3))
        h = build_histograms(ds, bins=8)
        self.assertTrue(np.array_equal(h.context_weights, h.surrounding_weights))
        self.assertEqual(kl_divergence(h), 0.0)
        self.assertEqual(chi_square_kl_approx(h), 0.0)
        print("   -> OK (KL = 0)")

    def test_3_isolated_nodes(self):
        print("\n[Test] Noeuds isolés : poids nul, graphe vide refusé...")
        ds = build_dataset(4, [0], [1], np.array([[0.0], [1.0], [0.5], [0.5]]))
        h = build_histograms(ds, bins=2)
        self.assertEqual(float(h.context_weights.sum()), 2.0)
        with self.assertRaises(DatasetValidationError):
            build_histograms(build_dataset(2, [], [], np.zeros((2, 1))))
        print("   -> OK")

    def test_4_joint_limits(self):
        print("\n[Test] Mode joint limité à 3 dimensions...")
        ds = build_dataset(3, [0, 1], [1, 2], np.zeros((3, 5)))
        with self.assertRaises(ValueError):
            build_histograms(ds, mode=MODE_JOINT)
        h = build_histograms(ds, bins=2, mode=MODE_JOINT, dims=[0, 4])
        self.assertEqual(h.dims_used, (0, 4))
        print("   -> OK")

    def test_5_single_edge_bins(self):
        print("\n[Test] Arête unique x=[0.1, 0.9], r=2 : poids exacts des bins...")
        ds = build_dataset(2, [0], [1], np.array([[0.1], [0.9]]))
        h = build_histograms(ds, bins=2)
        self.assertEqual(h.context_weights.tolist(), [[1.0, 1.0]])
        self.assertEqual(h.surrounding_weights.tolist(), [[1.0, 1.0]])
        self.assertEqual(h.total_weight, 2.0)
        self.assertEqual(kl_divergence(h), 0.0)
        # Chemin 0-1-2, x=[0.1, 0.9, 0.8] : l'entourage échange les bins, poids = degrés
        path = build_dataset(3, [0, 1], [1, 2], np.array([[0.1], [0.9], [0.8]]))
        h = build_histograms(path, bins=2)
        self.assertEqual(h.context_weights.tolist(), [[1.0, 3.0]])
        self.assertEqual(h.surrounding_weights.tolist(), [[2.0, 2.0]])
        print("   -> OK ((1,1) / (1,1) puis (1,3) / (2,2))")


class TestDivergences(unittest.TestCase):

    def test_1_kl_two_bins(self):
        print("\n[Test] KL sur deux bins C=(0.5,0.5), S=(0.75,0.25)...")
        h = HistogramPair.from_weights([4e6, 4e6], [6e6, 2e6])
        expected = 0.75 * math.log2(1.5) + 0.25 * math.log2(0.5)
        value = kl_divergence(h, epsilon=1e-9)
        self.assertAlmostEqual(value, expected, places=9)
        self.assertAlmostEqual(value, 0.1887, places=4)
        print(f"   -> OK ({value:.4f} bits)")

    def test_2_kl_identical(self):
        print("\n[Test] KL de deux histogrammes identiques...")
        h = HistogramPair.from_weights([3, 1, 0, 4], [3, 1, 0, 4])
        self.assertEqual(kl_divergence(h), 0.0)
        with self.assertRaises(ValueError):
            kl_divergence(h, epsilon=0.0)
        print("   -> OK")

    def test_3_chi_square(self):
        print("\n[Test] Approximation Chi-2, 2|E|=8, C=(4,4), S=(6,2)...")
        h = HistogramPair.from_weights([4, 4], [6, 2])
        value = chi_square_kl_approx(h)
        self.assertAlmostEqual(value, math.log(2.0) / 16.0 * (4.0 / 6.0 + 4.0 / 2.0), places=12)
        self.assertAlmostEqual(value, 0.1155, places=4)
        print(f"   -> OK ({value:.4f})")

    def test_4_mass_mismatch(self):
        print("\n[Test] Histogrammes de masses différentes refusés...")
        with self.assertRaises(DatasetValidationError):
            HistogramPair.from_weights([4, 4], [6, 1])
        print("   -> OK")

    def test_5_kl_nonnegative(self):
        print("\n[Test] KL >= 0 sur 1000 paires d'histogrammes aléatoires...")
        rng = np.random.default_rng(21)
        worst = math.inf
        for _ in range(1000):
            r = int(rng.integers(2, 33))
            total = 2.0 * int(rng.integers(1, 200))
            C = rng.random(r) * (rng.random(r) > 0.2)
            S = rng.random(r) * (rng.random(r) > 0.2)
            C[0] += 0.1
            S[-1] += 0.1
            h = HistogramPair.from_weights(C * total / C.sum(), S * total / S.sum())
            for eps in (1e-6, 0.5):
                kl = kl_divergence(h, epsilon=eps)
                self.assertGreaterEqual(kl, 0.0)
                worst = min(worst, kl)
        print(f"   -> OK (minimum {worst:.3g})")

    def test_6_chi_square_tracks_kl(self):
        print("\n[Test] Approximation chi2 vs KL exacte sur 100 paires proches...")
        rng = np.random.default_rng(8)
        approx, exact = [], []
        for _ in range(100):
            S = rng.uniform(5.0, 15.0, 8)
            delta = rng.normal(size=8)
            delta -= delta.mean()
            # max |delta_i| / |H_i|_S <= 0.2
            delta *= rng.uniform(0.05, 1.0) * np.min(0.2 * S / np.abs(delta))
            C = S + delta
            C *= S.sum() / C.sum()
            h = HistogramPair.from_weights(C, S)
            approx.append(chi_square_kl_approx(h))
            exact.append(kl_divergence(h, epsilon=1e-9))
        rho = spearmanr(approx, exact).correlation
        self.assertGreater(rho, 0.95)
        print(f"   -> OK (Spearman {rho:.3f})")


class TestNoisePower(unittest.TestCase):

    def test_1_closed_form(self):
        print("\n[Test] Puissance de bruit agrégée...")
        for n in (1, 4, 10):
            self.assertAlmostEqual(aggregated_noise_power(NoiseModel.mean_aggregator(n)), 1.0 / n, places=12)
            self.assertAlmostEqual(aggregated_noise_power(NoiseModel.sum_aggregator(n)), float(n), places=12)
        self.assertAlmostEqual(aggregated_noise_power(NoiseModel(1.0, (0.5, 0.3, 0.2))), 0.38, places=12)
        print("   -> OK (1/n, n, 0.38)")

    def test_2_zero_coefficients(self):
        print("\n[Test] Coefficients nuls -> variance exactement 0...")
        nm = NoiseModel(1.0, (0.0, 0.0))
        self.assertEqual(monte_carlo_noise_check(nm, samples=100_000), 0.0)
        with self.assertRaises(ValueError):
            monte_carlo_noise_check(nm, samples=10)
        print("   -> OK")

    def test_3_monte_carlo_quick(self):
        print("\n[Test] Monte-Carlo, moyenne sur 4 voisins (2e5 tirages)...")
        measured = monte_carlo_noise_check(NoiseModel.mean_aggregator(4), samples=200_000, seed=1)
        self.assertLess(abs(measured - 0.25) / 0.25, 0.05)
        again = monte_carlo_noise_check(NoiseModel.mean_aggregator(4), samples=200_000, seed=1)
        self.assertEqual(measured, again)
        print(f"   -> OK ({measured:.4f})")

    @unittest.skipUnless(SLOW, "SKIPPED: SMOOTHGNN_SLOW=1 pour 1e6 tirages")
    def test_4_monte_carlo_full(self):
        print("\n[Test] Monte-Carlo à 1e6 tirages...")
        cases = [
            (NoiseModel.mean_aggregator(4), 0.25),
            (NoiseModel.sum_aggregator(3, sigma2=2.0), 6.0),
            (NoiseModel(1.0, (0.5, 0.3, 0.2)), 0.38),
        ]
        for nm, expected in cases:
            measured = monte_carlo_noise_check(nm, samples=1_000_000)
            self.assertLess(abs(measured - expected) / expected, 0.05)
        print("   -> OK (écart < 5%)")

    def test_5_softmax_bound(self):
        print("\n[Test] Coefficients softmax : puissance du bruit <= sigma^2...")
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            sigma2 = float(rng.uniform(0.1, 3.0))
            a = softmax(rng.normal(scale=3.0, size=n))
            power = aggregated_noise_power(NoiseModel(sigma2, tuple(a)))
            self.assertLessEqual(power, sigma2 * (1.0 + 1e-12))
            self.assertGreaterEqual(power, sigma2 / n * (1.0 - 1e-12))
        self.assertEqual(aggregated_noise_power(NoiseModel(2.0, (0.0, 1.0, 0.0))), 2.0)
        self.assertLess(aggregated_noise_power(NoiseModel(2.0, (0.5, 0.5))), 2.0)
        print("   -> OK (égalité pour un coefficient à 1)")


class TestSmoothnessCorrelation(unittest.TestCase):

    def test_1_small_sweep(self):
        print("\n[Test] Corrélation lambda_f / KL sur un petit SBM...")
        ds = generate_sbm(SBMConfig(nodes=300, blocks=3, p_intra=0.05, p_inter=0.005,
                                    feature_dim=4, mean_scale=2.0, seed=2))
        points, rho = smoothness_kl_sweep(ds, rounds=(0, 1, 2, 4, 8, 16))
        self.assertLess(points[-1][1], points[0][1])
        self.assertLess(points[-1][2], points[0][2])
        self.assertGreater(rho, 0.8)
        print(f"   -> OK (Spearman {rho:.3f})")

    @unittest.skipUnless(SLOW, "SKIPPED: SMOOTHGNN_SLOW=1 pour le SBM de 2000 noeuds")
    def test_2_full_sweep(self):
        print("\n[Test] Balayage t in {0..64} sur le SBM 2000 noeuds, 4 blocs...")
        ds = generate_sbm(SBMConfig())
        _, rho = smoothness_kl_sweep(ds, rounds=(0, 1, 2, 4, 8, 16, 32, 64))
        self.assertGreater(rho, 0.9)
        print(f"   -> OK (Spearman {rho:.3f})")


if __name__ == "__main__":
    unittest.main(verbosity=2)
