import unittest
import sys
import os
import math
import warnings

import numpy as np

current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.append(current_dir)
parent_dir = os.path.dirname(current_dir)
sys.path.append(parent_dir)

from smoothgnn import autodiff as ad
from smoothgnn.autodiff import Adam, AdamState, SegmentIndex, Tensor, adam_step, gradient_check
from smoothgnn.errors import BackwardError, GradientError, ShapeError


def random_index(num_nodes, num_edges, seed):
    # Arêtes orientées aléatoires regroupées par cible
    rng = np.random.default_rng(seed)
    dst = np.sort(rng.integers(0, num_nodes, num_edges))
    src = rng.integers(0, num_nodes, num_edges)
    indptr = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=num_nodes))])
    return SegmentIndex(src=src, dst=dst, indptr=indptr, num_nodes=num_nodes)


class TestTensorOps(unittest.TestCase):

    def test_1_linear_gradient(self):
        print("\n[Test] loss = sum(W * x), x fixe -> grad(W) = x...")
        x = np.array([[1.0, -2.0, 3.0]])
        W = Tensor(np.ones((1, 3)), requires_grad=True)
        ad.backward(ad.sum_all(ad.mul(W, x)))
        self.assertTrue(np.array_equal(W.grad, x))
        print("   -> OK")

    def test_2_broadcast_and_shapes(self):
        print("\n[Test] Broadcast et formes incompatibles...")
        a = Tensor(np.ones((3, 2)), requires_grad=True)
        b = Tensor(np.ones((1, 2)), requires_grad=True)
        ad.backward(ad.sum_all(a + b))
        self.assertTrue(np.array_equal(b.grad, [[3.0, 3.0]]))
        with self.assertRaises(ShapeError) as ctx:
            ad.add(a, Tensor(np.ones((3, 3))))
        self.assertIn("add", str(ctx.exception))
        with self.assertRaises(ShapeError):
            ad.matmul(a, Tensor(np.ones((3, 2))))
        print("   -> OK (erreur nommant l'opération)")

    def test_3_backward_contract(self):
        print("\n[Test] backward : perte scalaire, une seule passe...")
        W = Tensor(np.ones((2, 2)), requires_grad=True)
        with self.assertRaises(BackwardError):
            ad.backward(ad.mul(W, 2.0))
        loss = ad.sum_all(ad.mul(W, 2.0))
        ad.backward(loss)
        with self.assertRaises(BackwardError):
            ad.backward(loss)
        # Nouvelle passe avant : les gradients s'accumulent sans zero_grad
        ad.backward(ad.sum_all(ad.mul(W, 2.0)))
        self.assertTrue(np.array_equal(W.grad, np.full((2, 2), 4.0)))
        with self.assertRaises(BackwardError):
            ad.backward(ad.sum_all(Tensor(np.ones(3))))
        print("   -> OK")

    def test_4_dropout(self):
        print("\n[Test] Dropout : p=0 identité, p=1 refusé, masque reproductible...")
        x = Tensor(np.ones((4, 5)), requires_grad=True)
        self.assertIs(ad.dropout(x, 0.0, seed=1), x)
        self.assertIs(ad.dropout(x, 0.5, seed=1, training=False), x)
        with self.assertRaises(ValueError):
            ad.dropout(x, 1.0, seed=1)
        a = ad.dropout(x, 0.5, seed=[3, 1]).data
        b = ad.dropout(x, 0.5, seed=[3, 1]).data
        self.assertTrue(np.array_equal(a, b))
        self.assertTrue(set(np.unique(a).tolist()) <= {0.0, 2.0})
        print("   -> OK")

    def test_5_scalar_shapes(self):
        print("\n[Test] Scalaires 0-d conservés, backward sans avertissement...")
        self.assertEqual(Tensor(2.5).shape, ())
        W = Tensor(np.array([[1.0, -1.0], [0.5, 2.0]]), requires_grad=True)
        logits = ad.matmul(Tensor(np.eye(2)), W)
        loss = ad.add(ad.softmax_cross_entropy(logits, np.array([0, 1]), np.array([True, True])),
                      ad.l2_penalty([W], 0.1))
        self.assertEqual(loss.shape, ())
        with warnings.catch_warnings():
            warnings.simplefilter("error", DeprecationWarning)
            ad.backward(loss)
            total = ad.sum_all(ad.mul(W, 3.0))
            self.assertEqual(total.shape, ())
            self.assertEqual(total.item(), 7.5)
        self.assertEqual(W.grad.shape, (2, 2))
        print("   -> OK")


class TestSegmentOps(unittest.TestCase):

    def test_1_softmax_uniform(self):
        print("\n[Test] segment_softmax, logits égaux sur 3 arêtes...")
        index = SegmentIndex.from_csr(np.array([0, 3]), np.array([0, 0, 0]))
        y = ad.segment_softmax(Tensor(np.zeros(3)), index).data
        self.assertTrue(np.allclose(y, 1.0 / 3.0))
        print("   -> OK (1/3, 1/3, 1/3)")

    def test_2_softmax_hand(self):
        print("\n[Test] segment_softmax sur (0, ln 3)...")
        index = SegmentIndex.from_csr(np.array([0, 2]), np.array([0, 0]))
        y = ad.segment_softmax(Tensor(np.array([0.0, math.log(3.0)])), index).data
        self.assertTrue(np.allclose(y, [0.25, 0.75], atol=1e-15))
        print("   -> OK (0.25, 0.75)")

    def test_3_softmax_sums_to_one(self):
        print("\n[Test] Somme par segment = 1 à 1e-12 près...")
        index = random_index(8, 40, seed=5)
        logits = Tensor(np.random.default_rng(0).normal(0.0, 5.0, 40))
        y = ad.segment_softmax(logits, index).data
        sums = np.bincount(index.dst, weights=y, minlength=8)
        nonempty = index.degrees > 0
        self.assertTrue(np.all(y >= 0.0))
        self.assertLess(float(np.max(np.abs(sums[nonempty] - 1.0))), 1e-12)
        print("   -> OK")

    def test_4_softmax_gradient(self):
        print("\n[Test] Gradient de segment_softmax vs différences finies (20 arêtes)...")
        index = random_index(5, 20, seed=2)
        rng = np.random.default_rng(1)
        z = Tensor(rng.normal(size=20), requires_grad=True)
        w = rng.normal(size=20)
        err = gradient_check(lambda: ad.sum_all(ad.mul(ad.segment_softmax(z, index), w)), {"z": z})
        self.assertLess(err, 1e-4)
        print(f"   -> OK (erreur {err:.2e})")

    def test_5_segment_max(self):
        print("\n[Test] segment_max : maximum par colonne, segment vide -> 0...")
        index = SegmentIndex.from_csr(np.array([0, 2, 2]), np.array([1, 1]))
        x = Tensor(np.array([[3.0, 1.0], [5.0, 0.5]]), requires_grad=True)
        out = ad.segment_max(x, index)
        self.assertTrue(np.array_equal(out.data, [[5.0, 1.0], [0.0, 0.0]]))
        ad.backward(ad.sum_all(out))
        self.assertTrue(np.array_equal(x.grad, [[0.0, 1.0], [1.0, 0.0]]))
        print("   -> OK")

    def test_6_weighted_sum_gradient(self):
        print("\n[Test] weighted_neighbor_sum vs différences finies...")
        index = random_index(6, 18, seed=4)
        rng = np.random.default_rng(2)
        h = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
        a = Tensor(rng.random(18), requires_grad=True)
        w = rng.normal(size=(6, 3))
        err = gradient_check(lambda: ad.sum_all(ad.mul(ad.weighted_neighbor_sum(h, a, index), w)),
                             {"h": h, "a": a})
        self.assertLess(err, 1e-4)
        print(f"   -> OK (erreur {err:.2e})")

    def test_7_self_loops(self):
        print("\n[Test] Ajout des boucles, ordre par cible conservé...")
        index = SegmentIndex.from_csr(np.array([0, 1, 2, 2]), np.array([1, 0]))
        loops = index.with_self_loops()
        self.assertEqual(loops.num_edges, 5)
        self.assertEqual(loops.degrees.tolist(), [2, 2, 1])
        self.assertEqual(loops.src.tolist(), [0, 1, 0, 1, 2])
        print("   -> OK")


class TestLossAndOptimizer(unittest.TestCase):

    def test_1_masked_cross_entropy(self):
        print("\n[Test] Entropie croisée : gradient nul hors masque...")
        rng = np.random.default_rng(0)
        logits = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        labels = np.array([0, 2, 1, 1, 0])
        mask = np.array([True, False, True, False, False])
        ad.backward(ad.softmax_cross_entropy(logits, labels, mask))
        self.assertTrue(np.all(logits.grad[~mask] == 0.0))
        self.assertTrue(np.any(logits.grad[mask] != 0.0))
        with self.assertRaises(ValueError):
            ad.softmax_cross_entropy(logits, labels, np.zeros(5, dtype=bool))
        print("   -> OK")

    def test_2_cross_entropy_gradient(self):
        print("\n[Test] Entropie croisée + L2 vs différences finies...")
        rng = np.random.default_rng(1)
        W = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        x = rng.normal(size=(6, 4))
        labels = rng.integers(0, 3, 6)
        mask = np.ones(6, dtype=bool)
        err = gradient_check(
            lambda: ad.add(ad.softmax_cross_entropy(ad.linear(Tensor(x), W), labels, mask),
                           ad.l2_penalty([W], 0.1)),
            {"W": W},
        )
        self.assertLess(err, 1e-4)
        print(f"   -> OK (erreur {err:.2e})")

    def test_3_adam_first_step(self):
        print("\n[Test] Premier pas d'Adam = -lr * signe(g)...")
        p = {"w": Tensor(np.array([1.0, -1.0]), requires_grad=True)}
        adam_step(p, {"w": np.array([0.3, -5.0])}, AdamState(), lr=0.01)
        self.assertTrue(np.allclose(p["w"].data, [0.99, -0.99], atol=1e-8))
        print("   -> OK")

    def test_4_adam_zero_gradient(self):
        print("\n[Test] Gradient nul : paramètres inchangés...")
        p = {"w": Tensor(np.array([0.5, 2.0]), requires_grad=True)}
        state = AdamState()
        for _ in range(10):
            adam_step(p, {"w": np.zeros(2)}, state)
        self.assertTrue(np.array_equal(p["w"].data, [0.5, 2.0]))
        print("   -> OK")

    def test_5_adam_quadratic(self):
        print("\n[Test] f(w) = w^2 depuis w=1, lr=0.01, 500 pas...")
        w = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"w": w}, lr=0.01)
        best = 1.0
        for _ in range(500):
            opt.zero_grad()
            ad.backward(ad.sum_all(ad.mul(w, w)))
            opt.step()
            best = min(best, abs(float(w.data[0])))
        self.assertLess(best, 1e-3)
        print(f"   -> OK (|w| min = {best:.2e})")

    def test_6_adam_nonfinite(self):
        print("\n[Test] Gradient non fini : erreur nommant le paramètre...")
        p = {"layer0.W": Tensor(np.ones(2), requires_grad=True)}
        with self.assertRaises(GradientError) as ctx:
            adam_step(p, {"layer0.W": np.array([np.nan, 1.0])}, AdamState())
        self.assertEqual(ctx.exception.name, "layer0.W")
        self.assertTrue(np.array_equal(p["layer0.W"].data, [1.0, 1.0]))
        print("   -> OK")


class TestGradientCheck(unittest.TestCase):

    def test_1_identity(self):
        print("\n[Test] Fragment identité -> erreur nulle aux arrondis près...")
        x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
        self.assertLess(gradient_check(lambda: ad.sum_all(x), {"x": x}), 1e-8)
        print("   -> OK")

    def test_2_matmul_relu(self):
        print("\n[Test] Fragment matmul + relu...")
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 4))
        W = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        w = rng.normal(size=(5, 3))
        err = gradient_check(lambda: ad.sum_all(ad.mul(ad.relu(ad.matmul(Tensor(x), W)), w)), {"W": W})
        self.assertLess(err, 1e-4)
        print(f"   -> OK (erreur {err:.2e})")

    def test_3_elementwise_ops(self):
        print("\n[Test] elu, leaky_relu, exp, div, concat...")
        rng = np.random.default_rng(4)
        a = Tensor(rng.uniform(0.5, 1.5, (3, 2)) * rng.choice([-1.0, 1.0], (3, 2)), requires_grad=True)
        b = Tensor(rng.uniform(1.0, 2.0, (3, 2)), requires_grad=True)
        w = rng.normal(size=(3, 4))

        def loss():
            parts = ad.concat([ad.elu(a), ad.div(ad.leaky_relu(a), b)])
            return ad.sum_all(ad.mul(ad.exp(ad.scale(parts, 0.3)), w))

        err = gradient_check(loss, {"a": a, "b": b})
        self.assertLess(err, 1e-4)
        print(f"   -> OK (erreur {err:.2e})")


if __name__ == "__main__":
    unittest.main(verbosity=2)
