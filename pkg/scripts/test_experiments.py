import unittest
import sys
import os
import io
import tempfile
from dataclasses import replace

import numpy as np

current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.append(current_dir)
parent_dir = os.path.dirname(current_dir)
sys.path.append(parent_dir)

from smoothgnn.cli import EXIT_LOAD, EXIT_OK, EXIT_VALIDATION, EXIT_VERIFY, build_parser, main
from smoothgnn.config import RunConfig, apply_overrides, load_config, parse_config
from smoothgnn.errors import ConfigError, ResultsSchemaError
from smoothgnn.experiments import (
    RESULTS_COLUMNS,
    ResultRow,
    ResultsTable,
    cmd_gen_sbm,
    cmd_metrics,
    cmd_report,
    cmd_sweep_broadcast,
    cmd_sweep_edgedrop,
    cmd_train,
    read_results,
)
from smoothgnn.graph import load_dataset
from smoothgnn.models import CORE_FAMILIES, ModelSpec
from smoothgnn.smoothness import broadcast_smooth, drop_cross_label_edges, feature_smoothness, label_smoothness
from smoothgnn.synthetic import SBMConfig, generate_sbm
from smoothgnn.training import TrainConfig, train
from smoothgnn.wavelets import TopoConfig, all_topo_features

SLOW = os.environ.get("SMOOTHGNN_SLOW") == "1"
# Dossier contenant cora.edges / cora.features / cora.labels au format texte
CORA_DIR = os.environ.get("SMOOTHGNN_CORA_DIR", "")
HAS_CORA = bool(CORA_DIR) and os.path.isfile(os.path.join(CORA_DIR, "cora.edges"))

TINY_SBM = """
[synthetic]
nodes = 60
blocks = 2
p_intra = 0.2
p_inter = 0.02
feature_dim = 4
mean_scale = 2.0
seed = 1
name = tiny

[model]
hidden = 4

[train]
max_epochs = 5
patience = 5

[topo]
dim = 8
hops = 1
"""


def write(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def row(dataset, model, seed, f1):
    return ResultRow(experiment_id="x", dataset=dataset, model=model, seed=seed, sweep_param="none",
                     sweep_value=0.0, lambda_f=0.1, lambda_l=0.2, kl=0.3, f1_test=f1, wall_time=1.0)


class TestConfig(unittest.TestCase):

    def test_1_defaults(self):
        print("\n[Test] Configuration par défaut...")
        cfg = load_config(None, kind="metrics")
        self.assertTrue(cfg.dataset.synthetic)
        self.assertEqual(cfg.model.family, "csgnn")
        self.assertEqual(cfg.topo.dim, 64)
        self.assertEqual(cfg.experiment_id, "metrics-sbm")
        print("   -> OK")

    def test_2_preset(self):
        print("\n[Test] Preset cora, clés explicites prioritaires...")
        cfg = parse_config("[model]\npreset = cora\n")
        self.assertEqual(cfg.model.dropout, 0.2)
        self.assertEqual(cfg.model.attention_dropout, 0.2)
        self.assertEqual(cfg.model.hidden_dim, 8)
        self.assertTrue(cfg.model.residual)
        self.assertEqual(cfg.train.weight_decay, 0.01)
        self.assertEqual(cfg.train.batch_size, 512)
        self.assertEqual(cfg.train.patience, 100)

        cfg = parse_config("[model]\npreset = pubmed\nhidden = 12\n[train]\nfull_batch = yes\n")
        self.assertEqual(cfg.model.hidden_dim, 12)
        self.assertEqual(cfg.model.dropout, 0.3)
        self.assertIsNone(cfg.train.batch_size)
        print("   -> OK")

    def test_3_sections(self):
        print("\n[Test] Sections [dataset] [info] [sweep] [output]...")
        text = (
            "[dataset]\nedges = data/g.edges\nfeatures = data/g.features\nlabels = data/g.labels\n"
            "splits = 0.6, 0.2, 0.2\n"
            "[info]\nbins = 16\nverify_rounds = 0, 2, 4\n"
            "[sweep]\nfractions = 0, 0.5\nmodels = gcn, csgnn\n"
            "[output]\ndir = out\nworkers = 3\n"
        )
        cfg = parse_config(text, kind="sweep-edgedrop", base_dir="/base")
        self.assertFalse(cfg.dataset.synthetic)
        self.assertEqual(cfg.dataset.edges, os.path.normpath("/base/data/g.edges"))
        self.assertEqual(cfg.dataset.splits, (0.6, 0.2, 0.2))
        self.assertEqual(cfg.info.bins, 16)
        self.assertEqual(cfg.info.verify_rounds, (0, 2, 4))
        self.assertEqual(cfg.sweep.fractions, (0.0, 0.5))
        self.assertEqual(cfg.sweep.models, ("gcn", "csgnn"))
        self.assertEqual(cfg.output.workers, 3)
        self.assertEqual(cfg.output.csv_path, os.path.join("/base/out", "results.csv"))
        split_file = parse_config("[dataset]\nedges = g.edges\nsplits = g.splits\n", base_dir="/base")
        self.assertEqual(split_file.dataset.splits, os.path.normpath("/base/g.splits"))
        print("   -> OK")

    def test_4_invalid(self):
        print("\n[Test] Configurations invalides -> ConfigError...")
        bad = [
            "[model]\npreset = imagenet\n",
            "[model]\nfamily = lstm\n",
            "[train]\nlr = beaucoup\n",
            "[train]\nlr = -1\n",
            "[topo]\ndim = 9\n",
            "[dataset]\nsplits = 0.5, 0.5\n",
            "[sweep]\nseeds = \nmodels = gcn, resnet\n",
            "[info]\nmode = nope\n",
            "pas une section\n",
        ]
        for text in bad:
            with self.assertRaises(ConfigError, msg=text):
                parse_config(text)
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/run.ini")
        print(f"   -> OK ({len(bad)} cas)")

    def test_5_overrides(self):
        print("\n[Test] Drapeaux de ligne de commande prioritaires...")
        cfg = apply_overrides(RunConfig(), {"model": "gat", "seed": 9, "out": "/tmp/o", "workers": 2,
                                            "all_models": True})
        self.assertEqual(cfg.model.family, "gat")
        self.assertEqual(cfg.train.seed, 9)
        self.assertEqual(cfg.output.directory, "/tmp/o")
        self.assertEqual(cfg.output.workers, 2)
        self.assertTrue(cfg.all_models)
        same = apply_overrides(RunConfig(), {"model": None, "seed": None})
        self.assertEqual(same, RunConfig())
        print("   -> OK")


class TestResultsTable(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "sub", "results.csv")

    def tearDown(self):
        self.tmp.cleanup()

    def test_1_append_and_read(self):
        print("\n[Test] Table de résultats : en-tête de schéma puis lignes...")
        table = ResultsTable(self.path)
        table.append([row("d", "gcn", 0, 0.5), row("d", "gcn", 1, 0.75)])
        ResultsTable(self.path).append([row("d", "mlp", 0, float("nan"))])
        with open(self.path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], "# smoothgnn results schema 1")
        self.assertEqual(lines[1], ",".join(RESULTS_COLUMNS))
        rows = read_results(self.path)
        self.assertEqual([r.f1_test for r in rows[:2]], [0.5, 0.75])
        self.assertTrue(np.isnan(rows[2].f1_test))
        print("   -> OK")

    def test_2_schema_mismatch(self):
        print("\n[Test] Fichier existant au mauvais schéma refusé...")
        os.makedirs(os.path.dirname(self.path))
        write(self.path, "experiment_id,dataset,model\nx,d,gcn\n")
        with self.assertRaises(ResultsSchemaError):
            ResultsTable(self.path)
        with self.assertRaises(ResultsSchemaError):
            read_results(self.path)
        write(self.path, "# smoothgnn results schema 2\n" + ",".join(RESULTS_COLUMNS) + "\n")
        with self.assertRaises(ResultsSchemaError):
            ResultsTable(self.path)
        print("   -> OK")

    def test_3_report(self):
        print("\n[Test] Rapport : moyennes par modèle et améliorations de groupe...")
        ResultsTable(self.path).append([
            row("d", "csgnn", 0, 0.9), row("d", "csgnn", 1, 0.8), row("d", "gcn", 0, 0.7),
            row("d", "logistic", 0, 0.5), row("d", "labelprop", 0, 0.6), row("d", "-", 0, float("nan")),
        ])
        out = io.StringIO()
        summaries, improvements = cmd_report(self.path, out)
        by_model = {s.model: s for s in summaries}
        self.assertNotIn("-", by_model)
        self.assertAlmostEqual(by_model["csgnn"].mean_f1, 0.85)
        self.assertEqual(by_model["csgnn"].runs, 2)
        self.assertAlmostEqual(improvements["d"]["gnn_over_feature"], 40.0)
        self.assertAlmostEqual(improvements["d"]["csgnn_over_topology"], 100.0 * 0.25 / 0.6)
        self.assertIn("csgnn", out.getvalue())
        print("   -> OK")


class TestCommands(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def triangle_config(self, labels_name="tri.labels"):
        write(os.path.join(self.dir, "tri.edges"), "0 1\n1 2\n0 2\n")
        write(os.path.join(self.dir, "tri.features"), "3 1\n0\n1\n0\n")
        write(os.path.join(self.dir, "tri.labels"), "0 0\n1 0\n2 1\n")
        text = (f"[dataset]\nname = triangle\nedges = tri.edges\nfeatures = tri.features\n"
                f"labels = {labels_name}\n[output]\ndir = out\n")
        return write(os.path.join(self.dir, "tri.ini"), text)

    def test_1_metrics_triangle(self):
        print("\n[Test] metrics sur le triangle A,A,B...")
        cfg = load_config(self.triangle_config(), kind="metrics")
        out = io.StringIO()
        summary = cmd_metrics(cfg, out)
        self.assertAlmostEqual(summary.report.lambda_l, 2.0 / 3.0)
        self.assertIn("lambda_l = 0.666667", out.getvalue())
        self.assertEqual(summary.fan_in, 2)
        self.assertAlmostEqual(summary.noise_mean, 0.5)
        rows = read_results(cfg.output.csv_path)
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0].dataset, "triangle")
        print("   -> OK (lambda_l = 2/3)")

    def test_2_train_all_models(self):
        print("\n[Test] train --all-models sur un petit SBM -> 8 lignes...")
        path = write(os.path.join(self.dir, "tiny.ini"), TINY_SBM)
        cfg = apply_overrides(load_config(path, kind="train"), {"all_models": True, "out": self.dir})
        results = cmd_train(cfg, io.StringIO())
        self.assertEqual([r.family for r in results], list(CORE_FAMILIES))
        rows = read_results(cfg.output.csv_path)
        self.assertEqual(len(rows), 8)
        self.assertTrue(all(0.0 <= r.f1_test <= 1.0 for r in rows))
        ckpts = os.listdir(os.path.join(self.dir, "checkpoints"))
        self.assertEqual(len(ckpts), 8)
        print("   -> OK")

    def test_3_train_deterministic_rows(self):
        print("\n[Test] Deux exécutions, mêmes lignes (hors temps)...")
        path = write(os.path.join(self.dir, "tiny.ini"), TINY_SBM)
        payloads = []
        for sub in ("a", "b"):
            cfg = apply_overrides(load_config(path), {"model": "gcn", "seed": 1,
                                                      "out": os.path.join(self.dir, sub)})
            cmd_train(cfg, io.StringIO())
            payloads.append([r.payload() for r in read_results(cfg.output.csv_path)])
        self.assertEqual(payloads[0], payloads[1])
        print("   -> OK")

    def test_4_workers_keep_order(self):
        print("\n[Test] Réplicats concurrents : ordre déterministe...")
        path = write(os.path.join(self.dir, "tiny.ini"), TINY_SBM + "[sweep]\nmodels = gcn, mlp\n")
        from smoothgnn.experiments import prepare_dataset, run_models
        cfg = replace(load_config(path), output=replace(load_config(path).output, checkpoints=False))
        ds = prepare_dataset(cfg)
        serial = run_models(ds, ["gcn", "mlp"], [0, 1], cfg)
        parallel = run_models(ds, ["gcn", "mlp"], [0, 1], replace(cfg, output=replace(cfg.output, workers=3)))
        self.assertEqual([r.payload() for r in serial], [r.payload() for r in parallel])
        print("   -> OK")

    def sweep_config(self, kind):
        text = TINY_SBM + "[sweep]\nrounds = 0, 1, 2\nfractions = 0, 1\nseeds = 0, 1\nmodels = gcn, mlp\n"
        path = write(os.path.join(self.dir, "sweep.ini"), text)
        return apply_overrides(load_config(path, kind=kind), {"out": os.path.join(self.dir, kind)})

    def test_5_sweep_broadcast(self):
        print("\n[Test] sweep-broadcast : rounds 0,1,2 x 2 graines x 2 modèles...")
        cfg = self.sweep_config("sweep-broadcast")
        points = cmd_sweep_broadcast(cfg, io.StringIO())
        self.assertEqual(len(points), 6)
        self.assertTrue(all(p.runs == 2 for p in points))
        lam = {int(p.sweep_value): p.smoothness for p in points}
        self.assertLess(lam[2], lam[0])
        self.assertEqual(len(read_results(cfg.output.csv_path)), 12)
        self.assertTrue(os.path.isfile(os.path.join(cfg.output.directory, "sweep-broadcast-tiny-plot.csv")))
        print(f"   -> OK (lambda_f {lam[0]:.4g} -> {lam[2]:.4g})")

    def test_6_sweep_edgedrop(self):
        print("\n[Test] sweep-edgedrop : fractions 0 et 1...")
        cfg = self.sweep_config("sweep-edgedrop")
        points = cmd_sweep_edgedrop(cfg, io.StringIO())
        self.assertEqual(len(points), 4)
        lam = {p.sweep_value: p.smoothness for p in points}
        self.assertGreater(lam[0.0], 0.0)
        self.assertEqual(lam[1.0], 0.0)
        rows = read_results(cfg.output.csv_path)
        self.assertEqual(len(rows), 8)
        self.assertEqual({r.sweep_param for r in rows}, {"fraction"})
        print("   -> OK")

    def test_7_gen_sbm(self):
        print("\n[Test] gen-sbm écrit des fichiers relisibles...")
        path = write(os.path.join(self.dir, "tiny.ini"), TINY_SBM)
        cfg = apply_overrides(load_config(path, kind="gen-sbm"), {"out": os.path.join(self.dir, "data")})
        paths = cmd_gen_sbm(cfg, io.StringIO())
        ds = load_dataset(paths["edges"], paths["features"], paths["labels"], split_spec=paths["splits"],
                          name="tiny")
        self.assertEqual(ds.num_nodes, 60)
        self.assertEqual(ds.num_classes, 2)
        self.assertGreater(ds.num_edges, 0)
        print("   -> OK")


class TestCommandLine(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_1_parser(self):
        print("\n[Test] Analyse des arguments...")
        args = build_parser().parse_args(["train", "--model", "gcn", "--seed", "3", "--all-models"])
        self.assertEqual((args.command, args.model, args.seed, args.all_models), ("train", "gcn", 3, True))
        with self.assertRaises(SystemExit):
            build_parser().parse_args(["train", "--model", "resnet"])
        print("   -> OK")

    def test_2_exit_codes(self):
        print("\n[Test] Codes de sortie 0 / 2 / 3...")
        write(os.path.join(self.dir, "tri.edges"), "0 1\n1 2\n0 2\n")
        write(os.path.join(self.dir, "tri.features"), "3 1\n0\n1\n0\n")
        write(os.path.join(self.dir, "tri.labels"), "0 0\n1 0\n2 1\n")
        good = write(os.path.join(self.dir, "good.ini"),
                     "[dataset]\nedges = tri.edges\nfeatures = tri.features\nlabels = tri.labels\n")
        missing = write(os.path.join(self.dir, "missing.ini"),
                        "[dataset]\nedges = tri.edges\nfeatures = tri.features\nlabels = absent.labels\n")
        bad = write(os.path.join(self.dir, "bad.ini"), "[model]\nfamily = lstm\n")
        out = os.path.join(self.dir, "out")
        self.assertEqual(main(["metrics", "--config", good, "--out", out]), EXIT_OK)
        self.assertEqual(main(["metrics", "--config", missing, "--out", out]), EXIT_LOAD)
        self.assertEqual(main(["metrics", "--config", bad]), EXIT_VALIDATION)
        self.assertEqual(main(["metrics", "--config", os.path.join(self.dir, "nope.ini")]), EXIT_VALIDATION)
        print("   -> OK")

    def test_3_verify_fails(self):
        print("\n[Test] verify avec un seuil impossible -> code 5...")
        text = ("[synthetic]\nnodes = 120\nblocks = 2\np_intra = 0.1\np_inter = 0.01\nfeature_dim = 3\n"
                "[info]\nnoise_samples = 100000\nverify_rounds = 0, 1, 2\nspearman_threshold = 1.5\n")
        path = write(os.path.join(self.dir, "verify.ini"), text)
        self.assertEqual(main(["verify", "--config", path]), EXIT_VERIFY)
        print("   -> OK")


def mean_test_f1(ds, families, seeds, cfg, topo):
    scores = [train(ds, ModelSpec(family=f), replace(cfg, seed=s), topo=topo).test_f1
              for f in families for s in seeds]
    return float(np.mean(scores))


@unittest.skipUnless(SLOW, "SKIPPED: SMOOTHGNN_SLOW=1 pour les tendances F1 (plusieurs minutes)")
class TestSmoothnessTrends(unittest.TestCase):
    GNN = ("gcn", "gat", "csgnn")
    SEEDS = (0, 1, 2, 3, 4)
    TRAIN = TrainConfig(max_epochs=300, patience=100)
    TOPO = TopoConfig(dim=8, hops=1, sample_points=(1.0, 2.0, 4.0, 8.0))

    def test_1_broadcast_hurts_f1(self):
        print("\n[Test] SBM 2000 noeuds : F1 des GNN à t=64 < F1 à t=0 - 5 points...")
        ds = generate_sbm(SBMConfig())
        topo = all_topo_features(ds, self.TOPO)
        lam = [feature_smoothness(broadcast_smooth(ds, t), raw=True) for t in (0, 1, 2, 4, 8, 16, 32, 64)]
        for a, b in zip(lam, lam[1:]):
            self.assertLessEqual(b, a * (1.0 + 1e-9))
        before = mean_test_f1(ds, self.GNN, self.SEEDS, self.TRAIN, topo)
        after = mean_test_f1(broadcast_smooth(ds, 64), self.GNN, self.SEEDS, self.TRAIN, topo)
        self.assertLessEqual(after, before - 0.05)
        print(f"   -> OK (F1 {before:.3f} -> {after:.3f})")

    def test_2_edge_drop_helps_f1(self):
        print("\n[Test] SBM lambda_l ~ 0.5 : retrait des arêtes inter-classes...")
        ds = generate_sbm(SBMConfig(p_intra=0.012, p_inter=0.004, seed=1))
        self.assertLess(abs(label_smoothness(ds) - 0.5), 0.05)
        gnn, mlp = [], []
        for fraction in (0.0, 0.5, 1.0):
            scores, plain = [], []
            for seed in self.SEEDS:
                dropped = drop_cross_label_edges(ds, fraction, seed=seed)
                topo = all_topo_features(dropped, self.TOPO)
                cfg = replace(self.TRAIN, seed=seed)
                scores += [train(dropped, ModelSpec(family=f), cfg, topo=topo).test_f1 for f in self.GNN]
                plain.append(train(dropped, ModelSpec(family="mlp"), cfg).test_f1)
            gnn.append(float(np.mean(scores)))
            mlp.append(float(np.mean(plain)))
        for a, b in zip(gnn, gnn[1:]):
            self.assertGreaterEqual(b, a - 0.01)
        self.assertLess(max(mlp) - min(mlp), 0.01)
        print(f"   -> OK (GNN {', '.join(f'{x:.3f}' for x in gnn)} ; MLP {mlp[0]:.3f})")

    def test_3_csgnn_beats_gat_on_cross_block_graph(self):
        print("\n[Test] SBM lambda_l ~ 0.7 : CS-GNN devant GAT d'au moins 2 points...")
        ds = generate_sbm(SBMConfig(p_intra=0.01, p_inter=0.0078, mean_scale=2.0, seed=2))
        self.assertLess(abs(label_smoothness(ds) - 0.7), 0.05)
        topo = all_topo_features(ds, self.TOPO)
        csgnn = mean_test_f1(ds, ("csgnn",), self.SEEDS, self.TRAIN, topo)
        gat = mean_test_f1(ds, ("gat",), self.SEEDS, self.TRAIN, topo)
        self.assertGreaterEqual(csgnn, gat + 0.02)
        print(f"   -> OK (CS-GNN {csgnn:.3f}, GAT {gat:.3f})")


@unittest.skipUnless(HAS_CORA, "SKIPPED: SMOOTHGNN_CORA_DIR absent (fichiers Cora au format texte)")
class TestCoraDataset(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        text = ("[dataset]\nname = cora\n"
                f"edges = {os.path.join(CORA_DIR, 'cora.edges')}\n"
                f"features = {os.path.join(CORA_DIR, 'cora.features')}\n"
                f"labels = {os.path.join(CORA_DIR, 'cora.labels')}\n"
                f"[model]\npreset = cora\n[output]\ndir = {self.tmp.name}\n")
        self.cfg = parse_config(text, kind="metrics")

    def tearDown(self):
        self.tmp.cleanup()

    def test_1_smoothness(self):
        print("\n[Test] Cora : lambda_l ~ 0.19, lambda_f ~ 4.2564e-2...")
        summary = cmd_metrics(self.cfg, io.StringIO())
        self.assertLess(abs(summary.report.lambda_l - 0.19), 0.01)
        self.assertLess(abs(summary.report.lambda_f - 0.042564) / 0.042564, 0.10)
        print("   -> OK")

    @unittest.skipUnless(SLOW, "SKIPPED: SMOOTHGNN_SLOW=1 pour entraîner CS-GNN sur Cora")
    def test_2_csgnn_f1(self):
        print("\n[Test] CS-GNN sur Cora, F1 test >= 0.80...")
        from smoothgnn.experiments import prepare_dataset, prepare_topo
        ds = prepare_dataset(self.cfg)
        topo = prepare_topo(ds, self.cfg)
        result = train(ds, replace(self.cfg.model, family="csgnn"), self.cfg.train, topo=topo)
        self.assertGreaterEqual(result.test_f1, 0.80)
        print(f"   -> OK ({result.test_f1:.4f})")


if __name__ == "__main__":
    unittest.main(verbosity=2)
