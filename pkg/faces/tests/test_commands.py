import json
import tempfile
from pathlib import Path

from django.core.management.base import CommandError
from django.test import SimpleTestCase

from faces.integrations.checkpoints import load_checkpoint
from faces.integrations.dumps import read_token
from faces.integrations.reports import read_csv
from faces.management.base import EXIT_CHECKPOINT, EXIT_IO, EXIT_VALIDATION, RUN_MANIFEST
from faces.tests.factories import SMALL_CONFIG, TOKEN_DIM, run, write_config


def tree_bytes(directory):
    return {
        str(path.relative_to(directory)): path.read_bytes()
        for path in sorted(Path(directory).rglob("*"))
        if path.is_file()
    }


class PipelineCommandTests(SimpleTestCase):
    """Runs the commands end to end on a tiny configuration."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        directory = tempfile.TemporaryDirectory()
        cls.addClassCleanup(directory.cleanup)
        cls.tmp = Path(directory.name)
        cls.config = write_config(cls.tmp / "run.env")
        cls.data = cls.tmp / "data"
        cls.manifest = cls.data / "manifest.csv"
        cls.image = cls.data / "images" / "00000.png"
        run("gen_data", "--config", cls.config, "--out", cls.data)
        cls.train_out = cls.tmp / "train"
        run("train", "--config", cls.config, "--manifest", cls.manifest, "--out", cls.train_out)
        cls.checkpoint = cls.train_out / "stage2.npz"

    def out_dir(self, name):
        return self.tmp / self._testMethodName / name

    def assertExitCode(self, code, command, *args):
        with self.assertRaises(CommandError) as caught:
            run(command, *args)
        self.assertEqual(caught.exception.returncode, code)

    def test_gen_data_writes_dataset_and_run_manifest(self):
        manifest = json.loads((self.data / RUN_MANIFEST).read_text())

        self.assertEqual(manifest["command"], "gen_data")
        self.assertEqual(
            manifest["outputs"],
            {"manifest": "manifest.csv", "params": "params.npz", "rig": "rig.npz"},
        )
        self.assertEqual(len(read_csv(self.manifest)), SMALL_CONFIG["SYNTH_DATA_COUNT"])

    def test_gen_data_is_reproducible(self):
        out = self.out_dir("data")
        output = run("gen_data", "--config", self.config, "--out", out)

        self.assertIn("gen_data completed", output)
        self.assertEqual(tree_bytes(self.data), tree_bytes(out))

    def test_gen_data_overrides(self):
        out = self.out_dir("data")
        run("gen_data", "--config", self.config, "--out", out, "--count", 3, "--seed", 9)

        self.assertEqual(len(read_csv(out / "manifest.csv")), 3)
        self.assertEqual(json.loads((out / RUN_MANIFEST).read_text())["seed"], 9)

    def test_train_writes_both_stages(self):
        stage1 = load_checkpoint(self.train_out / "stage1.npz")
        stage2 = load_checkpoint(self.checkpoint)

        self.assertEqual(stage1.stage, 1)
        self.assertEqual((stage2.stage, stage2.step), (2, SMALL_CONFIG["TRAIN_STAGE2_STEPS"]))
        self.assertTrue((self.train_out / "stage1_log.csv").exists())
        self.assertTrue((self.train_out / "stage2_log.csv").exists())

    def test_train_stage2_resumes_from_checkpoint(self):
        out = self.out_dir("resume")
        run(
            "train",
            "--config",
            self.config,
            "--manifest",
            self.manifest,
            "--stage",
            2,
            "--checkpoint",
            self.train_out / "stage1.npz",
            "--out",
            out,
        )
        self.assertEqual(load_checkpoint(out / "stage2.npz").stage, 2)

    def test_reconstruct_writes_images_and_dumps(self):
        out = self.out_dir("recon")
        run(
            "reconstruct",
            "--config",
            self.config,
            "--checkpoint",
            self.checkpoint,
            "--image",
            self.image,
            "--out",
            out,
        )

        for suffix in ("reconstruction.png", "overlay.png", "params.npz", "token.npz"):
            self.assertTrue((out / f"00000_{suffix}").exists(), suffix)
        vector, manifest = read_token(out / "00000_token.npz")
        self.assertEqual(vector.shape, (2 * TOKEN_DIM,))
        self.assertEqual(manifest["n_scales"], 2)

    def test_reconstruct_is_reproducible(self):
        first, second = self.out_dir("first"), self.out_dir("second")
        for out in (first, second):
            run(
                "reconstruct",
                "--config",
                self.config,
                "--checkpoint",
                self.checkpoint,
                "--image",
                self.image,
                "--out",
                out,
            )
        self.assertEqual(tree_bytes(first), tree_bytes(second))

    def test_edit_and_animate(self):
        target = self.data / "images" / "00001.png"
        swap = self.out_dir("swap")
        run(
            "edit",
            "--config",
            self.config,
            "--checkpoint",
            self.checkpoint,
            "--mode",
            "swap_token",
            "--source",
            self.image,
            "--target",
            target,
            "--out",
            swap,
        )
        self.assertTrue((swap / "edit.png").exists())

        animate = self.out_dir("animate")
        run(
            "edit",
            "--config",
            self.config,
            "--checkpoint",
            self.checkpoint,
            "--mode",
            "animate",
            "--source",
            self.image,
            "--target",
            target,
            self.data / "images" / "00002.png",
            "--out",
            animate,
        )
        frames = sorted(path.name for path in (animate / "frames").iterdir())
        self.assertEqual(frames, ["0000.png", "0001.png"])

    def test_evaluate_reports_metrics(self):
        out = self.out_dir("eval")
        run(
            "evaluate",
            "--config",
            self.config,
            "--checkpoint",
            self.checkpoint,
            "--manifest",
            self.manifest,
            "--batch-size",
            3,
            "--flow",
            "zero",
            "--embedding",
            "random",
            "--out",
            out,
        )

        rows = read_csv(out / "metrics.csv")
        summary = json.loads((out / "summary.json").read_text())
        self.assertEqual(len(rows), SMALL_CONFIG["SYNTH_DATA_COUNT"])
        self.assertNotEqual(rows[0]["aed"], "")
        for name in ("psnr", "landmark_px", "aed", "apd", "flicker", "warp_error"):
            self.assertIn(name, summary["metrics"])
        self.assertIn("identity_similarity", summary["metrics"])

    def test_cluster_tokens_exports_every_scale(self):
        out = self.out_dir("cluster")
        run(
            "cluster_tokens",
            "--config",
            self.config,
            "--checkpoint",
            self.checkpoint,
            "--manifest",
            self.manifest,
            "--out",
            out,
        )

        rows = read_csv(out / "tokens_scale0.csv")
        self.assertEqual(len(rows), SMALL_CONFIG["SYNTH_DATA_COUNT"])
        self.assertEqual(list(rows[0]), ["frame", "scale", "x", "y", "label"])
        self.assertTrue((out / "tokens_scale1.csv").exists())
        self.assertEqual(
            set(json.loads((out / "silhouette.json").read_text())), {"0", "1"}
        )

    def test_exit_codes(self):
        out = self.out_dir("errors")
        bad_config = write_config(self.tmp / "bad.env", {**SMALL_CONFIG, "NOT_A_KEY": 1})
        cases = (
            (EXIT_IO, "gen_data", "--config", self.tmp / "missing.env", "--out", out),
            (EXIT_VALIDATION, "gen_data", "--config", bad_config, "--out", out),
            (
                EXIT_VALIDATION,
                "evaluate",
                "--config",
                self.config,
                "--manifest",
                self.manifest,
                "--out",
                out,
            ),
            (
                EXIT_CHECKPOINT,
                "reconstruct",
                "--config",
                self.config,
                "--checkpoint",
                self.tmp / "missing.npz",
                "--image",
                self.image,
                "--out",
                out,
            ),
            (
                EXIT_CHECKPOINT,
                "train",
                "--config",
                self.config,
                "--manifest",
                self.manifest,
                "--stage",
                2,
                "--out",
                out,
            ),
            (
                EXIT_IO,
                "train",
                "--config",
                self.config,
                "--manifest",
                self.tmp / "missing.csv",
                "--out",
                out,
            ),
            (
                EXIT_VALIDATION,
                "edit",
                "--config",
                self.config,
                "--checkpoint",
                self.checkpoint,
                "--mode",
                "swap_token",
                "--source",
                self.image,
                "--target",
                self.image,
                self.image,
                "--out",
                out,
            ),
        )
        for code, command, *args in cases:
            with self.subTest(command=command, code=code):
                self.assertExitCode(code, command, *args)
