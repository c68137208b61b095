import tempfile
from pathlib import Path

import torch
from django.test import SimpleTestCase

from faces.domain.exceptions import ValidationError
from faces.domain.head_model import evaluate, ndc_to_unit, project_points, select_landmarks
from faces.integrations.images import read_image
from faces.integrations.manifest import PARAMS_ARCHIVE, load_manifest
from faces.integrations.rigs import load_rig
from faces.tasks.generate_synthetic import (
    MANIFEST_NAME,
    RIG_NAME,
    SyntheticSceneSpec,
    generate_synthetic,
)
from faces.tests.factories import RESOLUTION, small_dataset, small_rig


def tree_bytes(directory):
    return {
        str(path.relative_to(directory)): path.read_bytes()
        for path in sorted(Path(directory).rglob("*"))
        if path.is_file()
    }


class GenerateSyntheticTests(SimpleTestCase):
    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.tmp = Path(directory.name)

    def test_writes_images_landmarks_and_ground_truth(self):
        dataset = small_dataset(self.tmp / "data")

        self.assertEqual(dataset.count, 4)
        self.assertEqual(dataset.manifest, self.tmp / "data" / MANIFEST_NAME)
        self.assertTrue((self.tmp / "data" / PARAMS_ARCHIVE).exists())
        self.assertTrue((self.tmp / "data" / RIG_NAME).exists())
        records = list(load_manifest(dataset.manifest, with_params=True))
        self.assertEqual(len(records), 4)
        image = read_image(records[0].image)
        self.assertEqual(tuple(image.shape), (3, RESOLUTION, RESOLUTION))

    def test_landmarks_are_the_projection_of_the_stored_parameters(self):
        dataset = small_dataset(self.tmp / "data")
        rig = small_rig()

        for record in load_manifest(dataset.manifest, with_params=True):
            with self.subTest(index=record.index):
                params = record.params
                projected = project_points(
                    select_landmarks(rig, evaluate(rig, params)), params
                )
                self.assertTrue(
                    torch.allclose(ndc_to_unit(projected[0]), record.points, atol=1e-6)
                )

    def test_subjects_are_written_as_video_ids(self):
        dataset = small_dataset(self.tmp / "data", count=5, identities=2)
        records = list(load_manifest(dataset.manifest, with_params=True))

        self.assertEqual(
            [record.video_id for record in records],
            ["subject000", "subject001", "subject000", "subject001", "subject000"],
        )
        self.assertEqual([record.frame for record in records], [0, 0, 1, 1, 2])
        self.assertTrue(torch.equal(records[0].params.beta, records[2].params.beta))
        self.assertFalse(torch.equal(records[0].params.beta, records[1].params.beta))

    def test_same_seed_gives_identical_files(self):
        small_dataset(self.tmp / "first", seed=3)
        small_dataset(self.tmp / "second", seed=3)
        small_dataset(self.tmp / "third", seed=4)

        first = tree_bytes(self.tmp / "first")
        self.assertEqual(first, tree_bytes(self.tmp / "second"))
        self.assertNotEqual(first, tree_bytes(self.tmp / "third"))

    def test_saved_rig_matches_the_generating_rig(self):
        small_dataset(self.tmp / "data", count=1, identities=1)
        loaded = load_rig(self.tmp / "data" / RIG_NAME)
        self.assertTrue(torch.equal(loaded.expr_basis, small_rig().expr_basis))

    def test_out_of_frame_ranges_fail_after_repeated_draws(self):
        spec = SyntheticSceneSpec(
            count=1, n_identities=1, resolution=RESOLUTION, scale_min=5.0, scale_max=5.0
        )
        with self.assertLogs("faces.tasks.generate_synthetic", level="WARNING") as logs:
            with self.assertRaises(ValidationError):
                generate_synthetic(spec, small_rig(), self.tmp / "data")
        self.assertIn("event=synthetic_draw_rejected", logs.output[0])

    def test_rejects_invalid_spec(self):
        for kwargs in (
            {"count": 0},
            {"n_identities": 0},
            {"resolution": 8},
            {"scale_min": 0.9, "scale_max": 0.8},
            {"yaw_max": float("inf")},
        ):
            with self.subTest(**kwargs):
                with self.assertRaises(ValidationError):
                    SyntheticSceneSpec(**kwargs)
