import torch
from django.test import SimpleTestCase

from faces.domain.exceptions import ValidationError
from faces.tasks.augmentation import AugmentationSpec, augment_expression
from faces.tests.factories import N_EXPR, frontal_params

ONLY_ZEROING = AugmentationSpec(jitter_prob=0.0, jaw_prob=0.0, zero_prob=1.0, swap_prob=0.0)
ONLY_SWAP = AugmentationSpec(jitter_prob=0.0, jaw_prob=0.0, zero_prob=0.0, swap_prob=1.0)


def expressive_params(batch_size=4, seed=0):
    generator = torch.Generator().manual_seed(seed)
    params = frontal_params(batch_size)
    return params.replace(
        beta=torch.randn(batch_size, params.beta.shape[1], generator=generator),
        psi=torch.randn(batch_size, N_EXPR, generator=generator),
        theta_j=torch.rand(batch_size, 3, generator=generator) * 0.2,
        eye_b=torch.rand(batch_size, 2, generator=generator),
    )


class AugmentExpressionTests(SimpleTestCase):
    def test_disabled_spec_is_identity(self):
        params = expressive_params()
        augmented = augment_expression(
            params, AugmentationSpec.disabled(), torch.Generator().manual_seed(0)
        )

        self.assertTrue(torch.equal(augmented.psi, params.psi))
        self.assertTrue(torch.equal(augmented.theta_j, params.theta_j))
        self.assertTrue(torch.equal(augmented.eye_b, params.eye_b))

    def test_zeroing_branch(self):
        params = expressive_params()
        augmented = augment_expression(params, ONLY_ZEROING, torch.Generator().manual_seed(0))

        self.assertTrue(torch.equal(augmented.psi, torch.zeros_like(params.psi)))
        self.assertTrue(torch.equal(augmented.theta_j, params.theta_j))

    def test_same_generator_state_gives_same_augmentation(self):
        params = expressive_params()
        first = augment_expression(params, AugmentationSpec(), torch.Generator().manual_seed(7))
        second = augment_expression(params, AugmentationSpec(), torch.Generator().manual_seed(7))

        self.assertTrue(torch.equal(first.psi, second.psi))
        self.assertTrue(torch.equal(first.theta_j, second.theta_j))
        self.assertTrue(torch.equal(first.eye_b, second.eye_b))

    def test_perturbed_values_stay_within_bounds(self):
        params = expressive_params(8).replace(psi=torch.zeros(8, N_EXPR))
        spec = AugmentationSpec(
            jitter_prob=1.0,
            jitter_fraction=1.0,
            jitter_scale=100.0,
            jaw_prob=1.0,
            jaw_range=10.0,
            zero_prob=0.0,
            swap_prob=0.0,
        )

        augmented = augment_expression(params, spec, torch.Generator().manual_seed(0))

        self.assertLessEqual(float(augmented.psi.abs().max()), spec.expr_bound)
        self.assertLessEqual(float(augmented.theta_j[:, 0].abs().max()), spec.jaw_bound)
        self.assertTrue(torch.equal(augmented.theta_j[:, 1:], params.theta_j[:, 1:]))

    def test_shape_pose_and_camera_are_untouched(self):
        params = expressive_params()
        augmented = augment_expression(params, AugmentationSpec(), torch.Generator().manual_seed(1))

        self.assertTrue(torch.equal(augmented.beta, params.beta))
        self.assertTrue(torch.equal(augmented.theta_h, params.theta_h))
        self.assertTrue(torch.equal(augmented.cam_c, params.cam_c))

    def test_swap_draws_expressions_from_the_batch(self):
        params = expressive_params()
        augmented = augment_expression(params, ONLY_SWAP, torch.Generator().manual_seed(3))

        original_rows = {tuple(row) for row in params.psi.tolist()}
        for row in augmented.psi.tolist():
            self.assertIn(tuple(row), original_rows)

    def test_swap_is_a_no_op_for_a_single_sample(self):
        params = expressive_params(1)
        augmented = augment_expression(params, ONLY_SWAP, torch.Generator().manual_seed(0))
        self.assertTrue(torch.equal(augmented.psi, params.psi))

    def test_augmentation_does_not_track_gradients(self):
        params = expressive_params()
        params = params.replace(psi=params.psi.clone().requires_grad_(True))

        augmented = augment_expression(params, AugmentationSpec(), torch.Generator().manual_seed(0))

        self.assertFalse(augmented.psi.requires_grad)


class AugmentationSpecTests(SimpleTestCase):
    def test_rejects_invalid_values(self):
        for kwargs in (
            {"jitter_prob": 1.5},
            {"swap_prob": -0.1},
            {"expr_bound": 0.0},
            {"jaw_range": -1.0},
            {"jitter_scale": float("nan")},
        ):
            with self.subTest(**kwargs):
                with self.assertRaises(ValidationError):
                    AugmentationSpec(**kwargs)
