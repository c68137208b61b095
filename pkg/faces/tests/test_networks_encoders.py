import torch
from django.test import SimpleTestCase

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.networks.encoders import (
    CAMERA_SCALE_PRIOR,
    AppearanceToken,
    AppearanceTokenizer,
    GeometryEncoderConfig,
    TokenizerConfig,
    encode_geometry,
    tokenize,
)
from faces.tests.factories import (
    CHANNELS,
    N_EXPR,
    N_SHAPE,
    RESOLUTION,
    TOKEN_DIM,
    random_images,
    small_encoders,
    small_tokenizer,
)


class AppearanceTokenizerTests(SimpleTestCase):
    def test_emits_one_sub_token_per_scale(self):
        torch.manual_seed(0)
        token = tokenize(small_tokenizer(), random_images(3))

        self.assertEqual(token.n_scales, len(CHANNELS))
        self.assertEqual(token.batch_size, 3)
        self.assertEqual(tuple(token.concat.shape), (3, len(CHANNELS) * TOKEN_DIM))
        for sub_token in token.sub_tokens:
            self.assertEqual(tuple(sub_token.shape), (3, TOKEN_DIM))

    def test_single_scale_variant_projects_the_last_stage_only(self):
        tokenizer = small_tokenizer(multi_scale=False)

        self.assertEqual(
            [projection.in_features for projection in tokenizer.projections],
            [CHANNELS[-1]] * len(CHANNELS),
        )
        self.assertEqual(tokenizer(random_images(1)).n_scales, len(CHANNELS))

    def test_zero_initialized_projections_give_zero_tokens(self):
        tokenizer = AppearanceTokenizer(
            TokenizerConfig(
                n_scales=2,
                token_dim=4,
                channels=CHANNELS,
                resolution=RESOLUTION,
                zero_init_projections=True,
            )
        )
        token = tokenizer(random_images(2))
        self.assertTrue(torch.equal(token.concat, torch.zeros(2, 8)))

    def test_rejects_images_of_another_resolution_unless_resizing(self):
        images = random_images(1, resolution=48)
        with self.assertRaises(ValidationError):
            small_tokenizer()(images)

        resizing = AppearanceTokenizer(
            TokenizerConfig(
                n_scales=2,
                token_dim=TOKEN_DIM,
                channels=CHANNELS,
                resolution=RESOLUTION,
                resize_input=True,
            )
        )
        self.assertEqual(resizing(images).batch_size, 1)

    def test_config_needs_one_width_per_scale(self):
        with self.assertRaises(ConfigurationError):
            TokenizerConfig(n_scales=3, channels=(4, 8))


class AppearanceTokenTests(SimpleTestCase):
    def test_concat_round_trip(self):
        vector = torch.arange(16.0).reshape(2, 8)
        token = AppearanceToken.from_concat(vector, 4)

        self.assertEqual(token.n_scales, 4)
        self.assertEqual(token.token_dim, 2)
        self.assertTrue(torch.equal(token.concat, vector))

    def test_rejects_indivisible_length(self):
        with self.assertRaises(ValidationError):
            AppearanceToken.from_concat(torch.zeros(1, 10), 4)

    def test_rejects_mismatched_sub_tokens(self):
        with self.assertRaises(ValidationError):
            AppearanceToken(sub_tokens=(torch.zeros(1, 4), torch.zeros(1, 5)))

    def test_stack_and_select(self):
        first = AppearanceToken.from_concat(torch.zeros(1, 4), 2)
        second = AppearanceToken.from_concat(torch.ones(1, 4), 2)
        stacked = AppearanceToken.stack([first, second])

        self.assertEqual(stacked.batch_size, 2)
        self.assertTrue(torch.equal(stacked.select(slice(1, 2)).concat, second.concat))


class GeometryEncoderTests(SimpleTestCase):
    def test_predicts_every_parameter_group(self):
        torch.manual_seed(0)
        params = encode_geometry(small_encoders(), random_images(2))

        self.assertEqual(tuple(params.beta.shape), (2, N_SHAPE))
        self.assertEqual(tuple(params.psi.shape), (2, N_EXPR))
        self.assertEqual(tuple(params.theta_j.shape), (2, 3))
        self.assertEqual(tuple(params.eye_b.shape), (2, 2))
        self.assertEqual(tuple(params.theta_h.shape), (2, 3))
        self.assertEqual(tuple(params.cam_c.shape), (2, 3))

    def test_camera_scale_starts_near_the_prior_and_stays_positive(self):
        torch.manual_seed(0)
        params = small_encoders()(random_images(4))

        self.assertTrue((params.cam_c[:, 0] > 0).all())
        for value in params.cam_c[:, 0].tolist():
            self.assertAlmostEqual(value, CAMERA_SCALE_PRIOR, delta=0.05)

    def test_expression_encoder_matches_joint_expression(self):
        torch.manual_seed(0)
        encoders = small_encoders()
        images = random_images(2)

        self.assertTrue(
            torch.equal(encoders.encode_expression(images), encoders(images).expression_vector())
        )

    def test_expression_dimension_includes_jaw_and_eyes(self):
        self.assertEqual(GeometryEncoderConfig(n_expr=50).expression_dim, 55)
