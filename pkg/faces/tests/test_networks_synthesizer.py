import torch
from django.test import SimpleTestCase

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.head_model import VertexSet, vertex_normals
from faces.domain.renderer import ShadingParams, rasterize
from faces.networks.encoders import AppearanceToken
from faces.networks.synthesizer import (
    AdaINParams,
    SynthesizerConfig,
    adain_modulate,
    synthesize,
)
from faces.tests.factories import (
    RESOLUTION,
    TOKEN_DIM,
    TRIANGLE,
    camera,
    random_images,
    small_synthesizer,
    small_tokenizer,
)


def random_token(batch_size=2, n_scales=2, token_dim=TOKEN_DIM, seed=1, dtype=torch.float32):
    generator = torch.Generator().manual_seed(seed)
    return AppearanceToken.from_concat(
        torch.randn(batch_size, n_scales * token_dim, generator=generator, dtype=dtype),
        n_scales,
    )


class FaceSynthesizerTests(SimpleTestCase):
    def test_output_is_an_image_batch_in_unit_range(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer()
        output = synthesize(synthesizer, random_images(2), random_images(2, seed=1), random_token())

        self.assertEqual(tuple(output.shape), (2, 3, RESOLUTION, RESOLUTION))
        self.assertTrue(((output >= 0) & (output <= 1)).all())

    def test_token_decoder_path_is_an_exact_identity_at_initialization(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer()
        mesh, background, token = random_images(2), random_images(2, seed=1), random_token()

        with_decoder = synthesizer(mesh, background, token, use_token_decoder=True)
        without_decoder = synthesizer(mesh, background, token, use_token_decoder=False)

        self.assertTrue(torch.equal(with_decoder, without_decoder))

    def test_trained_zero_convolutions_change_the_output(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer()
        with torch.no_grad():
            for zero_conv in synthesizer.token_decoder.zero_convs:
                zero_conv.bias.fill_(0.5)
        mesh, background, token = random_images(1), random_images(1, seed=1), random_token(1)

        self.assertFalse(
            torch.equal(
                synthesizer(mesh, background, token),
                synthesizer(mesh, background, token, use_token_decoder=False),
            )
        )

    def test_token_changes_the_output(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer()
        mesh, background = random_images(1), random_images(1, seed=1)

        first = synthesizer(mesh, background, random_token(1, seed=1))
        second = synthesizer(mesh, background, random_token(1, seed=2))

        self.assertFalse(torch.equal(first, second))

    def test_disabled_token_decoder(self):
        synthesizer = small_synthesizer(use_token_decoder=False)

        self.assertIsNone(synthesizer.token_decoder)
        with self.assertRaises(ConfigurationError):
            synthesizer.token_decode(random_token())

    def test_rejects_token_of_the_wrong_arity_or_batch(self):
        synthesizer = small_synthesizer()
        mesh, background = random_images(2), random_images(2, seed=1)
        for token in (random_token(n_scales=3), random_token(batch_size=1)):
            with self.subTest(n_scales=token.n_scales, batch_size=token.batch_size):
                with self.assertRaises(ValidationError):
                    synthesizer(mesh, background, token)

    def test_rejects_mismatched_background(self):
        synthesizer = small_synthesizer()
        with self.assertRaises(ValidationError):
            synthesizer(random_images(2), random_images(1), random_token())

    def test_accepts_real_tokenizer_output(self):
        torch.manual_seed(0)
        images = random_images(2)
        output = small_synthesizer()(images, images, small_tokenizer()(images))
        self.assertEqual(tuple(output.shape), tuple(images.shape))


class TokenDecoderTests(SimpleTestCase):
    def test_levels_are_zero_at_initialization(self):
        torch.manual_seed(0)
        residuals = small_synthesizer().token_decode(random_token())

        for residual in residuals:
            self.assertTrue(torch.equal(residual, torch.zeros_like(residual)))

    def test_level_shapes_match_generator_features(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer()
        config = synthesizer.config

        residuals = synthesizer.token_decode(random_token())

        self.assertEqual(len(residuals), config.token_decoder_levels)
        for block, residual in enumerate(residuals):
            size = config.generator_size(block)
            self.assertEqual(
                tuple(residual.shape), (2, config.generator_width(block), size, size)
            )

    def test_one_gradient_step_moves_the_zero_convolutions(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer()
        optimizer = torch.optim.SGD(synthesizer.token_decoder.parameters(), lr=0.1)

        synthesizer(random_images(2), random_images(2, seed=1), random_token()).sum().backward()
        optimizer.step()

        moved = [
            bool(zero_conv.weight.abs().sum() > 0)
            for zero_conv in synthesizer.token_decoder.zero_convs
        ]
        self.assertTrue(any(moved))


class SynthesizerConfigTests(SimpleTestCase):
    def test_token_order(self):
        mirror = SynthesizerConfig(n_blocks=4, resolution=64)
        sequential = SynthesizerConfig(n_blocks=4, resolution=64, token_order="sequential")

        self.assertEqual([mirror.token_index(block) for block in range(4)], [3, 2, 1, 0])
        self.assertEqual([sequential.token_index(block) for block in range(4)], [0, 1, 2, 3])

    def test_generator_sizes_climb_to_full_resolution(self):
        config = SynthesizerConfig(n_blocks=4, base_channels=16, resolution=224)

        self.assertEqual([config.generator_size(block) for block in range(4)], [28, 56, 112, 224])
        self.assertEqual([config.generator_width(block) for block in range(4)], [128, 64, 32, 16])

    def test_rejects_invalid_configuration(self):
        for kwargs in (
            {"n_blocks": 0},
            {"token_order": "random"},
            {"n_blocks": 4, "resolution": 40},
        ):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigurationError):
                    SynthesizerConfig(**kwargs)


class AdaINTests(SimpleTestCase):
    def test_modulated_statistics_equal_predicted_parameters(self):
        torch.manual_seed(0)
        mlp = AdaINParams(token_dim=TOKEN_DIM, hidden=16, channels=16).double()
        features = torch.randn(2, 16, 8, 8, dtype=torch.float64) * 3.0 + 1.5
        mu, sigma = mlp(torch.randn(2, TOKEN_DIM, dtype=torch.float64))

        out = adain_modulate(features, mu, sigma)

        mean = out.mean(dim=(2, 3))
        std = out.var(dim=(2, 3), unbiased=False).sqrt()
        self.assertLess(float((mean - mu).abs().max()), 1e-5)
        self.assertLess(float((std - sigma).abs().max()), 1e-5)
        self.assertTrue((sigma > 0).all())

    def test_zero_mlp_output_predicts_unit_scale(self):
        mlp = AdaINParams(token_dim=4, hidden=4, channels=3)
        with torch.no_grad():
            for parameter in mlp.parameters():
                parameter.zero_()

        mu, sigma = mlp(torch.zeros(1, 4))

        self.assertTrue(torch.equal(mu, torch.zeros(1, 3)))
        self.assertTrue(torch.allclose(sigma, torch.ones(1, 3), atol=1e-6))

    def test_rejects_parameter_shape_mismatch(self):
        with self.assertRaises(ConfigurationError):
            adain_modulate(torch.zeros(1, 4, 2, 2), torch.zeros(1, 3), torch.ones(1, 3))


class EndToEndGradientTests(SimpleTestCase):
    resolution = 16

    def _loss(self, flat, synthesizer, token, target):
        positions = flat.reshape(1, 3, 3)
        triangles = torch.tensor([[0, 1, 2]])
        vertices = VertexSet(positions, vertex_normals(positions, triangles), triangles)
        albedo = torch.tensor([[[0.2, 0.4, 0.6], [0.7, 0.3, 0.5], [0.4, 0.6, 0.2]]], dtype=torch.float64)
        bundle = rasterize(
            vertices,
            camera(),
            ShadingParams(albedo=albedo, sh_coeffs=ShadingParams.neutral(3, dtype=torch.float64).sh_coeffs),
            self.resolution,
            image=torch.full((1, 3, self.resolution, self.resolution), 0.3, dtype=torch.float64),
        )
        output = synthesizer(bundle.mesh_image, bundle.background, token)
        return (output - target).square().sum()

    def test_render_then_synthesize_gradient_is_finite_and_matches_differences(self):
        torch.manual_seed(0)
        synthesizer = small_synthesizer(resolution=self.resolution).double()
        token = random_token(1, dtype=torch.float64)
        generator = torch.Generator().manual_seed(0)
        target = torch.rand(
            1, 3, self.resolution, self.resolution, generator=generator, dtype=torch.float64
        )
        flat = torch.tensor(TRIANGLE, dtype=torch.float64).reshape(-1)

        variable = flat.clone().requires_grad_(True)
        self._loss(variable, synthesizer, token, target).backward()
        analytic = variable.grad
        self.assertTrue(torch.isfinite(analytic).all())

        step = 1e-6
        numeric = torch.zeros_like(flat)
        for index in range(flat.numel()):
            offset = torch.zeros_like(flat)
            offset[index] = step
            numeric[index] = (
                self._loss(flat + offset, synthesizer, token, target)
                - self._loss(flat - offset, synthesizer, token, target)
            ) / (2.0 * step)

        self.assertGreater(float(numeric.norm()), 0.0)
        self.assertLess(float((analytic - numeric).norm() / numeric.norm()), 0.1)
