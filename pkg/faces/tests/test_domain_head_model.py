import dataclasses
import math

import torch
from django.test import SimpleTestCase

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.head_model import (
    N_LANDMARKS,
    HeadModelConfig,
    HeadParams,
    RigSpec,
    build_procedural_rig,
    evaluate,
    head_yaw,
    ndc_to_pixels,
    ndc_to_unit,
    project,
    project_points,
    select_landmarks,
    unit_to_ndc,
)
from faces.tests.factories import N_EXPR, N_SHAPE, SMALL_RIG, frontal_params, small_rig


def twenty_vertex_rig(dtype=torch.float64):
    generator = torch.Generator().manual_seed(3)
    n_vertices = 20
    triangles = torch.tensor([[i, i + 1, i + 2] for i in range(n_vertices - 2)])
    jaw_weights = torch.linspace(0.0, 1.0, n_vertices, dtype=dtype)
    return HeadModelConfig(
        template=torch.randn(n_vertices, 3, generator=generator, dtype=dtype),
        shape_basis=torch.randn(3 * n_vertices, 5, generator=generator, dtype=dtype),
        expr_basis=torch.randn(3 * n_vertices, 4, generator=generator, dtype=dtype),
        eye_basis=torch.randn(3 * n_vertices, 2, generator=generator, dtype=dtype),
        triangles=triangles,
        jaw_pivot=torch.tensor([0.0, -0.1, -0.2], dtype=dtype),
        jaw_weights=jaw_weights,
    )


def axis_vertex_rig():
    zeros = torch.zeros(9, 1, dtype=torch.float64)
    return HeadModelConfig(
        template=torch.eye(3, dtype=torch.float64),
        shape_basis=zeros,
        expr_basis=zeros,
        eye_basis=torch.zeros(9, 2, dtype=torch.float64),
        triangles=torch.tensor([[0, 1, 2]]),
        jaw_pivot=torch.zeros(3, dtype=torch.float64),
        jaw_weights=torch.zeros(3, dtype=torch.float64),
    )


def axis_vertex_rig_params(batch_size=1, *, scale=1.0):
    return HeadParams.zeros(axis_vertex_rig(), batch_size, scale=scale)


def random_params(config, batch_size=2, seed=5):
    generator = torch.Generator().manual_seed(seed)
    dtype = config.dtype

    def draw(width, scale=0.1):
        return torch.randn(batch_size, width, generator=generator, dtype=dtype) * scale

    cam_c = draw(3)
    cam_c[:, 0] = 0.8
    return HeadParams(
        beta=draw(config.n_shape),
        psi=draw(config.n_expr),
        theta_j=draw(3),
        eye_b=draw(2),
        theta_h=draw(3),
        cam_c=cam_c,
    )


class ProceduralRigTests(SimpleTestCase):
    def test_rig_has_anchored_landmarks_and_requested_dimensions(self):
        config = small_rig()

        self.assertEqual(config.n_vertices, 42)
        self.assertEqual(tuple(config.triangles.shape), (80, 3))
        self.assertEqual((config.n_shape, config.n_expr), (N_SHAPE, N_EXPR))
        self.assertEqual(tuple(config.landmark_faces.shape), (N_LANDMARKS,))
        self.assertTrue(torch.allclose(config.landmark_bary.sum(dim=1), torch.ones(N_LANDMARKS)))

    def test_same_seed_builds_identical_bases(self):
        first = build_procedural_rig(SMALL_RIG)
        second = build_procedural_rig(SMALL_RIG)
        self.assertTrue(torch.equal(first.shape_basis, second.shape_basis))
        self.assertTrue(torch.equal(first.expr_basis, second.expr_basis))

    def test_rejects_more_components_than_vertex_coordinates(self):
        with self.assertRaises(ConfigurationError):
            build_procedural_rig(RigSpec(subdivisions=0, n_shape=40, n_expr=4))


class EvaluateTests(SimpleTestCase):
    def test_zero_parameters_reproduce_template(self):
        config = small_rig()
        vertices = evaluate(config, frontal_params())

        self.assertTrue(torch.equal(vertices.positions[0], config.template))
        self.assertTrue(torch.allclose(vertices.normals.norm(dim=-1), torch.ones(42), atol=1e-5))

    def test_unit_shape_coefficient_adds_its_basis_column(self):
        config = small_rig()
        params = frontal_params()
        params.beta[0, 0] = 1.0

        positions = evaluate(config, params).positions[0]

        expected = config.template + config.shape_basis[:, 0].reshape(-1, 3)
        self.assertTrue(torch.allclose(positions, expected, rtol=0.0, atol=1e-7))

    def test_shape_offsets_are_additive(self):
        config = twenty_vertex_rig()
        first = random_params(config, batch_size=1, seed=6)
        second = random_params(config, batch_size=1, seed=7)
        zero = torch.zeros(1, 3, dtype=torch.float64)

        def offsets(beta):
            params = first.replace(
                beta=beta,
                psi=torch.zeros_like(first.psi),
                eye_b=torch.zeros_like(first.eye_b),
                theta_j=zero,
                theta_h=zero,
            )
            return evaluate(config, params).positions - config.template

        combined = offsets(first.beta + second.beta)

        self.assertTrue(
            torch.allclose(combined, offsets(first.beta) + offsets(second.beta), atol=1e-6)
        )

    def test_jaw_rotation_leaves_unweighted_vertices_bit_identical(self):
        config = small_rig()
        still = config.jaw_weights == 0
        self.assertGreater(int(still.sum()), 0)
        self.assertGreater(int((~still).sum()), 0)
        closed = frontal_params()
        closed.beta[0, :3] = torch.tensor([0.4, -0.2, 0.1])
        closed.psi[0, :2] = torch.tensor([0.3, -0.5])
        reference = evaluate(config, closed).positions[0]

        for theta_j in ([0.3, 0.0, 0.0], [-0.2, 0.1, 0.05], [1.0, -0.7, 0.4]):
            with self.subTest(theta_j=theta_j):
                opened = closed.replace(theta_j=torch.tensor([theta_j]))
                positions = evaluate(config, opened).positions[0]
                self.assertTrue(torch.equal(positions[still], reference[still]))
                self.assertFalse(torch.equal(positions[~still], reference[~still]))

    def test_head_rotation_preserves_pairwise_distances(self):
        config = twenty_vertex_rig()
        params = random_params(config, batch_size=1)
        upright = evaluate(config, params.replace(theta_h=torch.zeros(1, 3, dtype=torch.float64)))

        for theta_h in ([0.0, math.pi / 2, 0.0], [0.4, -1.1, 0.3], [2.0, 0.5, -0.8]):
            with self.subTest(theta_h=theta_h):
                rotated = evaluate(
                    config, params.replace(theta_h=torch.tensor([theta_h], dtype=torch.float64))
                )
                self.assertTrue(
                    torch.allclose(
                        torch.cdist(rotated.positions, rotated.positions),
                        torch.cdist(upright.positions, upright.positions),
                        atol=1e-6,
                    )
                )

    def test_expression_jacobian_matches_central_differences(self):
        config = twenty_vertex_rig()
        params = random_params(config)
        psi = params.psi.clone().requires_grad_(True)

        def positions(value):
            return evaluate(config, params.replace(psi=value)).positions

        self.assertTrue(torch.autograd.gradcheck(positions, (psi,), eps=1e-6, rtol=1e-3))

    def test_pose_and_jaw_jacobians_match_central_differences(self):
        config = twenty_vertex_rig()
        params = random_params(config)
        theta_h = params.theta_h.clone().requires_grad_(True)
        theta_j = params.theta_j.clone().requires_grad_(True)

        def positions(head, jaw):
            return evaluate(config, params.replace(theta_h=head, theta_j=jaw)).positions

        self.assertTrue(
            torch.autograd.gradcheck(positions, (theta_h, theta_j), eps=1e-6, rtol=1e-3)
        )

    def test_rejects_parameters_of_the_wrong_width(self):
        config = small_rig()
        params = frontal_params().replace(psi=torch.zeros(1, N_EXPR + 1))
        with self.assertRaises(ConfigurationError):
            evaluate(config, params)

    def test_rejects_non_finite_parameters(self):
        params = frontal_params()
        params.beta[0, 0] = float("nan")
        with self.assertRaises(ValidationError):
            evaluate(small_rig(), params)

    def test_select_landmarks_needs_anchors(self):
        config = twenty_vertex_rig()
        vertices = evaluate(config, random_params(config))
        with self.assertRaises(ConfigurationError):
            select_landmarks(config, vertices)


class ProjectionTests(SimpleTestCase):
    def test_weak_perspective_scale_and_translation(self):
        params = frontal_params(scale=2.0)
        params.cam_c[0, 1:] = torch.tensor([0.1, -0.2])
        points = torch.tensor([[[0.5, 0.25, 3.0]]])

        projected = project_points(points, params)

        self.assertTrue(torch.allclose(projected, torch.tensor([[[1.1, 0.3]]])))

    def test_unit_scale_keeps_xy_and_double_scale_doubles_it(self):
        points = torch.tensor([[[0.5, 0.25, 3.0], [-0.4, 0.9, -1.0]]], dtype=torch.float64)
        single = project_points(points, axis_vertex_rig_params(scale=1.0))
        double = project_points(points, axis_vertex_rig_params(scale=2.0))

        self.assertTrue(torch.equal(single, points[..., :2]))
        self.assertTrue(torch.equal(double, 2.0 * single))

    def test_projection_commutes_with_translation(self):
        generator = torch.Generator().manual_seed(4)
        points = torch.randn(2, 10, 3, generator=generator, dtype=torch.float64)
        params = axis_vertex_rig_params(batch_size=2, scale=0.8)
        params.cam_c[:, 1:] = torch.tensor([[0.1, -0.3], [0.25, 0.05]], dtype=torch.float64)
        delta = torch.tensor([[-0.2, 0.4], [0.7, 0.1]], dtype=torch.float64)
        shifted = params.replace(cam_c=params.cam_c.clone())
        shifted.cam_c[:, 1:] += delta

        self.assertTrue(
            torch.allclose(
                project_points(points, shifted),
                project_points(points, params) + delta[:, None, :],
                atol=1e-12,
            )
        )

    def test_quarter_turn_yaw_projects_the_side_vertex_to_the_centre_line(self):
        config = axis_vertex_rig()
        params = axis_vertex_rig_params().replace(
            theta_h=torch.tensor([[0.0, math.pi / 2, 0.0]], dtype=torch.float64)
        )

        projected = project(evaluate(config, params), params)

        self.assertAlmostEqual(float(projected[0, 0, 0]), 0.0, places=9)
        self.assertAlmostEqual(float(projected[0, 0, 1]), 0.0, places=9)

    def test_projection_rejects_non_positive_scale(self):
        config = small_rig()
        for scale in (0.0, -1.0):
            with self.subTest(scale=scale):
                params = frontal_params(scale=scale)
                with self.assertRaises(ValidationError):
                    project(evaluate(config, params), params)

    def test_landmarks_project_inside_the_frame_for_a_frontal_head(self):
        config = small_rig()
        params = frontal_params()
        vertices = evaluate(config, params)

        unit = ndc_to_unit(project_points(select_landmarks(config, vertices), params))

        self.assertEqual(tuple(unit.shape), (1, N_LANDMARKS, 2))
        self.assertTrue(((unit >= 0) & (unit <= 1)).all())

    def test_coordinate_conversions(self):
        ndc = torch.tensor([[-1.0, 1.0], [1.0, -1.0], [0.0, 0.0]])
        unit = ndc_to_unit(ndc)

        self.assertTrue(torch.equal(unit, torch.tensor([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5]])))
        self.assertTrue(torch.equal(unit_to_ndc(unit), ndc))
        self.assertTrue(
            torch.equal(ndc_to_pixels(ndc[2:], 32), torch.tensor([[15.5, 15.5]]))
        )


class HeadYawTests(SimpleTestCase):
    def test_yaw_of_pure_rotation_about_vertical_axis(self):
        for angle in (-1.2, -0.3, 0.0, 0.4, 1.5):
            with self.subTest(angle=angle):
                theta_h = torch.tensor([[0.0, angle, 0.0]], dtype=torch.float64)
                self.assertAlmostEqual(float(head_yaw(theta_h)[0]), angle, places=6)

    def test_positive_yaw_moves_the_nose_towards_positive_x(self):
        config = small_rig()
        params = frontal_params().replace(theta_h=torch.tensor([[0.0, math.pi / 6, 0.0]]))
        front_vertex = int(torch.argmax(config.template[:, 2]))

        rotated = evaluate(config, params).positions[0, front_vertex]

        self.assertGreater(float(rotated[0]), float(config.template[front_vertex, 0]))


class HeadParamsTests(SimpleTestCase):
    def test_expression_vector_round_trip(self):
        params = random_params(small_rig().to(torch.float64))
        vector = params.expression_vector()

        self.assertEqual(vector.shape[-1], N_EXPR + 5)
        rebuilt = frontal_params(2).map(lambda value: value.double()).with_expression_vector(
            vector
        )
        self.assertTrue(torch.equal(rebuilt.psi, params.psi))
        self.assertTrue(torch.equal(rebuilt.theta_j, params.theta_j))
        self.assertTrue(torch.equal(rebuilt.eye_b, params.eye_b))

    def test_stack_and_select(self):
        first, second = frontal_params(scale=0.5), frontal_params(scale=0.9)
        stacked = HeadParams.stack([first, second])

        self.assertEqual(stacked.batch_size, 2)
        self.assertEqual(float(stacked.select(slice(1, 2)).cam_c[0, 0]), float(second.cam_c[0, 0]))


class SelectLandmarksTests(SimpleTestCase):
    def setUp(self):
        self.config = small_rig()
        params = frontal_params()
        params.psi[0, :2] = torch.tensor([0.5, -0.3])
        self.vertices = evaluate(self.config, params)
        self.corners = self.config.triangles[self.config.landmark_faces]

    def test_unit_barycentric_returns_the_first_corner(self):
        bary = torch.zeros(N_LANDMARKS, 3)
        bary[:, 0] = 1.0
        config = dataclasses.replace(self.config, landmark_bary=bary)

        landmarks = select_landmarks(config, self.vertices)

        self.assertEqual(tuple(landmarks.shape), (1, N_LANDMARKS, 3))
        self.assertTrue(torch.equal(landmarks[0], self.vertices.positions[0, self.corners[:, 0]]))

    def test_equal_barycentrics_return_the_centroid(self):
        config = dataclasses.replace(
            self.config, landmark_bary=torch.full((N_LANDMARKS, 3), 1.0 / 3.0)
        )

        landmarks = select_landmarks(config, self.vertices)

        centroids = self.vertices.positions[0, self.corners].mean(dim=1)
        self.assertTrue(torch.allclose(landmarks[0], centroids, atol=1e-6))
