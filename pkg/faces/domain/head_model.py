"""Linear blendshape head rig with the FLAME parameter interface.

Conventions:
- model space is right-handed, x to the image right, y up, the viewer on +z;
- head rotation θ_h is applied inside ``evaluate`` about the origin, so
  ``project`` only applies the weak-perspective scale and translation;
- projected points are NDC in [-1, 1] (x right, y up); landmark files use
  unit image coordinates (u right, v down) and go through ``ndc_to_unit``.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.policies import validate_finite, validate_positive

logger = logging.getLogger(__name__)

N_LANDMARKS = 203
RIG_VERSION = "hybridface-rig/1"

# Side names follow model space: "left" is x < 0, "right" is x > 0.
# The contour runs from the left ear (index 0) over the chin (16) to the right.
LANDMARK_GROUPS = {
    "contour": range(0, 33),
    "brow_left": range(33, 51),
    "brow_right": range(51, 69),
    "eye_left": range(69, 93),
    "eye_right": range(93, 117),
    "nose_bridge": range(117, 129),
    "nose_left": range(129, 138),
    "nose_right": range(138, 147),
    "mouth_outer": range(147, 179),
    "mouth_inner": range(179, 203),
}

HEAD_RADII = (0.75, 0.95, 0.8)
JAW_PIVOT = (0.0, -0.1, -0.2)


@dataclass(frozen=True)
class RigSpec:
    subdivisions: int = 3
    n_shape: int = 300
    n_expr: int = 50
    seed: int = 0
    shape_scale: float = 0.025
    expression_scale: float = 0.03
    eye_closure_depth: float = 0.05


@dataclass(frozen=True, eq=False)
class HeadModelConfig:
    template: torch.Tensor
    shape_basis: torch.Tensor
    expr_basis: torch.Tensor
    eye_basis: torch.Tensor
    triangles: torch.Tensor
    jaw_pivot: torch.Tensor
    jaw_weights: torch.Tensor
    landmark_faces: torch.Tensor | None = None
    landmark_bary: torch.Tensor | None = None
    seed: int = 0
    version: str = RIG_VERSION

    def __post_init__(self):
        n_vertices = self.template.shape[0]
        if self.template.dim() != 2 or self.template.shape[1] != 3:
            raise ConfigurationError("template must have shape (n_vertices, 3)")
        if self.shape_basis.dim() != 2 or self.shape_basis.shape[0] != 3 * n_vertices:
            raise ConfigurationError("shape_basis must have shape (n_vertices*3, n_shape)")
        if self.expr_basis.dim() != 2 or self.expr_basis.shape[0] != 3 * n_vertices:
            raise ConfigurationError("expr_basis must have shape (n_vertices*3, n_expr)")
        if tuple(self.eye_basis.shape) != (3 * n_vertices, 2):
            raise ConfigurationError("eye_basis must have shape (n_vertices*3, 2)")
        if self.triangles.dim() != 2 or self.triangles.shape[1] != 3:
            raise ConfigurationError("triangles must have shape (n_triangles, 3)")
        if self.triangles.numel() and (
            int(self.triangles.min()) < 0 or int(self.triangles.max()) >= n_vertices
        ):
            raise ConfigurationError("triangle indices must be in [0, n_vertices)")
        if tuple(self.jaw_pivot.shape) != (3,):
            raise ConfigurationError("jaw_pivot must be a 3D point")
        if tuple(self.jaw_weights.shape) != (n_vertices,):
            raise ConfigurationError("jaw_weights must have one entry per vertex")
        if (self.jaw_weights < 0).any() or (self.jaw_weights > 1).any():
            raise ConfigurationError("jaw_weights must be in [0, 1]")
        if (self.landmark_faces is None) != (self.landmark_bary is None):
            raise ConfigurationError(
                "landmark_faces and landmark_bary must be configured together"
            )
        if self.landmark_faces is not None:
            if tuple(self.landmark_faces.shape) != (N_LANDMARKS,):
                raise ConfigurationError(f"exactly {N_LANDMARKS} landmark anchors required")
            if tuple(self.landmark_bary.shape) != (N_LANDMARKS, 3):
                raise ConfigurationError("landmark_bary must have shape (203, 3)")
            n_triangles = self.triangles.shape[0]
            if int(self.landmark_faces.min()) < 0 or int(
                self.landmark_faces.max()
            ) >= n_triangles:
                raise ConfigurationError("landmark anchors must reference valid triangles")

    @property
    def n_vertices(self):
        return self.template.shape[0]

    @property
    def n_shape(self):
        return self.shape_basis.shape[1]

    @property
    def n_expr(self):
        return self.expr_basis.shape[1]

    @property
    def dtype(self):
        return self.template.dtype

    def to(self, dtype):
        changes = {
            name: getattr(self, name).to(dtype)
            for name in (
                "template",
                "shape_basis",
                "expr_basis",
                "eye_basis",
                "jaw_pivot",
                "jaw_weights",
            )
        }
        if self.landmark_bary is not None:
            changes["landmark_bary"] = self.landmark_bary.to(dtype)
        return dataclasses.replace(self, **changes)

    def manifest(self):
        return {
            "version": self.version,
            "seed": self.seed,
            "n_vertices": self.n_vertices,
            "n_triangles": int(self.triangles.shape[0]),
            "n_shape": self.n_shape,
            "n_expr": self.n_expr,
            "n_landmarks": 0 if self.landmark_faces is None else N_LANDMARKS,
        }

    def arrays(self):
        arrays = {
            "template": self.template,
            "shape_basis": self.shape_basis,
            "expr_basis": self.expr_basis,
            "eye_basis": self.eye_basis,
            "triangles": self.triangles,
            "jaw_pivot": self.jaw_pivot,
            "jaw_weights": self.jaw_weights,
        }
        if self.landmark_faces is not None:
            arrays["landmark_faces"] = self.landmark_faces
            arrays["landmark_bary"] = self.landmark_bary
        return {name: value.detach().cpu().numpy() for name, value in arrays.items()}

    @classmethod
    def from_arrays(cls, arrays, manifest):
        tensors = {name: torch.from_numpy(np.array(value)) for name, value in arrays.items()}
        return cls(
            template=tensors["template"],
            shape_basis=tensors["shape_basis"],
            expr_basis=tensors["expr_basis"],
            eye_basis=tensors["eye_basis"],
            triangles=tensors["triangles"].long(),
            jaw_pivot=tensors["jaw_pivot"],
            jaw_weights=tensors["jaw_weights"],
            landmark_faces=(
                tensors["landmark_faces"].long() if "landmark_faces" in tensors else None
            ),
            landmark_bary=tensors.get("landmark_bary"),
            seed=int(manifest.get("seed", 0)),
            version=str(manifest.get("version", RIG_VERSION)),
        )


@dataclass(frozen=True, eq=False)
class HeadParams:
    """Explicit geometry: β, Ψ = {ψ, θ_j, b} and θ = {c, θ_h}, batched on dim 0."""

    beta: torch.Tensor
    psi: torch.Tensor
    theta_j: torch.Tensor
    eye_b: torch.Tensor
    theta_h: torch.Tensor
    cam_c: torch.Tensor

    FIELDS = ("beta", "psi", "theta_j", "eye_b", "theta_h", "cam_c")

    @classmethod
    def zeros(cls, config, batch_size=1, *, scale=1.0):
        dtype = config.dtype
        cam_c = torch.zeros(batch_size, 3, dtype=dtype)
        cam_c[:, 0] = scale
        return cls(
            beta=torch.zeros(batch_size, config.n_shape, dtype=dtype),
            psi=torch.zeros(batch_size, config.n_expr, dtype=dtype),
            theta_j=torch.zeros(batch_size, 3, dtype=dtype),
            eye_b=torch.zeros(batch_size, 2, dtype=dtype),
            theta_h=torch.zeros(batch_size, 3, dtype=dtype),
            cam_c=cam_c,
        )

    @property
    def batch_size(self):
        return self.beta.shape[0]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def detach(self):
        return self.map(lambda value: value.detach())

    def map(self, fn):
        return HeadParams(**{name: fn(getattr(self, name)) for name in self.FIELDS})

    def expression_vector(self):
        return torch.cat([self.psi, self.theta_j, self.eye_b], dim=-1)

    def with_expression_vector(self, vector):
        n_expr = self.psi.shape[-1]
        return self.replace(
            psi=vector[..., :n_expr],
            theta_j=vector[..., n_expr : n_expr + 3],
            eye_b=vector[..., n_expr + 3 : n_expr + 5],
        )

    def pose_vector(self):
        return torch.cat([self.cam_c, self.theta_h], dim=-1)

    def select(self, index):
        return self.map(lambda value: value[index])

    def arrays(self):
        return {name: getattr(self, name).detach().cpu().numpy() for name in self.FIELDS}

    @classmethod
    def from_arrays(cls, arrays):
        return cls(**{name: torch.from_numpy(np.array(arrays[name])) for name in cls.FIELDS})

    @classmethod
    def stack(cls, items):
        return cls(
            **{
                name: torch.cat([getattr(item, name) for item in items], dim=0)
                for name in cls.FIELDS
            }
        )


# The encoders predict exactly the head parameters.
GeometryEstimate = HeadParams


@dataclass(frozen=True, eq=False)
class VertexSet:
    positions: torch.Tensor
    normals: torch.Tensor
    triangles: torch.Tensor | None = None


def axis_angle_to_matrix(axis_angle):
    angle = torch.sqrt((axis_angle**2).sum(dim=-1, keepdim=True) + 1e-16)
    axis = axis_angle / angle
    x, y, z = axis.unbind(dim=-1)
    zero = torch.zeros_like(x)
    skew = torch.stack(
        [zero, -z, y, z, zero, -x, -y, x, zero],
        dim=-1,
    ).reshape(*axis.shape[:-1], 3, 3)
    eye = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device)
    sin = torch.sin(angle)[..., None]
    cos = torch.cos(angle)[..., None]
    return eye + sin * skew + (1.0 - cos) * (skew @ skew)


def head_yaw(theta_h):
    rotation = axis_angle_to_matrix(theta_h)
    return torch.atan2(rotation[..., 0, 2], rotation[..., 2, 2])


def vertex_normals(positions, triangles):
    v0 = positions[:, triangles[:, 0]]
    v1 = positions[:, triangles[:, 1]]
    v2 = positions[:, triangles[:, 2]]
    face_normals = torch.cross(v1 - v0, v2 - v0, dim=-1)
    normals = torch.zeros_like(positions)
    for corner in range(3):
        normals = normals.index_add(1, triangles[:, corner], face_normals)
    return F.normalize(normals, dim=-1, eps=1e-12)


def _validate_params(config, params):
    expected = {
        "beta": config.n_shape,
        "psi": config.n_expr,
        "theta_j": 3,
        "eye_b": 2,
        "theta_h": 3,
        "cam_c": 3,
    }
    batch_size = params.batch_size
    for name, width in expected.items():
        value = getattr(params, name)
        if value.dim() != 2 or value.shape[0] != batch_size or value.shape[1] != width:
            raise ConfigurationError(
                f"{name} must have shape ({batch_size}, {width}), got {tuple(value.shape)}"
            )
        validate_finite(name, value)


def evaluate(config, params):
    _validate_params(config, params)
    batch_size = params.batch_size
    offsets = (
        params.beta @ config.shape_basis.T
        + params.psi @ config.expr_basis.T
        + params.eye_b @ config.eye_basis.T
    )
    positions = config.template + offsets.reshape(batch_size, config.n_vertices, 3)

    # θ_j = 0 and zero-weight vertices leave positions bit-exact.
    jaw_rotation = axis_angle_to_matrix(params.theta_j)
    eye = torch.eye(3, dtype=jaw_rotation.dtype, device=jaw_rotation.device)
    displacement = (positions - config.jaw_pivot) @ (jaw_rotation.transpose(-1, -2) - eye)
    positions = positions + config.jaw_weights[None, :, None] * displacement

    head_rotation = axis_angle_to_matrix(params.theta_h)
    positions = positions @ head_rotation.transpose(-1, -2)
    return VertexSet(
        positions=positions,
        normals=vertex_normals(positions, config.triangles),
        triangles=config.triangles,
    )


def project_points(points, params):
    validate_positive("camera scale", params.cam_c[:, 0])
    scale = params.cam_c[:, 0, None, None]
    translation = params.cam_c[:, None, 1:3]
    return scale * points[..., :2] + translation


def project(vertices, params):
    return project_points(vertices.positions, params)


def select_landmarks(config, vertices):
    if config.landmark_faces is None:
        raise ConfigurationError("landmark anchors are not configured for this rig")
    corners = config.triangles[config.landmark_faces]
    points = vertices.positions[:, corners]
    return torch.einsum("blkc,lk->blc", points, config.landmark_bary)


def ndc_to_unit(points):
    u = (points[..., 0] + 1.0) * 0.5
    v = (1.0 - points[..., 1]) * 0.5
    return torch.stack([u, v], dim=-1)


def unit_to_ndc(points):
    x = points[..., 0] * 2.0 - 1.0
    y = 1.0 - points[..., 1] * 2.0
    return torch.stack([x, y], dim=-1)


def ndc_to_pixels(points, resolution):
    return ndc_to_unit(points) * resolution - 0.5


def icosphere(subdivisions):
    t = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = [
        (-1, t, 0),
        (1, t, 0),
        (-1, -t, 0),
        (1, -t, 0),
        (0, -1, t),
        (0, 1, t),
        (0, -1, -t),
        (0, 1, -t),
        (t, 0, -1),
        (t, 0, 1),
        (-t, 0, -1),
        (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5),
        (0, 5, 1),
        (0, 1, 7),
        (0, 7, 10),
        (0, 10, 11),
        (1, 5, 9),
        (5, 11, 4),
        (11, 10, 2),
        (10, 7, 6),
        (7, 1, 8),
        (3, 9, 4),
        (3, 4, 2),
        (3, 2, 6),
        (3, 6, 8),
        (3, 8, 9),
        (4, 9, 5),
        (2, 4, 11),
        (6, 2, 10),
        (8, 6, 7),
        (9, 8, 1),
    ]
    vertices = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in vertices]

    for _ in range(subdivisions):
        midpoints = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                point = vertices[a] + vertices[b]
                vertices.append(point / np.linalg.norm(point))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined

    return np.stack(vertices), np.array(faces, dtype=np.int64)


def landmark_layout():
    """Front-view (x, y) targets of the 203 landmarks on the template."""
    points = np.zeros((N_LANDMARKS, 2))

    angles = np.linspace(math.pi + 0.1, 2.0 * math.pi - 0.1, 33)
    points[LANDMARK_GROUPS["contour"]] = np.stack(
        [0.68 * np.cos(angles), 0.05 + 0.8 * np.sin(angles)], axis=1
    )

    for side, sign in (("left", -1.0), ("right", 1.0)):
        xs = np.linspace(0.12, 0.5, 18)
        ys = 0.36 + 0.08 * (1.0 - ((xs - 0.31) / 0.19) ** 2)
        points[LANDMARK_GROUPS[f"brow_{side}"]] = np.stack([sign * xs, ys], axis=1)

        theta = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
        points[LANDMARK_GROUPS[f"eye_{side}"]] = np.stack(
            [sign * 0.3 + 0.12 * np.cos(theta), 0.22 + 0.05 * np.sin(theta)], axis=1
        )

        t = np.linspace(0.0, 1.0, 9)
        points[LANDMARK_GROUPS[f"nose_{side}"]] = np.stack(
            [sign * (0.04 + 0.1 * t), -0.2 - 0.04 * np.sin(math.pi * t)], axis=1
        )

    points[LANDMARK_GROUPS["nose_bridge"]] = np.stack(
        [np.zeros(12), np.linspace(0.2, -0.15, 12)], axis=1
    )
    theta = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
    points[LANDMARK_GROUPS["mouth_outer"]] = np.stack(
        [0.25 * np.cos(theta), -0.45 + 0.1 * np.sin(theta)], axis=1
    )
    theta = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    points[LANDMARK_GROUPS["mouth_inner"]] = np.stack(
        [0.17 * np.cos(theta), -0.45 + 0.04 * np.sin(theta)], axis=1
    )
    return points


def _barycentric_2d(points, a, b, c):
    denom = (b[:, 1] - c[:, 1]) * (a[:, 0] - c[:, 0]) + (c[:, 0] - b[:, 0]) * (
        a[:, 1] - c[:, 1]
    )
    px = points[:, None, 0] - c[None, :, 0]
    py = points[:, None, 1] - c[None, :, 1]
    l0 = ((b[:, 1] - c[:, 1]) * px + (c[:, 0] - b[:, 0]) * py) / denom
    l1 = ((c[:, 1] - a[:, 1]) * px + (a[:, 0] - c[:, 0]) * py) / denom
    return np.stack([l0, l1, 1.0 - l0 - l1], axis=-1)


def anchor_landmarks(template, triangles, targets):
    corners = template[triangles]
    face_normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    centroids = corners.mean(axis=1)
    front = np.flatnonzero((face_normals[:, 2] > 0) & (centroids[:, 2] > 0))
    a, b, c = (corners[front, k, :2] for k in range(3))
    bary = _barycentric_2d(targets, a, b, c)
    inside = (bary >= -1e-9).all(axis=-1)

    faces = np.zeros(len(targets), dtype=np.int64)
    weights = np.zeros((len(targets), 3))
    for index in range(len(targets)):
        hits = np.flatnonzero(inside[index])
        if hits.size:
            best = hits[np.argmax(centroids[front[hits], 2])]
            faces[index] = front[best]
            weights[index] = np.clip(bary[index, best], 0.0, 1.0)
        else:
            distances = np.linalg.norm(centroids[front, :2] - targets[index], axis=1)
            best = int(np.argmin(distances))
            faces[index] = front[best]
            weights[index] = np.clip(bary[index, best], 0.0, 1.0)
            logger.warning(
                "event=landmark_anchor_outside_mesh landmark=%s triangle=%s",
                index,
                faces[index],
            )
        weights[index] /= weights[index].sum()
    return faces, weights


def _smooth_fields(template, n_columns, generator, front_weight):
    n_frequencies = max(32, math.ceil(n_columns / 3) + 8)
    frequencies = torch.randn(n_frequencies, 3, generator=generator, dtype=torch.float64)
    phases = torch.rand(n_frequencies, generator=generator, dtype=torch.float64)
    features = torch.cos(template @ frequencies.T * 2.0 + phases * 2.0 * math.pi)
    features = torch.cat([features, template, torch.ones(len(template), 1, dtype=torch.float64)], 1)
    coefficients = torch.randn(
        features.shape[1], 3 * n_columns, generator=generator, dtype=torch.float64
    )
    fields = (features @ coefficients).reshape(len(template), 3, n_columns)
    fields = fields * front_weight[:, None, None]
    return fields.reshape(3 * len(template), n_columns)


def _orthogonal_basis(fields, scale):
    q, _ = torch.linalg.qr(fields)
    n_rows, n_columns = q.shape
    decay = scale * math.sqrt(n_rows) / torch.sqrt(
        torch.arange(1, n_columns + 1, dtype=torch.float64)
    )
    return q * decay


def build_procedural_rig(spec=None):
    spec = spec or RigSpec()
    unit, triangles = icosphere(spec.subdivisions)
    template = unit * np.array(HEAD_RADII)
    n_vertices = len(template)
    if 3 * n_vertices < max(spec.n_shape, spec.n_expr):
        raise ConfigurationError(
            f"{n_vertices} vertices cannot hold {spec.n_shape} shape or "
            f"{spec.n_expr} expression components"
        )

    landmark_faces, landmark_bary = anchor_landmarks(template, triangles, landmark_layout())

    generator = torch.Generator().manual_seed(spec.seed)
    template_t = torch.from_numpy(template)
    everywhere = torch.ones(n_vertices, dtype=torch.float64)
    face_front = torch.sigmoid(template_t[:, 2] / 0.1)
    shape_basis = _orthogonal_basis(
        _smooth_fields(template_t, spec.n_shape, generator, everywhere),
        spec.shape_scale,
    )
    expr_basis = _orthogonal_basis(
        _smooth_fields(template_t, spec.n_expr, generator, face_front),
        spec.expression_scale,
    )

    eye_basis = torch.zeros(n_vertices, 3, 2, dtype=torch.float64)
    for column, sign in enumerate((-1.0, 1.0)):
        centre = torch.tensor([sign * 0.3, 0.22], dtype=torch.float64)
        distance = ((template_t[:, :2] - centre) ** 2).sum(dim=1)
        falloff = torch.exp(-distance / (2.0 * 0.07**2)) * face_front
        eye_basis[:, 1, column] = -spec.eye_closure_depth * falloff
    eye_basis = eye_basis.reshape(3 * n_vertices, 2)

    below_mouth = ((-0.4 - template_t[:, 1]) / 0.15).clamp(0.0, 1.0)
    in_front = ((template_t[:, 2] + 0.2) / 0.4).clamp(0.0, 1.0)
    jaw_weights = below_mouth * in_front

    config = HeadModelConfig(
        template=template_t.float(),
        shape_basis=shape_basis.float(),
        expr_basis=expr_basis.float(),
        eye_basis=eye_basis.float(),
        triangles=torch.from_numpy(triangles),
        jaw_pivot=torch.tensor(JAW_PIVOT, dtype=torch.float32),
        jaw_weights=jaw_weights.float(),
        landmark_faces=torch.from_numpy(landmark_faces),
        landmark_bary=torch.from_numpy(landmark_bary).float(),
        seed=spec.seed,
    )
    logger.info(
        "event=rig_built n_vertices=%s n_triangles=%s n_shape=%s n_expr=%s seed=%s",
        config.n_vertices,
        triangles.shape[0],
        config.n_shape,
        config.n_expr,
        spec.seed,
    )
    return config
