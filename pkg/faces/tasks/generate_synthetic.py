"""Closed-loop synthetic dataset: rendered rig faces with known parameters.

Every subject has a fixed shape, skin albedo and lighting family; samples
cycle through the subjects and vary expression, pose, camera, light and
background. The subject id is written as the video id.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import torch
from django.conf import settings

from faces.domain.exceptions import ValidationError
from faces.domain.head_model import (
    HeadParams,
    evaluate,
    ndc_to_unit,
    project_points,
    select_landmarks,
)
from faces.domain.renderer import ShadingParams, neutral_lighting, rasterize
from faces.integrations.images import write_image
from faces.integrations.landmarks import write_landmarks
from faces.integrations.manifest import write_ground_truth, write_manifest
from faces.integrations.rigs import save_rig

logger = logging.getLogger(__name__)

MAX_DRAWS = 50
MANIFEST_NAME = "manifest.csv"
RIG_NAME = "rig.npz"


@dataclass(frozen=True)
class SyntheticSceneSpec:
    count: int = 500
    n_identities: int = 10
    resolution: int = 224
    seed: int = 0
    shape_std: float = 1.0
    expr_std: float = 1.0
    jaw_max: float = 0.3
    yaw_max: float = 0.5
    pitch_max: float = 0.2
    scale_min: float = 0.65
    scale_max: float = 0.8
    shift_max: float = 0.08
    light_std: float = 0.3

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ValidationError(f"{field.name} must be finite")
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        if self.n_identities < 1:
            raise ValidationError("n_identities must be >= 1")
        if self.resolution < 16:
            raise ValidationError("resolution must be >= 16")
        for name in ("shape_std", "expr_std", "jaw_max", "yaw_max", "pitch_max"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.shift_max < 0 or self.light_std < 0:
            raise ValidationError("shift_max and light_std must be >= 0")
        if not 0 < self.scale_min <= self.scale_max:
            raise ValidationError("scale range must satisfy 0 < scale_min <= scale_max")

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "count": settings.SYNTH_DATA_COUNT,
            "n_identities": settings.SYNTH_DATA_IDENTITIES,
            "resolution": settings.RENDER_RESOLUTION,
            "seed": settings.SYNTH_DATA_SEED,
            "shape_std": settings.SYNTH_DATA_SHAPE_STD,
            "expr_std": settings.SYNTH_DATA_EXPR_STD,
            "jaw_max": settings.SYNTH_DATA_JAW_MAX,
            "yaw_max": settings.SYNTH_DATA_YAW_MAX,
            "pitch_max": settings.SYNTH_DATA_PITCH_MAX,
            "scale_min": settings.SYNTH_DATA_SCALE_MIN,
            "scale_max": settings.SYNTH_DATA_SCALE_MAX,
            "shift_max": settings.SYNTH_DATA_SHIFT_MAX,
            "light_std": settings.SYNTH_DATA_LIGHT_STD,
        }
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class Subject:
    beta: torch.Tensor
    albedo: torch.Tensor
    sh_coeffs: torch.Tensor


@dataclass(frozen=True)
class SyntheticDataset:
    directory: Path
    manifest: Path
    count: int
    rejected: int


def _uniform(generator, low, high, size=()):
    return low + (high - low) * torch.rand(size, generator=generator)


def _draw_subjects(spec, head_config, generator):
    subjects = []
    for _ in range(spec.n_identities):
        beta = torch.randn(head_config.n_shape, generator=generator) * spec.shape_std
        skin = _uniform(generator, 0.3, 0.85, (3,))
        speckle = torch.randn(head_config.n_vertices, 3, generator=generator) * 0.02
        albedo = (skin + speckle).clamp(0.0, 1.0)
        sh_coeffs = neutral_lighting(1)[0]
        sh_coeffs[1:4] += torch.randn(3, 1, generator=generator) * spec.light_std
        subjects.append(Subject(beta=beta, albedo=albedo, sh_coeffs=sh_coeffs))
    return subjects


def _draw_params(spec, head_config, subject, generator):
    psi = (torch.randn(head_config.n_expr, generator=generator) * spec.expr_std).clamp(
        -3.0, 3.0
    )
    jaw = torch.zeros(3)
    jaw[0] = _uniform(generator, 0.0, spec.jaw_max)
    eyes = torch.rand(2, generator=generator)
    pitch = _uniform(generator, -spec.pitch_max, spec.pitch_max)
    yaw = _uniform(generator, -spec.yaw_max, spec.yaw_max)
    scale = _uniform(generator, spec.scale_min, spec.scale_max)
    shift = _uniform(generator, -spec.shift_max, spec.shift_max, (2,))
    return HeadParams(
        beta=subject.beta[None].clone(),
        psi=psi[None],
        theta_j=jaw[None],
        eye_b=eyes[None],
        theta_h=torch.stack([pitch, yaw, torch.tensor(0.0)])[None],
        cam_c=torch.cat([scale.reshape(1), shift])[None],
    )


def _background(resolution, generator):
    top, bottom = torch.rand(2, 3, generator=generator)
    ramp = torch.linspace(0.0, 1.0, resolution)[:, None, None]
    rows = top * (1.0 - ramp) + bottom * ramp
    return rows.permute(2, 0, 1).expand(3, resolution, resolution)[None]


def render_sample(head_config, params, subject, background, resolution, generator, spec):
    sh_coeffs = subject.sh_coeffs + torch.randn(9, 3, generator=generator) * (
        0.1 * spec.light_std
    )
    sh_coeffs[0] = subject.sh_coeffs[0]
    shading = ShadingParams(albedo=subject.albedo[None], sh_coeffs=sh_coeffs[None])
    vertices = evaluate(head_config, params)
    bundle = rasterize(vertices, params, shading, resolution, image=background)
    landmarks = project_points(select_landmarks(head_config, vertices), params)
    return bundle.composite(), landmarks


def generate_synthetic(spec, head_config, out_dir):
    out_dir = Path(out_dir)
    generator = torch.Generator().manual_seed(spec.seed)
    subjects = _draw_subjects(spec, head_config, generator)

    rows, drawn, rejected = [], [], 0
    for index in range(spec.count):
        subject_id = index % spec.n_identities
        subject = subjects[subject_id]
        for _ in range(MAX_DRAWS):
            params = _draw_params(spec, head_config, subject, generator)
            background = _background(spec.resolution, generator)
            image, landmarks = render_sample(
                head_config, params, subject, background, spec.resolution, generator, spec
            )
            unit = ndc_to_unit(landmarks[0])
            if ((unit >= 0) & (unit <= 1)).all():
                break
            rejected += 1
            logger.warning("event=synthetic_draw_rejected sample=%s reason=out_of_frame", index)
        else:
            raise ValidationError(
                f"sampling ranges keep the face out of frame after {MAX_DRAWS} draws"
            )

        name = f"{index:05d}"
        write_image(out_dir / "images" / f"{name}.png", image)
        write_landmarks(out_dir / "landmarks" / f"{name}.txt", unit)
        rows.append(
            (
                f"images/{name}.png",
                f"landmarks/{name}.txt",
                f"subject{subject_id:03d}",
                index // spec.n_identities,
            )
        )
        drawn.append(params)

    manifest_path = write_manifest(out_dir / MANIFEST_NAME, rows)
    write_ground_truth(
        manifest_path, HeadParams.stack(drawn), {"spec": asdict(spec), "count": spec.count}
    )
    save_rig(out_dir / RIG_NAME, head_config)
    logger.info(
        "event=synthetic_generated path=%s count=%s identities=%s rejected=%s",
        out_dir,
        spec.count,
        spec.n_identities,
        rejected,
    )
    return SyntheticDataset(
        directory=out_dir, manifest=manifest_path, count=spec.count, rejected=rejected
    )
