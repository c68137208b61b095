import math
from dataclasses import dataclass, fields

import torch
from django.conf import settings

from faces.domain.exceptions import ValidationError

PROBABILITIES = ("jitter_prob", "jitter_fraction", "jaw_prob", "zero_prob", "swap_prob")


@dataclass(frozen=True)
class AugmentationSpec:
    jitter_prob: float = 0.7
    jitter_fraction: float = 0.3
    jitter_scale: float = 0.5
    jaw_prob: float = 0.5
    jaw_range: float = 0.15
    zero_prob: float = 0.1
    swap_prob: float = 0.1
    expr_bound: float = 3.0
    jaw_bound: float = 0.5

    def __post_init__(self):
        for field in fields(self):
            if not math.isfinite(getattr(self, field.name)):
                raise ValidationError(f"augmentation {field.name} must be finite")
        for name in PROBABILITIES:
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"augmentation {name} must be in [0, 1]")
        if self.jitter_scale < 0 or self.jaw_range < 0:
            raise ValidationError("augmentation scales must be >= 0")
        if self.expr_bound <= 0 or self.jaw_bound <= 0:
            raise ValidationError("augmentation bounds must be > 0")

    @classmethod
    def from_settings(cls):
        return cls(
            jitter_prob=settings.AUG_JITTER_PROB,
            jitter_fraction=settings.AUG_JITTER_FRACTION,
            jitter_scale=settings.AUG_JITTER_SCALE,
            jaw_prob=settings.AUG_JAW_PROB,
            jaw_range=settings.AUG_JAW_RANGE,
            zero_prob=settings.AUG_ZERO_PROB,
            swap_prob=settings.AUG_SWAP_PROB,
            expr_bound=settings.AUG_EXPR_BOUND,
            jaw_bound=settings.AUG_JAW_BOUND,
        )

    @classmethod
    def disabled(cls):
        return cls(jitter_prob=0.0, jaw_prob=0.0, zero_prob=0.0, swap_prob=0.0)


def augment_expression(params, spec, generator):
    """Randomly perturb the joint expression (ψ, θ_j, b) of every batch item.

    Branches run in a fixed order (jitter, jaw, zeroing, swap) and all random
    numbers are drawn unconditionally, so the result depends only on the
    generator state. Shape, pose and camera are returned untouched.
    """
    psi = params.psi.detach()
    jaw = params.theta_j.detach()
    eyes = params.eye_b.detach()
    batch_size, n_expr = psi.shape
    options = {"generator": generator, "dtype": psi.dtype}

    jitter_rows = torch.rand(batch_size, **options) < spec.jitter_prob
    jitter_coefficients = torch.rand(batch_size, n_expr, **options) < spec.jitter_fraction
    noise = torch.randn(batch_size, n_expr, **options) * spec.jitter_scale
    jaw_rows = torch.rand(batch_size, **options) < spec.jaw_prob
    jaw_offset = (torch.rand(batch_size, **options) * 2.0 - 1.0) * spec.jaw_range
    zero_rows = torch.rand(batch_size, **options) < spec.zero_prob
    swap_rows = torch.rand(batch_size, **options) < spec.swap_prob
    partners = torch.randperm(batch_size, generator=generator)

    jittered = jitter_rows[:, None] & jitter_coefficients
    psi_aug = torch.where(
        jittered, (psi + noise).clamp(-spec.expr_bound, spec.expr_bound), psi
    )

    opened = (jaw[:, 0] + jaw_offset).clamp(-spec.jaw_bound, spec.jaw_bound)
    jaw_aug = jaw.clone()
    jaw_aug[:, 0] = torch.where(jaw_rows, opened, jaw[:, 0])

    psi_aug = torch.where(zero_rows[:, None], torch.zeros_like(psi_aug), psi_aug)

    eyes_aug = eyes
    if batch_size > 1:
        swap = swap_rows[:, None]
        psi_aug = torch.where(swap, psi[partners], psi_aug)
        jaw_aug = torch.where(swap, jaw[partners], jaw_aug)
        eyes_aug = torch.where(swap, eyes[partners], eyes)

    return params.replace(psi=psi_aug, theta_j=jaw_aug, eye_b=eyes_aug)
