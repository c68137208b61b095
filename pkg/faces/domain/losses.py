"""Training objectives and their weighted total.

Every term is a non-negative scalar tensor averaged over the batch. Landmark
terms work in NDC; image terms work on (B, 3, H, W) tensors in [0, 1].
"""

import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import torch
import torch.nn.functional as F
from django.conf import settings

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.head_model import N_LANDMARKS
from faces.domain.policies import validate_same_shape
from faces.integrations.landmarks import read_index_file

logger = logging.getLogger(__name__)

REQUIRED_TERMS = ("ec", "lmk", "tc", "pdl", "rg", "ic")
POSE_MASK_FILES = {"left": "left.txt", "right": "right.txt", "front": "front.txt"}


@dataclass(frozen=True)
class LossWeights:
    ec: float = 1.0
    lmk: float = 100.0
    tc: float = 5.0
    pdl: float = 500.0
    rg: float = 10.0
    ic: float = 10.0
    pho: float = 1.0
    per: float = 1.0

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"loss weight {field.name} must be finite and >= 0")

    @classmethod
    def from_settings(cls):
        return cls(
            ec=settings.LOSS_EC,
            lmk=settings.LOSS_LMK,
            tc=settings.LOSS_TC,
            pdl=settings.LOSS_PDL,
            rg=settings.LOSS_RG,
            ic=settings.LOSS_IC,
            pho=settings.LOSS_PHO,
            per=settings.LOSS_PER,
        )

    def scaled(self, factor):
        return LossWeights(
            **{field.name: getattr(self, field.name) * factor for field in fields(self)}
        )


@dataclass(frozen=True, eq=False)
class LossReport:
    terms: dict
    total: torch.Tensor

    def as_row(self):
        row = {name: float(value.detach()) for name, value in self.terms.items()}
        row["total"] = float(self.total.detach())
        return row


@dataclass(frozen=True, eq=False)
class PoseMasks:
    """Yaw-dependent landmark visibility masks, each a (203,) tensor of 0/1."""

    left: torch.Tensor
    right: torch.Tensor
    front: torch.Tensor
    epsilon: float = 0.05

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("pose mask epsilon must be > 0")
        for name in ("left", "right", "front"):
            mask = getattr(self, name)
            if tuple(mask.shape) != (N_LANDMARKS,):
                raise ValidationError(f"{name} mask must have {N_LANDMARKS} entries")
            if not ((mask == 0) | (mask == 1)).all():
                raise ValidationError(f"{name} mask must be binary")

    @classmethod
    def from_indices(cls, left, right, front, *, epsilon=0.05):
        def to_mask(indices):
            mask = torch.zeros(N_LANDMARKS)
            mask[list(indices)] = 1.0
            return mask

        return cls(
            left=to_mask(left), right=to_mask(right), front=to_mask(front), epsilon=epsilon
        )

    @classmethod
    def load(cls, directory=None, *, epsilon=None):
        directory = Path(directory or settings.POSE_MASK_DIR)
        indices = {
            name: read_index_file(directory / filename)
            for name, filename in POSE_MASK_FILES.items()
        }
        return cls.from_indices(
            **indices,
            epsilon=settings.POSE_MASK_EPSILON if epsilon is None else epsilon,
        )

    def stacked(self):
        return torch.stack([self.left, self.front, self.right])


def pose_mask_indicators(theta_y, epsilon):
    """One-hot (left, front, right) selection per yaw; the front interval is closed."""
    theta_y = torch.as_tensor(theta_y)
    if not theta_y.is_floating_point():
        theta_y = theta_y.double()
    bound = torch.tensor(epsilon, dtype=theta_y.dtype)
    left = theta_y < -bound
    right = theta_y > bound
    front = ~(left | right)
    return torch.stack([left, front, right], dim=-1).to(theta_y.dtype)


def pose_mask_select(theta_y, masks):
    indicators = pose_mask_indicators(theta_y, masks.epsilon)
    stacked = masks.stacked().to(dtype=indicators.dtype, device=indicators.device)
    return indicators @ stacked


def _as_landmark_batch(name, points):
    if points.dim() == 2:
        points = points[None]
    if points.dim() != 3 or tuple(points.shape[1:]) != (N_LANDMARKS, 2):
        raise ValidationError(
            f"{name} must hold {N_LANDMARKS} 2D landmarks, got {tuple(points.shape)}"
        )
    return points


def pdl_loss(detected, projected, theta_y, masks, *, normalize=False):
    detected = _as_landmark_batch("detected landmarks", detected)
    projected = _as_landmark_batch("projected landmarks", projected)
    validate_same_shape("detected landmarks", detected, "projected landmarks", projected)

    theta_y = torch.as_tensor(theta_y, dtype=projected.dtype).reshape(-1)
    mask = pose_mask_select(theta_y.detach(), masks).to(projected.dtype)
    if mask.shape[0] != projected.shape[0]:
        mask = mask.expand(projected.shape[0], -1)
    difference = (detected - projected) * mask[..., None]
    norms = torch.linalg.vector_norm(difference.flatten(1), dim=1)
    if normalize:
        norms = norms / torch.sqrt((2.0 * mask.sum(dim=1)).clamp(min=1.0))
    return norms.mean()


def region_loss(images, reconstructed, masks, *, normalize=False):
    validate_same_shape("image", images, "reconstruction", reconstructed)
    support = masks.union().to(images.dtype)
    if tuple(support.shape[-2:]) != tuple(images.shape[-2:]):
        raise ValidationError("region masks do not match image resolution")
    difference = (images - reconstructed) * support
    norms = torch.linalg.vector_norm(difference.flatten(1), dim=1)
    if normalize:
        count = support.flatten(1).sum(dim=1) * images.shape[1]
        norms = norms / torch.sqrt(count.clamp(min=1.0))
    return norms.mean()


def landmark_loss(detected, projected):
    validate_same_shape("detected landmarks", detected, "projected landmarks", projected)
    if detected.shape[-1] != 2:
        raise ValidationError("landmarks must be 2D points")
    return torch.linalg.vector_norm(detected - projected, ord=1, dim=-1).mean()


def _binomial_kernel(channels, dtype, device):
    taps = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0], dtype=dtype, device=device) / 16.0
    kernel = taps[:, None] * taps[None, :]
    return kernel.expand(channels, 1, 5, 5).contiguous()


def gaussian_pyramid(images, levels=4):
    """Blur-and-decimate pyramid; level 0 is the input itself."""
    kernel = _binomial_kernel(images.shape[1], images.dtype, images.device)
    features = [images]
    current = images
    for _ in range(levels - 1):
        if min(current.shape[-2:]) < 8:
            break
        blurred = F.conv2d(
            F.pad(current, (2, 2, 2, 2), mode="replicate"),
            kernel,
            groups=current.shape[1],
        )
        current = blurred[..., ::2, ::2]
        features.append(current)
    return features


def photometric_loss(images, reconstructed):
    validate_same_shape("image", images, "reconstruction", reconstructed)
    return (images - reconstructed).abs().mean()


def perceptual_loss(images, reconstructed, extractor=None):
    validate_same_shape("image", images, "reconstruction", reconstructed)
    extractor = extractor or gaussian_pyramid
    target_features = extractor(images)
    predicted_features = extractor(reconstructed)
    if len(target_features) != len(predicted_features):
        raise ConfigurationError("feature extractor returned mismatched level counts")
    per_level = [
        (target - predicted).abs().mean()
        for target, predicted in zip(target_features, predicted_features, strict=True)
    ]
    return torch.stack(per_level).mean()


def image_loss(images, reconstructed, weights=None, *, extractor=None):
    weights = weights or LossWeights()
    return weights.pho * photometric_loss(
        images, reconstructed
    ) + weights.per * perceptual_loss(images, reconstructed, extractor)


@dataclass(frozen=True, eq=False)
class AugmentedView:
    """A rendering of the input identity under an augmented expression."""

    params: object
    image: torch.Tensor


def _token_vector(token):
    return token.concat if hasattr(token, "concat") else token


def token_consistency_loss(token, views, tokenizer, *, squared=False):
    if len(views) == 0:
        raise ValidationError("token consistency needs at least one augmentation")
    target = _token_vector(token).detach()
    total = 0.0
    for view in views:
        retokenized = _token_vector(tokenizer(view.image))
        norms = torch.linalg.vector_norm(retokenized - target, dim=-1)
        total = total + (norms.square() if squared else norms).mean()
    return total


def expression_consistency_loss(views, expression_encoder, *, squared=False):
    if len(views) == 0:
        raise ValidationError("expression consistency needs at least one augmentation")
    total = 0.0
    for view in views:
        target = view.params.expression_vector().detach()
        predicted = expression_encoder(view.image)
        validate_same_shape("encoded expression", predicted, "augmented expression", target)
        norms = torch.linalg.vector_norm(predicted - target, dim=-1)
        total = total + (norms.square() if squared else norms).mean()
    return total


def total_loss(terms, weights=None):
    weights = weights or LossWeights()
    missing = [name for name in REQUIRED_TERMS if name not in terms]
    if missing:
        raise ValidationError(f"missing loss terms: {', '.join(missing)}")

    values = {}
    for name in REQUIRED_TERMS:
        value = torch.as_tensor(terms[name])
        if value.numel() != 1:
            raise ValidationError(f"loss term {name} must be a scalar")
        if not torch.isfinite(value).all() or float(value.detach()) < 0:
            raise ValidationError(f"loss term {name} must be finite and >= 0")
        values[name] = value.reshape(())

    total = sum(getattr(weights, name) * values[name] for name in REQUIRED_TERMS)
    return LossReport(terms=values, total=torch.as_tensor(total))
