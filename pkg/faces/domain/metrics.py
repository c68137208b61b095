"""Image, parameter and temporal metrics.

Images are (B, 3, H, W) tensors in [0, 1]; clips are (T, 3, H, W). All
reductions run in float64 in a fixed order.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy import linalg

from faces.domain.exceptions import FlowProviderError, ValidationError
from faces.domain.head_model import HeadParams
from faces.domain.policies import validate_same_shape

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
DISTANCES = ("l1", "l2")


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: torch.Tensor
    fps: float = 25.0

    def __post_init__(self):
        if self.frames.dim() != 4 or self.frames.shape[1] != 3:
            raise ValidationError("clip frames must be a (T, 3, H, W) tensor")
        if self.frames.shape[0] < 1:
            raise ValidationError("clip needs at least one frame")
        if self.fps <= 0:
            raise ValidationError("fps must be > 0")

    def __len__(self):
        return self.frames.shape[0]


def _batched(images):
    return images[None] if images.dim() == 3 else images


def psnr(images, reconstructed, *, peak=1.0):
    """Mean per-image PSNR in dB; identical images report ``PSNR_CAP``."""
    validate_same_shape("image", images, "reconstruction", reconstructed)
    images, reconstructed = _batched(images).double(), _batched(reconstructed).double()
    mse = (images - reconstructed).square().flatten(1).mean(dim=1)
    values = [
        PSNR_CAP if value == 0 else min(PSNR_CAP, 10.0 * math.log10(peak**2 / value))
        for value in mse.tolist()
    ]
    return sum(values) / len(values)


def parameter_distance(a, b, *, distance="l1"):
    if distance not in DISTANCES:
        raise ValidationError(f"distance must be one of {DISTANCES}")
    validate_same_shape("parameters", a, "reference", b)
    difference = (a.detach().double() - b.detach().double()).reshape(a.shape[0], -1)
    if distance == "l1":
        return float(difference.abs().mean())
    return float(torch.linalg.vector_norm(difference, dim=1).mean())


def aed(a, b, *, distance="l1"):
    """Average expression distance over ψ."""
    if isinstance(a, HeadParams):
        a, b = a.psi, b.psi
    return parameter_distance(a, b, distance=distance)


def apd(a, b, *, distance="l1"):
    """Average pose distance over camera and head rotation."""
    if isinstance(a, HeadParams):
        a, b = a.pose_vector(), b.pose_vector()
    return parameter_distance(a, b, distance=distance)


def landmark_error_px(detected, projected, resolution, mask=None):
    """Per-sample mean Euclidean landmark error in pixels, over masked-in points."""
    validate_same_shape("detected landmarks", detected, "projected landmarks", projected)
    distances = torch.linalg.vector_norm(
        (detected.detach() - projected.detach()).double(), dim=-1
    ) * (resolution / 2.0)
    if mask is None:
        return distances.mean(dim=-1)
    mask = mask.double().expand_as(distances)
    return (distances * mask).sum(dim=-1) / mask.sum(dim=-1).clamp(min=1.0)


def luma(frames):
    return frames.double().mean(dim=(1, 2, 3))


def flicker(clip):
    if len(clip) < 2:
        raise ValidationError("flicker needs at least two frames")
    return float(luma(clip.frames).diff().abs().mean())


def warp_frame(frame, flow):
    """Sample ``frame`` at ``p + flow(p)``; also return where that lands in frame."""
    _, height, width = frame.shape
    rows, cols = torch.meshgrid(
        torch.arange(height, dtype=torch.float64),
        torch.arange(width, dtype=torch.float64),
        indexing="ij",
    )
    source_x = cols + flow[0].double()
    source_y = rows + flow[1].double()
    valid = (source_x >= 0) & (source_x <= width - 1) & (source_y >= 0) & (
        source_y <= height - 1
    )
    grid = torch.stack(
        [
            source_x / max(width - 1, 1) * 2.0 - 1.0,
            source_y / max(height - 1, 1) * 2.0 - 1.0,
        ],
        dim=-1,
    )
    warped = F.grid_sample(
        frame[None].double(),
        grid[None],
        mode="bilinear",
        padding_mode="border",
        align_corners=True,
    )[0]
    return warped, valid


def warp_error(clip_in, clip_out, flow_provider):
    """Mean |out[t+1] - warp(out[t])| over pixels whose flow stays in frame.

    ``flow_provider(t, frame_t, frame_t1)`` returns the backward flow (2, H, W)
    in pixels measured on the input clip: pixel p of frame t+1 came from
    p + flow(p) in frame t.
    """
    if len(clip_in) != len(clip_out):
        raise ValidationError("input and output clips must have the same length")
    validate_same_shape("input clip", clip_in.frames, "output clip", clip_out.frames)
    if len(clip_in) < 2:
        raise ValidationError("warp error needs at least two frames")

    errors = []
    for t in range(len(clip_in) - 1):
        flow = flow_provider(t, clip_in.frames[t], clip_in.frames[t + 1])
        if flow is None:
            raise FlowProviderError(f"no optical flow for frames {t}->{t + 1}")
        if tuple(flow.shape) != (2, *clip_in.frames.shape[-2:]):
            raise FlowProviderError(f"flow for frames {t}->{t + 1} has the wrong shape")
        warped, valid = warp_frame(clip_out.frames[t], flow)
        if not valid.any():
            logger.warning("event=warp_pair_skipped pair=%s reason=no_valid_pixels", t)
            continue
        difference = (clip_out.frames[t + 1].double() - warped).abs().mean(dim=0)
        errors.append(float(difference[valid].mean()))

    if not errors:
        raise ValidationError("no frame pair has pixels inside the flow")
    return sum(errors) / len(errors)


def identity_similarity(embeddings_a, embeddings_b):
    """Mean cosine similarity of paired embeddings."""
    validate_same_shape("embeddings", embeddings_a, "reference embeddings", embeddings_b)
    return float(
        F.cosine_similarity(embeddings_a.double(), embeddings_b.double(), dim=1).mean()
    )


def frechet_distance(embeddings_a, embeddings_b):
    """Fréchet distance between Gaussians fitted to two embedding sets."""
    a = embeddings_a.detach().double().cpu().numpy()
    b = embeddings_b.detach().double().cpu().numpy()
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValidationError("embedding sets must be (N, D) with the same D")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValidationError("Fréchet distance needs at least two embeddings per set")

    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    sigma_a = np.atleast_2d(np.cov(a, rowvar=False))
    sigma_b = np.atleast_2d(np.cov(b, rowvar=False))
    covmean = linalg.sqrtm(sigma_a @ sigma_b)
    if not np.isfinite(covmean).all():
        offset = np.eye(sigma_a.shape[0]) * 1e-6
        covmean = linalg.sqrtm((sigma_a + offset) @ (sigma_b + offset))
    covmean = np.real(covmean)
    distance = np.sum((mu_a - mu_b) ** 2) + np.trace(sigma_a + sigma_b - 2.0 * covmean)
    return float(max(distance, 0.0))
