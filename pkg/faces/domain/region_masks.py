import logging
from dataclasses import dataclass

import numpy as np
import torch
from scipy.spatial import ConvexHull, QhullError

from faces.domain.exceptions import ValidationError
from faces.domain.head_model import LANDMARK_GROUPS, N_LANDMARKS, ndc_to_pixels

logger = logging.getLogger(__name__)

REFERENCE_RESOLUTION = 224
MOUTH_GROUPS = ("mouth_outer", "mouth_inner")
EYE_GROUPS = (("eye_left",), ("eye_right",))


@dataclass(frozen=True, eq=False)
class RegionMasks:
    """Mouth and eye masks, each (B, 1, H, W) with values in {0, 1}."""

    mouth: torch.Tensor
    eyes: torch.Tensor

    def union(self):
        return (self.mouth + self.eyes).clamp(max=1.0)


def dilation_radius(resolution, base_px):
    return round(base_px * resolution / REFERENCE_RESOLUTION)


def _hull_mask(points, resolution, radius):
    mask = np.zeros((resolution, resolution), dtype=np.float32)
    try:
        hull = ConvexHull(points)
    except QhullError:
        logger.warning("event=region_hull_degenerate n_points=%s", len(points))
        return mask

    lo = np.floor(points.min(axis=0) - radius).astype(int).clip(0, resolution - 1)
    hi = np.ceil(points.max(axis=0) + radius).astype(int).clip(0, resolution - 1)
    cols, rows = np.meshgrid(
        np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="xy"
    )
    centers = np.stack([cols.ravel(), rows.ravel()], axis=1).astype(np.float64)
    # hull.equations rows are unit outward normals n with offset d: n.p + d <= 0 inside
    distances = centers @ hull.equations[:, :2].T + hull.equations[:, 2]
    inside = (distances <= radius + 1e-9).all(axis=1)
    mask[rows.ravel()[inside], cols.ravel()[inside]] = 1.0
    return mask


def _group_points(pixels, groups):
    indices = [index for name in groups for index in LANDMARK_GROUPS[name]]
    return pixels[indices]


def build_region_masks(landmarks, resolution, *, radius_px=2):
    """Filled convex hulls of the mouth and eye landmarks, grown by a pixel radius.

    ``landmarks`` are NDC points of shape (B, 203, 2) or (203, 2); the radius is
    given at 224 px and scaled to ``resolution``.
    """
    if landmarks.dim() == 2:
        landmarks = landmarks[None]
    if tuple(landmarks.shape[1:]) != (N_LANDMARKS, 2):
        raise ValidationError(f"landmarks must have shape (B, {N_LANDMARKS}, 2)")

    radius = dilation_radius(resolution, radius_px)
    pixels = ndc_to_pixels(landmarks.detach().cpu().double(), resolution).numpy()
    mouths, eyes = [], []
    for sample in pixels:
        mouths.append(_hull_mask(_group_points(sample, MOUTH_GROUPS), resolution, radius))
        eye_mask = np.zeros((resolution, resolution), dtype=np.float32)
        for groups in EYE_GROUPS:
            eye_mask = np.maximum(
                eye_mask, _hull_mask(_group_points(sample, groups), resolution, radius)
            )
        eyes.append(eye_mask)

    device, dtype = landmarks.device, landmarks.dtype
    return RegionMasks(
        mouth=torch.from_numpy(np.stack(mouths))[:, None].to(device=device, dtype=dtype),
        eyes=torch.from_numpy(np.stack(eyes))[:, None].to(device=device, dtype=dtype),
    )
