"""Z-buffered triangle rasterizer with order-2 spherical-harmonics shading.

Visibility (which triangle owns each pixel) is resolved without gradients;
colour and depth are then re-interpolated with barycentric weights that stay
differentiable in the projected vertex positions. Gradients therefore exist
for covered pixels only; silhouettes do not move under gradient descent and
pose is driven by the landmark terms.
"""

import logging
from dataclasses import dataclass

import torch

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.head_model import project
from faces.domain.policies import validate_same_shape

logger = logging.getLogger(__name__)

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = 1.0925484305920792
SH_C3 = 0.31539156525252005
SH_C4 = 0.5462742152960396

NEUTRAL_ALBEDO = 0.5
MIN_RESOLUTION = 16


@dataclass(frozen=True, eq=False)
class ShadingParams:
    albedo: torch.Tensor
    sh_coeffs: torch.Tensor

    def __post_init__(self):
        if self.albedo.shape[-1] != 3:
            raise ValidationError("albedo must have 3 channels per vertex")
        if tuple(self.sh_coeffs.shape[-2:]) != (9, 3):
            raise ValidationError("sh_coeffs must have shape (..., 9, 3)")
        if (self.albedo < 0).any() or (self.albedo > 1).any():
            raise ValidationError("albedo must be in [0, 1]")

    @classmethod
    def neutral(cls, n_vertices, batch_size=1, dtype=torch.float32):
        albedo = torch.full((batch_size, n_vertices, 3), NEUTRAL_ALBEDO, dtype=dtype)
        return cls(albedo=albedo, sh_coeffs=neutral_lighting(batch_size, dtype))


@dataclass(frozen=True, eq=False)
class RenderBundle:
    mesh_image: torch.Tensor
    face_mask: torch.Tensor
    depth: torch.Tensor
    face_index: torch.Tensor
    background: torch.Tensor | None = None
    degenerate_triangles: int = 0

    def composite(self):
        if self.background is None:
            raise ValidationError("bundle was rendered without an input image")
        return self.mesh_image * self.face_mask + self.background


def neutral_lighting(batch_size=1, dtype=torch.float32):
    sh = torch.zeros(batch_size, 9, 3, dtype=dtype)
    sh[:, 0, :] = 1.0 / SH_C0
    return sh


def sh_basis(normals):
    x, y, z = normals.unbind(dim=-1)
    return torch.stack(
        [
            torch.full_like(x, SH_C0),
            SH_C1 * y,
            SH_C1 * z,
            SH_C1 * x,
            SH_C2 * x * y,
            SH_C2 * y * z,
            SH_C3 * (3.0 * z * z - 1.0),
            SH_C2 * x * z,
            SH_C4 * (x * x - y * y),
        ],
        dim=-1,
    )


def shade_sh(normals, albedo, sh_coeffs):
    irradiance = torch.einsum("...vk,...kc->...vc", sh_basis(normals), sh_coeffs)
    return (albedo * irradiance).clamp(0.0, 1.0)


def mask_background(image, face_mask):
    if image.dim() != 4 or face_mask.dim() != 4:
        raise ValidationError("image and face_mask must be (B, C, H, W) tensors")
    if face_mask.shape[1] != 1:
        raise ValidationError("face_mask must have a single channel")
    validate_same_shape("image", image[:, :1], "face_mask", face_mask)
    return image * (1.0 - face_mask)


def pixel_centers_ndc(rows, cols, resolution, dtype):
    x = (cols.to(dtype) + 0.5) / resolution * 2.0 - 1.0
    y = 1.0 - (rows.to(dtype) + 0.5) / resolution * 2.0
    return torch.stack([x, y], dim=-1)


def barycentric(points, corners):
    a, b, c = corners.unbind(dim=-2)
    v0 = b - a
    v1 = c - a
    v2 = points - a
    denom = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
    l1 = (v2[..., 0] * v1[..., 1] - v1[..., 0] * v2[..., 1]) / denom
    l2 = (v0[..., 0] * v2[..., 1] - v2[..., 0] * v0[..., 1]) / denom
    return torch.stack([1.0 - l1 - l2, l1, l2], dim=-1)


@torch.no_grad()
def _resolve_visibility(ndc, depth, triangles, resolution, cull_backfaces):
    batch_size, n_triangles = ndc.shape[0], triangles.shape[0]
    corners = ndc[:, triangles]
    a, b, c = corners.unbind(dim=-2)
    area = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
        c[..., 0] - a[..., 0]
    ) * (b[..., 1] - a[..., 1])
    degenerate = area.abs() < 1e-12
    usable = ~degenerate
    if cull_backfaces:
        usable &= area > 0

    cols = (corners[..., 0] + 1.0) * 0.5 * resolution - 0.5
    rows = (1.0 - corners[..., 1]) * 0.5 * resolution - 0.5
    col_lo = torch.ceil(cols.min(dim=-1).values).clamp(min=0).long()
    col_hi = torch.floor(cols.max(dim=-1).values).clamp(max=resolution - 1).long()
    row_lo = torch.ceil(rows.min(dim=-1).values).clamp(min=0).long()
    row_hi = torch.floor(rows.max(dim=-1).values).clamp(max=resolution - 1).long()
    widths = (col_hi - col_lo + 1).clamp(min=0)
    heights = (row_hi - row_lo + 1).clamp(min=0)
    counts = (widths * heights * usable).flatten()

    face_index = torch.full(
        (batch_size, resolution, resolution), -1, dtype=torch.long, device=ndc.device
    )
    total = int(counts.sum())
    if total == 0:
        return face_index, int(degenerate.sum())

    flat_ids = torch.repeat_interleave(torch.arange(counts.numel(), device=ndc.device), counts)
    starts = torch.cumsum(counts, dim=0) - counts
    local = torch.arange(total, device=ndc.device) - starts[flat_ids]
    span = widths.flatten()[flat_ids]
    pixel_cols = col_lo.flatten()[flat_ids] + local % span
    pixel_rows = row_lo.flatten()[flat_ids] + local // span
    batch_ids = flat_ids // n_triangles
    tri_ids = flat_ids % n_triangles

    points = pixel_centers_ndc(pixel_rows, pixel_cols, resolution, ndc.dtype)
    weights = barycentric(points, corners.reshape(-1, 3, 2)[flat_ids])
    inside = (weights >= -1e-7).all(dim=-1)
    corner_depth = depth[batch_ids[:, None], triangles[tri_ids]]
    fragment_depth = (weights * corner_depth).sum(dim=-1)

    keys = (batch_ids * resolution + pixel_rows) * resolution + pixel_cols
    keys, fragment_depth, tri_ids = keys[inside], fragment_depth[inside], tri_ids[inside]
    n_pixels = batch_size * resolution * resolution
    zbuffer = torch.full((n_pixels,), float("inf"), dtype=ndc.dtype, device=ndc.device)
    zbuffer = zbuffer.scatter_reduce(0, keys, fragment_depth, reduce="amin")

    nearest = fragment_depth <= zbuffer[keys]
    sentinel = n_triangles
    owner = torch.full((n_pixels,), sentinel, dtype=torch.long, device=ndc.device)
    # ties on shared edges go to the lowest triangle index
    owner = owner.scatter_reduce(0, keys[nearest], tri_ids[nearest], reduce="amin")
    face_index = torch.where(owner == sentinel, -1, owner).reshape(
        batch_size, resolution, resolution
    )
    return face_index, int(degenerate.sum())


def rasterize(
    vertices,
    params,
    shading,
    resolution,
    *,
    image=None,
    cull_backfaces=False,
):
    if resolution < MIN_RESOLUTION:
        raise ValidationError(f"resolution must be >= {MIN_RESOLUTION}")
    if vertices.triangles is None:
        raise ConfigurationError("vertex set carries no triangle list")

    triangles = vertices.triangles
    positions = vertices.positions
    batch_size = positions.shape[0]
    dtype = positions.dtype
    ndc = project(vertices, params)
    depth = -positions[..., 2]
    colors = shade_sh(vertices.normals, shading.albedo, shading.sh_coeffs)
    if colors.dim() == 2:
        colors = colors.expand(batch_size, -1, -1)

    face_index, degenerate = _resolve_visibility(
        ndc.detach(), depth.detach(), triangles, resolution, cull_backfaces
    )
    if degenerate:
        logger.debug("event=render_degenerate_triangles count=%s", degenerate)

    batch_ids, rows, cols = torch.nonzero(face_index >= 0, as_tuple=True)
    corners = triangles[face_index[batch_ids, rows, cols]]
    points = pixel_centers_ndc(rows, cols, resolution, dtype)
    weights = barycentric(points, ndc[batch_ids[:, None], corners])
    pixel_colors = (weights[..., None] * colors[batch_ids[:, None], corners]).sum(dim=1)
    pixel_depth = (weights * depth[batch_ids[:, None], corners]).sum(dim=1)

    canvas = torch.zeros(batch_size, resolution, resolution, 3, dtype=dtype, device=positions.device)
    mesh_image = canvas.index_put((batch_ids, rows, cols), pixel_colors)
    depth_map = canvas[..., 0].index_put((batch_ids, rows, cols), pixel_depth)
    face_mask = (face_index >= 0).to(dtype)[:, None]

    bundle_background = None
    if image is not None:
        if tuple(image.shape[-2:]) != (resolution, resolution):
            raise ValidationError("image resolution does not match render resolution")
        bundle_background = mask_background(image, face_mask)

    return RenderBundle(
        mesh_image=mesh_image.permute(0, 3, 1, 2),
        face_mask=face_mask,
        depth=depth_map[:, None],
        face_index=face_index,
        background=bundle_background,
        degenerate_triangles=degenerate,
    )


def overlay(image, bundle, alpha=0.5):
    blend = (1.0 - alpha) * image + alpha * bundle.mesh_image
    return image * (1.0 - bundle.face_mask) + blend * bundle.face_mask
