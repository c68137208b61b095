"""PNG import/export. Writing quantizes to 8 bits per channel, so it is lossy."""

from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from faces.domain.exceptions import DataIOError, ValidationError


def read_image(path, *, resolution=None):
    """Load an RGB image as a (3, H, W) float tensor in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as image:
            image = image.convert("RGB")
            if resolution is not None and image.size != (resolution, resolution):
                image = image.resize((resolution, resolution), Image.Resampling.BILINEAR)
            pixels = np.asarray(image, dtype=np.float32) / 255.0
    except FileNotFoundError as exc:
        raise DataIOError(f"image {path} does not exist") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise DataIOError(f"cannot read image {path}: {exc}") from exc
    return torch.from_numpy(pixels.copy()).permute(2, 0, 1).contiguous()


def to_uint8(image):
    if image.dim() == 4:
        if image.shape[0] != 1:
            raise ValidationError("write one image at a time")
        image = image[0]
    if image.dim() != 3 or image.shape[0] != 3:
        raise ValidationError("image must be a (3, H, W) tensor")
    pixels = image.detach().cpu().clamp(0.0, 1.0).permute(1, 2, 0).numpy()
    return np.round(pixels * 255.0).astype(np.uint8)


def write_image(path, image):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")
    return path
