import torch

from faces.domain.exceptions import ValidationError


def validate_finite(name, tensor):
    if not torch.is_tensor(tensor):
        raise ValidationError(f"{name} must be a tensor")
    if not torch.isfinite(tensor).all():
        raise ValidationError(f"{name} must contain only finite values")
    return tensor


def validate_positive(name, value):
    if torch.is_tensor(value):
        if not (value > 0).all():
            raise ValidationError(f"{name} must be greater than zero")
        return value
    if isinstance(value, bool) or value is None or value <= 0:
        raise ValidationError(f"{name} must be greater than zero")
    return value


def validate_same_shape(name_a, a, name_b, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ValidationError(
            f"{name_a} shape {tuple(a.shape)} does not match "
            f"{name_b} shape {tuple(b.shape)}"
        )
    return a, b


def validate_image_batch(name, images, *, resolution=None):
    if not torch.is_tensor(images) or images.dim() != 4 or images.shape[1] != 3:
        raise ValidationError(f"{name} must be a (B, 3, H, W) tensor")
    if resolution is not None and tuple(images.shape[-2:]) != (
        resolution,
        resolution,
    ):
        raise ValidationError(
            f"{name} resolution {tuple(images.shape[-2:])} does not match "
            f"configured {resolution}x{resolution}"
        )
    return images


def validate_count(name, value, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name} must be an integer")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}")
    return value


def validate_unit_interval(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1]")
    return value
