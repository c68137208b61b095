import hashlib

from torch import nn
from torch.nn import functional as F

from faces.domain.exceptions import ValidationError
from faces.domain.policies import validate_image_batch


class ConvBackbone(nn.Module):
    """Stack of stride-2 stages; ``forward`` returns every stage's feature map."""

    def __init__(self, channels, in_channels=3):
        super().__init__()
        stages = []
        previous = in_channels
        for width in channels:
            stages.append(
                nn.Sequential(
                    nn.Conv2d(previous, width, 3, stride=2, padding=1),
                    nn.LeakyReLU(0.2),
                    nn.Conv2d(width, width, 3, padding=1),
                    nn.LeakyReLU(0.2),
                )
            )
            previous = width
        self.stages = nn.ModuleList(stages)
        self.channels = tuple(channels)

    def forward(self, images):
        features = []
        current = images
        for stage in self.stages:
            current = stage(current)
            features.append(current)
        return features


def prepare_images(images, resolution, *, resize=False):
    validate_image_batch("image", images)
    if tuple(images.shape[-2:]) == (resolution, resolution):
        return images
    if not resize:
        raise ValidationError(
            f"image resolution {tuple(images.shape[-2:])} does not match "
            f"configured {resolution}x{resolution}"
        )
    return F.interpolate(
        images, size=(resolution, resolution), mode="bilinear", align_corners=False
    )


def set_requires_grad(modules, flag):
    for module in modules:
        for parameter in module.parameters():
            parameter.requires_grad_(flag)


def module_digest(module):
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def architecture_digest(module):
    """Hash of parameter names and shapes; weights do not enter it."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(f"{name}:{tuple(tensor.shape)}:{tensor.dtype};".encode("utf-8"))
    return digest.hexdigest()


def zero_module(module):
    for parameter in module.parameters():
        nn.init.zeros_(parameter)
    return module
