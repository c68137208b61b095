"""Token-guided UNet synthesizer.

The encoder ingests the rendered mesh and the masked background as six
channels. Each generator block upsamples, merges its skip connection, is
modulated by AdaIN parameters predicted from one sub-token, then receives
the zero-convolution residual of the matching token-decoder level.
"""

import logging
from dataclasses import dataclass

import torch
from django.conf import settings
from torch import nn
from torch.nn import functional as F

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.policies import validate_image_batch, validate_same_shape
from faces.networks.common import zero_module

logger = logging.getLogger(__name__)

ADAIN_EPS = 1e-6
# softplus(0.5413) == 1, so a zero MLP output predicts unit scale
SIGMA_OFFSET = 0.5413248546129181
TOKEN_ORDERS = ("mirror", "sequential")
SEED_SIZE = 4


@dataclass(frozen=True)
class SynthesizerConfig:
    n_blocks: int = 4
    base_channels: int = 16
    adain_hidden: int = 128
    token_dim: int = 256
    use_token_decoder: bool = True
    token_order: str = "mirror"
    resolution: int = 224

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigurationError("synthesizer needs at least one block")
        if self.token_order not in TOKEN_ORDERS:
            raise ConfigurationError(f"token_order must be one of {TOKEN_ORDERS}")
        if self.resolution % (2**self.n_blocks):
            raise ConfigurationError(
                f"resolution {self.resolution} is not divisible by 2**{self.n_blocks}"
            )

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "n_blocks": settings.SYNTH_BLOCKS,
            "base_channels": settings.SYNTH_BASE_CHANNELS,
            "adain_hidden": settings.SYNTH_ADAIN_HIDDEN,
            "token_dim": settings.TOKEN_DIM,
            "use_token_decoder": settings.SYNTH_TOKEN_DECODER,
            "token_order": settings.SYNTH_TOKEN_ORDER,
            "resolution": settings.RENDER_RESOLUTION,
        }
        values.update(overrides)
        return cls(**values)

    @property
    def token_decoder_levels(self):
        return self.n_blocks

    def encoder_width(self, level):
        return self.base_channels * 2**level

    def generator_width(self, block):
        return self.encoder_width(self.n_blocks - 1 - block)

    def generator_size(self, block):
        return self.resolution // 2 ** (self.n_blocks - 1 - block)

    def token_index(self, block):
        if self.token_order == "mirror":
            return self.n_blocks - 1 - block
        return block


def adain_modulate(features, mu, sigma, eps=ADAIN_EPS):
    """Instance-normalize each channel, then scale by ``sigma`` and shift by ``mu``."""
    batch_size, channels = features.shape[:2]
    if tuple(mu.shape) != (batch_size, channels) or tuple(sigma.shape) != (
        batch_size,
        channels,
    ):
        raise ConfigurationError(
            f"AdaIN parameters must have shape ({batch_size}, {channels}), "
            f"got {tuple(mu.shape)} and {tuple(sigma.shape)}"
        )
    mean = features.mean(dim=(2, 3), keepdim=True)
    var = features.var(dim=(2, 3), keepdim=True, unbiased=False)
    normalized = (features - mean) / torch.sqrt(var + eps)
    return normalized * sigma[:, :, None, None] + mu[:, :, None, None]


class AdaINParams(nn.Module):
    """MLP mapping one sub-token to per-channel (mu, sigma)."""

    def __init__(self, token_dim, hidden, channels):
        super().__init__()
        self.channels = channels
        self.mlp = nn.Sequential(
            nn.Linear(token_dim, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, 2 * channels),
        )

    def forward(self, sub_token):
        out = self.mlp(sub_token)
        mu = out[:, : self.channels]
        sigma = F.softplus(out[:, self.channels :] + SIGMA_OFFSET)
        return mu, sigma


def _conv_block(in_channels, out_channels, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1),
        nn.LeakyReLU(0.2),
        nn.Conv2d(out_channels, out_channels, 3, padding=1),
        nn.LeakyReLU(0.2),
    )


class GeneratorBlock(nn.Module):
    def __init__(self, in_channels, skip_channels, out_channels, token_dim, hidden):
        super().__init__()
        self.merge = nn.Sequential(
            nn.Conv2d(in_channels + skip_channels, out_channels, 3, padding=1),
            nn.LeakyReLU(0.2),
        )
        self.conv = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.adain = AdaINParams(token_dim, hidden, out_channels)

    def forward(self, x, skip, sub_token, residual=None):
        x = F.interpolate(x, size=skip.shape[-2:], mode="nearest")
        x = self.conv(self.merge(torch.cat([x, skip], dim=1)))
        mu, sigma = self.adain(sub_token)
        x = adain_modulate(x, mu, sigma)
        if residual is not None:
            x = x + residual
        return F.leaky_relu(x, 0.2)


class TokenDecoder(nn.Module):
    """Expands the full token into one zero-convolved residual map per level."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        first = config.generator_width(0)
        self.seed = nn.Linear(config.n_blocks * config.token_dim, first * SEED_SIZE**2)
        levels, zero_convs = [], []
        previous = first
        for block in range(config.n_blocks):
            width = config.generator_width(block)
            levels.append(
                nn.Sequential(nn.Conv2d(previous, width, 3, padding=1), nn.LeakyReLU(0.2))
            )
            zero_convs.append(zero_module(nn.Conv2d(width, width, 1)))
            previous = width
        self.levels = nn.ModuleList(levels)
        self.zero_convs = nn.ModuleList(zero_convs)

    def forward(self, token):
        config = self.config
        hidden = self.seed(token.concat).reshape(
            token.batch_size, config.generator_width(0), SEED_SIZE, SEED_SIZE
        )
        residuals = []
        for block, (level, zero_conv) in enumerate(
            zip(self.levels, self.zero_convs, strict=True)
        ):
            size = config.generator_size(block)
            hidden = level(
                F.interpolate(hidden, size=(size, size), mode="bilinear", align_corners=False)
            )
            residuals.append(zero_conv(hidden))
        return residuals


class FaceSynthesizer(nn.Module):
    def __init__(self, config=None):
        super().__init__()
        self.config = config or SynthesizerConfig.from_settings()
        config = self.config
        self.stem = nn.Sequential(
            nn.Conv2d(6, config.base_channels, 3, padding=1), nn.LeakyReLU(0.2)
        )
        self.down = nn.ModuleList(
            _conv_block(config.encoder_width(level), config.encoder_width(level + 1), 2)
            for level in range(config.n_blocks)
        )
        bottom = config.encoder_width(config.n_blocks)
        self.bottleneck = nn.Sequential(
            nn.Conv2d(bottom, bottom, 3, padding=1), nn.LeakyReLU(0.2)
        )
        blocks = []
        previous = bottom
        for block in range(config.n_blocks):
            width = config.generator_width(block)
            blocks.append(
                GeneratorBlock(previous, width, width, config.token_dim, config.adain_hidden)
            )
            previous = width
        self.generator = nn.ModuleList(blocks)
        self.token_decoder = TokenDecoder(config) if config.use_token_decoder else None
        self.to_rgb = nn.Conv2d(config.base_channels, 3, 1)

    def _validate(self, mesh_image, background, token):
        validate_image_batch("mesh image", mesh_image, resolution=self.config.resolution)
        validate_same_shape("mesh image", mesh_image, "background", background)
        if token.n_scales != self.config.n_blocks:
            raise ValidationError(
                f"token has {token.n_scales} sub-tokens, synthesizer expects "
                f"{self.config.n_blocks}"
            )
        if token.token_dim != self.config.token_dim:
            raise ValidationError(
                f"sub-token width {token.token_dim} does not match {self.config.token_dim}"
            )
        if token.batch_size != mesh_image.shape[0]:
            raise ValidationError("token batch does not match image batch")

    def token_decode(self, token):
        if self.token_decoder is None:
            raise ConfigurationError("this synthesizer was built without a token decoder")
        return self.token_decoder(token)

    def forward(self, mesh_image, background, token, *, use_token_decoder=True):
        self._validate(mesh_image, background, token)
        skips = [self.stem(torch.cat([mesh_image, background], dim=1))]
        for down in self.down:
            skips.append(down(skips[-1]))
        x = self.bottleneck(skips.pop())

        residuals = None
        if use_token_decoder and self.token_decoder is not None:
            residuals = self.token_decoder(token)

        for block, generator_block in enumerate(self.generator):
            skip = skips[self.config.n_blocks - 1 - block]
            sub_token = token.sub_tokens[self.config.token_index(block)]
            residual = None if residuals is None else residuals[block]
            x = generator_block(x, skip, sub_token, residual)
        return torch.sigmoid(self.to_rgb(x))


def synthesize(synthesizer, mesh_image, background, token, *, use_token_decoder=True):
    return synthesizer(mesh_image, background, token, use_token_decoder=use_token_decoder)
