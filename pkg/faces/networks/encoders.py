"""Appearance tokenizer and the three geometry encoders.

The tokenizer pools every backbone stage and projects it to one sub-token;
the geometry encoders each own a backbone and a linear head for one
parameter group (shape, expression, pose).
"""

import logging
import math
from dataclasses import dataclass

import torch
from django.conf import settings
from torch import nn
from torch.nn import functional as F

from faces.domain.exceptions import ConfigurationError, ValidationError
from faces.domain.head_model import HeadParams
from faces.networks.common import ConvBackbone, prepare_images

logger = logging.getLogger(__name__)

CAMERA_SCALE_PRIOR = 0.7
CAMERA_SCALE_FLOOR = 1e-3
HEAD_INIT_STD = 1e-3


@dataclass(frozen=True)
class TokenizerConfig:
    n_scales: int = 4
    token_dim: int = 256
    channels: tuple = (16, 32, 64, 128)
    resolution: int = 224
    multi_scale: bool = True
    projection_bias: bool = True
    zero_init_projections: bool = False
    resize_input: bool = False

    def __post_init__(self):
        if self.n_scales < 1 or self.token_dim < 1:
            raise ConfigurationError("tokenizer needs n_scales >= 1 and token_dim >= 1")
        if len(self.channels) != self.n_scales:
            raise ConfigurationError("tokenizer needs one backbone width per scale")

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "n_scales": settings.TOKEN_SCALES,
            "token_dim": settings.TOKEN_DIM,
            "channels": tuple(settings.BACKBONE_CHANNELS),
            "resolution": settings.RENDER_RESOLUTION,
            "multi_scale": settings.TOKEN_MULTI_SCALE,
        }
        values.update(overrides)
        return cls(**values)

    @property
    def concat_dim(self):
        return self.n_scales * self.token_dim


@dataclass(frozen=True, eq=False)
class AppearanceToken:
    """Ordered sub-tokens z_1..z_K (shallow to deep), each of shape (B, d)."""

    sub_tokens: tuple

    def __post_init__(self):
        if len(self.sub_tokens) == 0:
            raise ValidationError("an appearance token needs at least one sub-token")
        shape = tuple(self.sub_tokens[0].shape)
        if len(shape) != 2 or any(tuple(z.shape) != shape for z in self.sub_tokens):
            raise ValidationError("sub-tokens must all have shape (B, d)")

    @property
    def n_scales(self):
        return len(self.sub_tokens)

    @property
    def token_dim(self):
        return self.sub_tokens[0].shape[1]

    @property
    def batch_size(self):
        return self.sub_tokens[0].shape[0]

    @property
    def concat(self):
        return torch.cat(self.sub_tokens, dim=1)

    @classmethod
    def from_concat(cls, vector, n_scales):
        if vector.dim() == 1:
            vector = vector[None]
        if vector.shape[1] % n_scales:
            raise ValidationError(
                f"token length {vector.shape[1]} is not divisible by {n_scales} scales"
            )
        return cls(sub_tokens=tuple(vector.chunk(n_scales, dim=1)))

    def detach(self):
        return AppearanceToken(sub_tokens=tuple(z.detach() for z in self.sub_tokens))

    def select(self, index):
        return AppearanceToken(sub_tokens=tuple(z[index] for z in self.sub_tokens))

    @classmethod
    def stack(cls, tokens):
        return cls(
            sub_tokens=tuple(
                torch.cat([token.sub_tokens[i] for token in tokens], dim=0)
                for i in range(tokens[0].n_scales)
            )
        )


class AppearanceTokenizer(nn.Module):
    def __init__(self, config=None):
        super().__init__()
        self.config = config or TokenizerConfig.from_settings()
        self.backbone = ConvBackbone(self.config.channels)
        widths = (
            self.config.channels
            if self.config.multi_scale
            else (self.config.channels[-1],) * self.config.n_scales
        )
        self.projections = nn.ModuleList(
            nn.Linear(width, self.config.token_dim, bias=self.config.projection_bias)
            for width in widths
        )
        if self.config.zero_init_projections:
            for projection in self.projections:
                nn.init.zeros_(projection.weight)
                if projection.bias is not None:
                    nn.init.zeros_(projection.bias)

    def forward(self, images):
        images = prepare_images(
            images, self.config.resolution, resize=self.config.resize_input
        )
        features = self.backbone(images)
        if not self.config.multi_scale:
            features = [features[-1]] * self.config.n_scales
        pooled = [feature.mean(dim=(2, 3)) for feature in features]
        return AppearanceToken(
            sub_tokens=tuple(
                projection(vector)
                for projection, vector in zip(self.projections, pooled, strict=True)
            )
        )


@dataclass(frozen=True)
class GeometryEncoderConfig:
    n_shape: int = 300
    n_expr: int = 50
    channels: tuple = (16, 32, 64, 128)
    resolution: int = 224
    resize_input: bool = False

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "n_shape": settings.HEAD_N_SHAPE,
            "n_expr": settings.HEAD_N_EXPR,
            "channels": tuple(settings.BACKBONE_CHANNELS),
            "resolution": settings.RENDER_RESOLUTION,
        }
        values.update(overrides)
        return cls(**values)

    @property
    def expression_dim(self):
        return self.n_expr + 3 + 2


class ParameterEncoder(nn.Module):
    """Backbone, global pooling and a small-initialized linear head."""

    def __init__(self, channels, out_features):
        super().__init__()
        self.backbone = ConvBackbone(channels)
        self.head = nn.Linear(channels[-1], out_features)
        nn.init.normal_(self.head.weight, std=HEAD_INIT_STD)
        nn.init.zeros_(self.head.bias)

    def forward(self, images):
        return self.head(self.backbone(images)[-1].mean(dim=(2, 3)))


class GeometryEncoders(nn.Module):
    def __init__(self, config=None):
        super().__init__()
        self.config = config or GeometryEncoderConfig.from_settings()
        channels = self.config.channels
        self.shape = ParameterEncoder(channels, self.config.n_shape)
        self.expression = ParameterEncoder(channels, self.config.expression_dim)
        self.pose = ParameterEncoder(channels, 6)
        self.register_buffer(
            "scale_offset",
            torch.tensor(math.log(math.expm1(CAMERA_SCALE_PRIOR - CAMERA_SCALE_FLOOR))),
        )

    def _prepare(self, images):
        return prepare_images(
            images, self.config.resolution, resize=self.config.resize_input
        )

    def encode_expression(self, images):
        """Joint expression vector (ψ, θ_j, b) as used by the cycle loss."""
        return self.expression(self._prepare(images))

    def forward(self, images):
        images = self._prepare(images)
        n_expr = self.config.n_expr
        expression = self.expression(images)
        pose = self.pose(images)
        scale = F.softplus(pose[:, :1] + self.scale_offset) + CAMERA_SCALE_FLOOR
        return HeadParams(
            beta=self.shape(images),
            psi=expression[:, :n_expr],
            theta_j=expression[:, n_expr : n_expr + 3],
            eye_b=expression[:, n_expr + 3 :],
            theta_h=pose[:, 3:],
            cam_c=torch.cat([scale, pose[:, 1:3]], dim=1),
        )


def tokenize(tokenizer, images):
    return tokenizer(images)


def encode_geometry(encoders, images):
    return encoders(images)
