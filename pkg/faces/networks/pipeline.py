"""Wiring of rig, renderer, encoders and synthesizer into one trainable model."""

import logging
from dataclasses import dataclass

import torch
from torch import nn

from faces.domain.exceptions import ConfigurationError
from faces.domain.head_model import evaluate, head_yaw, project_points, select_landmarks
from faces.domain.losses import AugmentedView
from faces.domain.renderer import ShadingParams, rasterize
from faces.networks.encoders import AppearanceTokenizer, GeometryEncoders
from faces.networks.synthesizer import FaceSynthesizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Reconstruction:
    params: object
    token: object
    bundle: object
    image: torch.Tensor


class FacePipeline(nn.Module):
    def __init__(self, head_config, tokenizer, encoders, synthesizer):
        super().__init__()
        resolutions = {
            tokenizer.config.resolution,
            encoders.config.resolution,
            synthesizer.config.resolution,
        }
        if len(resolutions) != 1:
            raise ConfigurationError(f"networks disagree on resolution: {sorted(resolutions)}")
        if tokenizer.config.n_scales != synthesizer.config.n_blocks:
            raise ConfigurationError("tokenizer scales must equal synthesizer blocks")
        if tokenizer.config.token_dim != synthesizer.config.token_dim:
            raise ConfigurationError("tokenizer and synthesizer disagree on token width")
        if (encoders.config.n_shape, encoders.config.n_expr) != (
            head_config.n_shape,
            head_config.n_expr,
        ):
            raise ConfigurationError("geometry encoders do not match the rig dimensions")

        self.head_config = head_config
        self.tokenizer = tokenizer
        self.encoders = encoders
        self.synthesizer = synthesizer

    @classmethod
    def build(cls, head_config, run_config):
        return cls(
            head_config,
            AppearanceTokenizer(run_config.tokenizer),
            GeometryEncoders(run_config.geometry),
            FaceSynthesizer(run_config.synthesizer),
        )

    @property
    def resolution(self):
        return self.synthesizer.config.resolution

    def manifest(self):
        return {
            "n_scales": self.tokenizer.config.n_scales,
            "token_dim": self.tokenizer.config.token_dim,
            "multi_scale": self.tokenizer.config.multi_scale,
            "projection_bias": self.tokenizer.config.projection_bias,
            "tokenizer_resize_input": self.tokenizer.config.resize_input,
            "encoder_resize_input": self.encoders.config.resize_input,
            "channels": list(self.tokenizer.config.channels),
            "resolution": self.resolution,
            "n_shape": self.head_config.n_shape,
            "n_expr": self.head_config.n_expr,
            "synth_blocks": self.synthesizer.config.n_blocks,
            "synth_base_channels": self.synthesizer.config.base_channels,
            "synth_adain_hidden": self.synthesizer.config.adain_hidden,
            "token_decoder": self.synthesizer.config.use_token_decoder,
            "token_order": self.synthesizer.config.token_order,
        }

    def encode(self, images):
        return self.encoders(images), self.tokenizer(images)

    def project_landmarks(self, params, vertices=None):
        if vertices is None:
            vertices = evaluate(self.head_config, params)
        return project_points(select_landmarks(self.head_config, vertices), params)

    def render(self, params, images=None, shading=None):
        vertices = evaluate(self.head_config, params)
        shading = shading or ShadingParams.neutral(
            self.head_config.n_vertices, params.batch_size, vertices.positions.dtype
        )
        return rasterize(vertices, params, shading, self.resolution, image=images)

    def synthesize(self, bundle, token, *, use_token_decoder=True):
        return self.synthesizer(
            bundle.mesh_image,
            bundle.background,
            token,
            use_token_decoder=use_token_decoder,
        )

    def reconstruct(self, images, *, params=None, token=None, use_token_decoder=True):
        """Encode (unless parameters or token are given), render and synthesize."""
        if params is None:
            params = self.encoders(images)
        if token is None:
            token = self.tokenizer(images)
        bundle = self.render(params, images)
        output = self.synthesize(bundle, token, use_token_decoder=use_token_decoder)
        return Reconstruction(params=params, token=token, bundle=bundle, image=output)

    def augmented_views(self, images, augmented_params, token):
        views = []
        for params in augmented_params:
            bundle = self.render(params, images)
            views.append(AugmentedView(params=params, image=self.synthesize(bundle, token)))
        return views

    def yaw(self, params):
        return head_yaw(params.theta_h)
