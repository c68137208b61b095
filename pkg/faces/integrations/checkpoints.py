"""Versioned checkpoint archives for the full pipeline.

A checkpoint holds the rig arrays (``rig.*``), the network state
(``model.*``) and a manifest with the architecture description, its hash,
the training stage and the loss history.
"""

import logging
from dataclasses import dataclass

import torch

from faces.domain.exceptions import CheckpointError, ConfigurationError, DataIOError
from faces.domain.head_model import HeadModelConfig
from faces.integrations.archive import read_archive, write_archive
from faces.networks.common import architecture_digest
from faces.networks.encoders import (
    AppearanceTokenizer,
    GeometryEncoderConfig,
    GeometryEncoders,
    TokenizerConfig,
)
from faces.networks.pipeline import FacePipeline
from faces.networks.synthesizer import FaceSynthesizer, SynthesizerConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hybridface-checkpoint/1"
RIG_PREFIX = "rig."
MODEL_PREFIX = "model."


@dataclass(frozen=True, eq=False)
class Checkpoint:
    pipeline: FacePipeline
    stage: int
    step: int
    history: tuple
    manifest: dict


def save_checkpoint(path, pipeline, *, stage, step=0, history=()):
    arrays = {
        f"{RIG_PREFIX}{name}": value for name, value in pipeline.head_config.arrays().items()
    }
    for name, tensor in pipeline.state_dict().items():
        arrays[f"{MODEL_PREFIX}{name}"] = tensor.detach().cpu().numpy()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "stage": int(stage),
        "step": int(step),
        "rig": pipeline.head_config.manifest(),
        "model": pipeline.manifest(),
        "architecture": architecture_digest(pipeline),
        "history": [dict(row) for row in history],
    }
    path = write_archive(path, arrays, manifest)
    logger.info(
        "event=checkpoint_saved path=%s stage=%s step=%s architecture=%s",
        path,
        stage,
        step,
        manifest["architecture"][:12],
    )
    return path


def _pipeline_from_manifest(head_config, model):
    channels = tuple(model["channels"])
    tokenizer = AppearanceTokenizer(
        TokenizerConfig(
            n_scales=model["n_scales"],
            token_dim=model["token_dim"],
            channels=channels,
            resolution=model["resolution"],
            multi_scale=model["multi_scale"],
            projection_bias=model.get("projection_bias", True),
            resize_input=model.get("tokenizer_resize_input", False),
        )
    )
    encoders = GeometryEncoders(
        GeometryEncoderConfig(
            n_shape=model["n_shape"],
            n_expr=model["n_expr"],
            channels=channels,
            resolution=model["resolution"],
            resize_input=model.get("encoder_resize_input", False),
        )
    )
    synthesizer = FaceSynthesizer(
        SynthesizerConfig(
            n_blocks=model["synth_blocks"],
            base_channels=model["synth_base_channels"],
            adain_hidden=model["synth_adain_hidden"],
            token_dim=model["token_dim"],
            use_token_decoder=model["token_decoder"],
            token_order=model["token_order"],
            resolution=model["resolution"],
        )
    )
    return FacePipeline(head_config, tokenizer, encoders, synthesizer)


def load_checkpoint(path, *, expected_model=None):
    try:
        arrays, manifest = read_archive(path)
    except DataIOError as exc:
        raise CheckpointError(str(exc)) from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} archive")
    if expected_model is not None and manifest["model"] != expected_model:
        differing = sorted(
            key
            for key in set(expected_model) | set(manifest["model"])
            if expected_model.get(key) != manifest["model"].get(key)
        )
        raise CheckpointError(
            f"{path} was trained with a different architecture ({', '.join(differing)})"
        )

    rig_arrays = {
        name[len(RIG_PREFIX) :]: value
        for name, value in arrays.items()
        if name.startswith(RIG_PREFIX)
    }
    state = {
        name[len(MODEL_PREFIX) :]: torch.from_numpy(value.copy())
        for name, value in arrays.items()
        if name.startswith(MODEL_PREFIX)
    }
    try:
        head_config = HeadModelConfig.from_arrays(rig_arrays, manifest["rig"])
        pipeline = _pipeline_from_manifest(head_config, manifest["model"])
    except (KeyError, TypeError, ConfigurationError) as exc:
        raise CheckpointError(f"{path} manifest is incomplete: {exc}") from exc

    if architecture_digest(pipeline) != manifest.get("architecture"):
        raise CheckpointError(f"{path} architecture hash does not match its manifest")
    try:
        pipeline.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path} weights do not fit the architecture: {exc}") from exc

    pipeline.eval()
    logger.info(
        "event=checkpoint_loaded path=%s stage=%s step=%s",
        path,
        manifest["stage"],
        manifest["step"],
    )
    return Checkpoint(
        pipeline=pipeline,
        stage=manifest["stage"],
        step=manifest["step"],
        history=tuple(manifest.get("history", ())),
        manifest=manifest,
    )
