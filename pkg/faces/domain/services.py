import logging
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.decomposition import PCA
from sklearn.metrics import silhouette_score

from faces.domain.exceptions import ValidationError
from faces.domain.head_model import HeadParams

logger = logging.getLogger(__name__)

EDIT_MODES = ("swap_token", "swap_shape_and_token", "transfer_expression", "animate")


@dataclass(frozen=True)
class EditRequest:
    mode: str
    source: object
    targets: tuple
    output: object = None

    def __post_init__(self):
        if self.mode not in EDIT_MODES:
            raise ValidationError(f"edit mode must be one of {', '.join(EDIT_MODES)}")
        if self.source is None:
            raise ValidationError("edit needs a source image")
        if not self.targets:
            raise ValidationError(f"{self.mode} needs a target image")
        if self.mode != "animate" and len(self.targets) != 1:
            raise ValidationError(f"{self.mode} takes exactly one target image")


@dataclass(frozen=True, eq=False)
class EditResult:
    images: tuple
    params: HeadParams
    token: object


@dataclass(frozen=True)
class ClusterResult:
    rows: tuple
    silhouettes: dict


def _single(images):
    if images.dim() == 3:
        images = images[None]
    if images.shape[0] != 1:
        raise ValidationError("edits take one image at a time")
    return images


class ReconstructionService:
    @staticmethod
    @torch.no_grad()
    def reconstruct(pipeline, images, *, use_token_decoder=True):
        pipeline.eval()
        if images.dim() == 3:
            images = images[None]
        return pipeline.reconstruct(images, use_token_decoder=use_token_decoder)

    @staticmethod
    @torch.no_grad()
    def edit(pipeline, source, target, mode, *, use_token_decoder=True):
        """Re-synthesize ``source`` with parts of ``target``'s representation."""
        pipeline.eval()
        source, target = _single(source), _single(target)
        source_params, source_token = pipeline.encode(source)
        target_params, target_token = pipeline.encode(target)

        if mode == "swap_token":
            params, token = source_params, target_token
        elif mode == "swap_shape_and_token":
            params, token = source_params.replace(beta=target_params.beta), target_token
        elif mode == "transfer_expression":
            params = source_params.with_expression_vector(target_params.expression_vector())
            token = source_token
        else:
            raise ValidationError(f"unsupported single-target edit mode {mode!r}")

        result = pipeline.reconstruct(
            source, params=params, token=token, use_token_decoder=use_token_decoder
        )
        logger.info("event=edit_applied mode=%s", mode)
        return EditResult(images=(result.image,), params=params, token=token)

    @staticmethod
    @torch.no_grad()
    def animate(pipeline, source, drivers, *, use_token_decoder=True):
        """Drive the source's shape and token with each driver's expression and pose."""
        pipeline.eval()
        source = _single(source)
        source_params, source_token = pipeline.encode(source)
        frames, driven = [], []
        for driver in drivers:
            driver_params = pipeline.encoders(_single(driver))
            params = source_params.with_expression_vector(
                driver_params.expression_vector()
            ).replace(theta_h=driver_params.theta_h, cam_c=driver_params.cam_c)
            result = pipeline.reconstruct(
                source, params=params, token=source_token, use_token_decoder=use_token_decoder
            )
            frames.append(result.image)
            driven.append(params)
        logger.info("event=animation_rendered frames=%s", len(frames))
        return EditResult(
            images=tuple(frames), params=HeadParams.stack(driven), token=source_token
        )

    @staticmethod
    def apply(pipeline, request, *, use_token_decoder=True):
        if request.mode == "animate":
            return ReconstructionService.animate(
                pipeline, request.source, request.targets, use_token_decoder=use_token_decoder
            )
        return ReconstructionService.edit(
            pipeline,
            request.source,
            request.targets[0],
            request.mode,
            use_token_decoder=use_token_decoder,
        )

    @staticmethod
    def cluster_tokens(tokens, labels, *, names=None):
        """Project each scale's sub-tokens to 2D with PCA and score the label grouping.

        ``tokens`` is a batched ``AppearanceToken`` or a list of them in frame
        order; ``labels`` holds the identity of every frame.
        """
        if isinstance(tokens, (list, tuple)):
            sub_tokens = [
                torch.cat([token.sub_tokens[scale] for token in tokens])
                for scale in range(tokens[0].n_scales)
            ]
        else:
            sub_tokens = list(tokens.sub_tokens)
        labels = list(labels)
        n_frames = sub_tokens[0].shape[0]
        if len(labels) != n_frames:
            raise ValidationError("one identity label per frame is required")
        if len(set(labels)) < 2:
            raise ValidationError("token clustering needs at least two identities")
        names = list(names) if names is not None else [str(i) for i in range(n_frames)]

        rows, silhouettes = [], {}
        for scale, values in enumerate(sub_tokens):
            features = values.detach().double().cpu().numpy()
            components = min(2, features.shape[0], features.shape[1])
            embedded = PCA(n_components=components, svd_solver="full").fit_transform(features)
            if components < 2:
                embedded = np.pad(embedded, ((0, 0), (0, 2 - components)))
            silhouettes[scale] = None
            if len(set(labels)) < n_frames:
                silhouettes[scale] = float(silhouette_score(embedded, labels))
            for name, label, (x, y) in zip(names, labels, embedded, strict=True):
                rows.append(
                    {"frame": name, "scale": scale, "x": float(x), "y": float(y), "label": label}
                )
        logger.info(
            "event=tokens_clustered frames=%s identities=%s scales=%s",
            n_frames,
            len(set(labels)),
            len(sub_tokens),
        )
        return ClusterResult(rows=tuple(rows), silhouettes=silhouettes)

    @staticmethod
    @torch.no_grad()
    def tokenize_images(pipeline, images, *, batch_size=16):
        pipeline.eval()
        tokens = []
        for start in range(0, images.shape[0], batch_size):
            tokens.append(pipeline.tokenizer(images[start : start + batch_size]))
        return tokens
