"""Pluggable back-ends for metrics that need external models.

No pretrained optical-flow or face-embedding network ships with the project;
these providers cover known-motion clips and plumbing checks.
"""

import torch
import torch.nn.functional as F

from faces.domain.exceptions import FlowProviderError


class ConstantFlowProvider:
    """Same backward flow (dx, dy) in pixels for every frame pair."""

    def __init__(self, dx=0.0, dy=0.0):
        self.dx = dx
        self.dy = dy

    def __call__(self, index, frame, next_frame):
        flow = torch.empty(2, *frame.shape[-2:], dtype=torch.float64)
        flow[0] = self.dx
        flow[1] = self.dy
        return flow


class PrecomputedFlowProvider:
    def __init__(self, flows):
        self.flows = list(flows)

    def __call__(self, index, frame, next_frame):
        if index >= len(self.flows) or self.flows[index] is None:
            raise FlowProviderError(f"no precomputed flow for frame pair {index}")
        return self.flows[index]


class RandomProjectionEmbedding:
    """Fixed random projection of a downsampled image; for plumbing checks only."""

    def __init__(self, dim=64, *, size=16, seed=0):
        generator = torch.Generator().manual_seed(seed)
        self.size = size
        self.matrix = torch.randn(3 * size * size, dim, generator=generator, dtype=torch.float64)

    def __call__(self, images):
        small = F.interpolate(
            images.double(), size=(self.size, self.size), mode="area"
        ).flatten(1)
        return small @ self.matrix
