import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import torch

from faces.domain.exceptions import FlowProviderError
from faces.domain.head_model import unit_to_ndc
from faces.domain.losses import pose_mask_select
from faces.domain.metrics import (
    VideoClip,
    aed,
    apd,
    flicker,
    frechet_distance,
    identity_similarity,
    landmark_error_px,
    psnr,
    warp_error,
)
from faces.integrations.images import read_image
from faces.integrations.reports import write_csv, write_json

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ("index", "image", "video_id", "frame", "psnr", "landmark_px", "aed", "apd")


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple
    summary: dict


def _chunks(items, size):
    for start in range(0, len(items), size):
        yield items[start : start + size]


def _summarize(values):
    values = [value for value in values if value is not None]
    if not values:
        return None
    return {"value": sum(values) / len(values), "count": len(values)}


@torch.no_grad()
def evaluate_records(
    pipeline,
    records,
    pose_masks,
    *,
    distance="l1",
    batch_size=16,
    flow_provider=None,
    embedding_provider=None,
):
    pipeline.eval()
    records = list(records)
    resolution = pipeline.resolution
    rows = []
    outputs = {}
    embeddings_in, embeddings_out = [], []

    for chunk in _chunks(records, batch_size):
        images = torch.stack([read_image(record.image, resolution=resolution) for record in chunk])
        detected = unit_to_ndc(torch.stack([record.points for record in chunk]))
        result = pipeline.reconstruct(images)
        projected = pipeline.project_landmarks(result.params)
        mask = pose_mask_select(pipeline.yaw(result.params), pose_masks)
        errors = landmark_error_px(detected, projected, resolution, mask)
        if embedding_provider is not None:
            embeddings_in.append(embedding_provider(images))
            embeddings_out.append(embedding_provider(result.image))

        for offset, record in enumerate(chunk):
            estimate = result.params.select(slice(offset, offset + 1))
            row = {
                "index": record.index,
                "image": record.image.name,
                "video_id": record.video_id or "",
                "frame": "" if record.frame is None else record.frame,
                "psnr": psnr(images[offset], result.image[offset]),
                "landmark_px": float(errors[offset]),
                "aed": None,
                "apd": None,
            }
            if record.params is not None:
                row["aed"] = aed(estimate, record.params, distance=distance)
                row["apd"] = apd(estimate, record.params, distance=distance)
            rows.append(row)
            outputs[record.index] = (images[offset], result.image[offset])

    summary = {
        name: _summarize([row[name] for row in rows])
        for name in ("psnr", "landmark_px", "aed", "apd")
    }
    summary.update(_temporal_metrics(records, outputs, flow_provider))
    if embedding_provider is not None and records:
        embedded_in = torch.cat(embeddings_in)
        embedded_out = torch.cat(embeddings_out)
        summary["identity_similarity"] = {
            "value": identity_similarity(embedded_in, embedded_out),
            "count": len(records),
        }
        if len(records) >= 2:
            summary["frechet_distance"] = {
                "value": frechet_distance(embedded_in, embedded_out),
                "count": len(records),
            }
    summary = {name: value for name, value in summary.items() if value is not None}
    logger.info(
        "event=evaluation_finished samples=%s metrics=%s", len(rows), ",".join(sorted(summary))
    )
    return EvaluationReport(rows=tuple(rows), summary=summary)


def _temporal_metrics(records, outputs, flow_provider):
    videos = defaultdict(list)
    for record in records:
        if record.video_id is not None and record.frame is not None:
            videos[record.video_id].append(record)

    flickers, warps = [], []
    for video_id in sorted(videos):
        frames = sorted(videos[video_id], key=lambda record: record.frame)
        if len(frames) < 2:
            logger.debug(
                "event=temporal_metrics_skipped video_id=%s frames=%s", video_id, len(frames)
            )
            continue
        clip_in = VideoClip(torch.stack([outputs[record.index][0] for record in frames]))
        clip_out = VideoClip(torch.stack([outputs[record.index][1] for record in frames]))
        flickers.append(flicker(clip_out))
        if flow_provider is None:
            continue
        try:
            warps.append(warp_error(clip_in, clip_out, flow_provider))
        except FlowProviderError as exc:
            logger.warning("event=warp_error_skipped video_id=%s reason=%s", video_id, exc)

    return {"flicker": _summarize(flickers), "warp_error": _summarize(warps)}


def write_evaluation(out_dir, report, *, config_hash):
    out_dir = Path(out_dir)
    csv_path = write_csv(out_dir / "metrics.csv", report.rows, SAMPLE_COLUMNS)
    summary = {
        "config_hash": config_hash,
        "metrics": report.summary,
    }
    json_path = write_json(out_dir / "summary.json", summary)
    return csv_path, json_path
