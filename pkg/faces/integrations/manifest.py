"""Dataset manifests: CSV with header ``image,landmarks,video_id,frame``.

Paths are relative to the manifest's directory. Synthetic datasets also carry
``params.npz`` next to the manifest with one ground-truth row per record.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import torch

from faces.domain.exceptions import DataIOError, ValidationError
from faces.domain.head_model import HeadParams
from faces.integrations.archive import read_archive, write_archive
from faces.integrations.landmarks import read_landmarks

logger = logging.getLogger(__name__)

MANIFEST_HEADER = ("image", "landmarks", "video_id", "frame")
PARAMS_ARCHIVE = "params.npz"


@dataclass(frozen=True, eq=False)
class SampleRecord:
    index: int
    image: Path
    landmarks: Path
    points: torch.Tensor
    video_id: str | None = None
    frame: int | None = None
    params: HeadParams | None = None

    @property
    def group(self):
        return self.video_id if self.video_id is not None else self.image.name


def _parse_frame(value, path, line_number):
    if value == "":
        return None
    try:
        return int(value)
    except ValueError as exc:
        raise ValidationError(f"{path}:{line_number}: frame must be an integer") from exc


def load_ground_truth(manifest_path):
    archive = Path(manifest_path).parent / PARAMS_ARCHIVE
    arrays, _ = read_archive(archive, error=DataIOError)
    return HeadParams.from_arrays(arrays)


def load_manifest(path, *, with_params=False):
    """Stream validated ``SampleRecord``s in file order."""
    path = Path(path)
    if not path.exists():
        raise DataIOError(f"manifest {path} does not exist")
    root = path.parent
    ground_truth = load_ground_truth(path) if with_params else None

    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(column.strip() for column in header) != MANIFEST_HEADER:
            raise ValidationError(f"{path}:1: header must be {','.join(MANIFEST_HEADER)}")

        index = 0
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ValidationError(
                    f"{path}:{line_number}: expected {len(MANIFEST_HEADER)} columns"
                )
            image, landmarks, video_id, frame = (value.strip() for value in row)
            image_path = root / image
            landmark_path = root / landmarks
            if not image_path.exists():
                raise DataIOError(f"{path}:{line_number}: image {image_path} does not exist")

            params = None
            if ground_truth is not None:
                if index >= ground_truth.batch_size:
                    raise ValidationError(f"{path}:{line_number}: no ground-truth row")
                params = ground_truth.select(slice(index, index + 1))

            yield SampleRecord(
                index=index,
                image=image_path,
                landmarks=landmark_path,
                points=read_landmarks(landmark_path),
                video_id=video_id or None,
                frame=_parse_frame(frame, path, line_number),
                params=params,
            )
            index += 1


def write_manifest(path, rows):
    """Write ``(image, landmarks, video_id, frame)`` rows; paths relative to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for image, landmarks, video_id, frame in rows:
            writer.writerow(
                [image, landmarks, video_id or "", "" if frame is None else int(frame)]
            )
    return path


def write_ground_truth(manifest_path, params, manifest):
    return write_archive(Path(manifest_path).parent / PARAMS_ARCHIVE, params.arrays(), manifest)


def split_by_video(records, *, test_fraction=0.2, seed=0):
    """Hold out whole videos (or subjects) so no group spans both splits."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must be in (0, 1)")
    records = list(records)
    groups = sorted({record.group for record in records})
    if len(groups) < 2:
        raise ValidationError("splitting by video needs at least two videos")

    generator = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(groups), generator=generator).tolist()
    n_test = min(len(groups) - 1, max(1, round(test_fraction * len(groups))))
    test_groups = {groups[i] for i in order[:n_test]}
    train = [record for record in records if record.group not in test_groups]
    test = [record for record in records if record.group in test_groups]
    logger.info(
        "event=dataset_split train=%s test=%s test_videos=%s",
        len(train),
        len(test),
        n_test,
    )
    return train, test
