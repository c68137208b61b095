"""Plain-text landmark files and landmark index sets.

A landmark file holds exactly 203 lines of ``"u v"`` in unit image
coordinates (u right, v down, both in [0, 1]). An index file holds one
non-negative landmark index per line.
"""

import math
from pathlib import Path

import torch

from faces.domain.exceptions import DataIOError, LandmarkFormatError, ValidationError
from faces.domain.head_model import N_LANDMARKS


def _read_lines(path):
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise DataIOError(f"landmark file {path} does not exist") from exc
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def read_landmarks(path):
    lines = _read_lines(path)
    rows = []
    for line_number, raw in enumerate(lines, start=1):
        fields = raw.split()
        if not fields:
            raise LandmarkFormatError(path, line_number, "blank line")
        if len(fields) != 2:
            raise LandmarkFormatError(
                path, line_number, f"expected 2 values, found {len(fields)}"
            )
        try:
            u, v = float(fields[0]), float(fields[1])
        except ValueError as exc:
            raise LandmarkFormatError(path, line_number, "value is not a number") from exc
        if not (math.isfinite(u) and math.isfinite(v)):
            raise LandmarkFormatError(path, line_number, "value is not finite")
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise LandmarkFormatError(
                path, line_number, f"coordinate ({u}, {v}) outside [0, 1]"
            )
        rows.append((u, v))
        if len(rows) > N_LANDMARKS:
            raise LandmarkFormatError(
                path, line_number, f"more than {N_LANDMARKS} landmark rows"
            )

    if len(rows) != N_LANDMARKS:
        raise LandmarkFormatError(
            path,
            len(rows) + 1,
            f"expected {N_LANDMARKS} landmark rows, found {len(rows)}",
        )
    return torch.tensor(rows, dtype=torch.float32)


def write_landmarks(path, points):
    points = torch.as_tensor(points).detach().cpu()
    if tuple(points.shape) != (N_LANDMARKS, 2):
        raise ValidationError(f"landmarks must have shape ({N_LANDMARKS}, 2)")
    if not torch.isfinite(points).all():
        raise ValidationError("landmarks must be finite")
    if (points < 0).any() or (points > 1).any():
        raise ValidationError("landmark coordinates must be in [0, 1]")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = "".join(f"{u:.8f} {v:.8f}\n" for u, v in points.tolist())
    path.write_text(text, encoding="utf-8")
    return path


def read_index_file(path, *, size=N_LANDMARKS):
    indices = []
    for line_number, raw in enumerate(_read_lines(path), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            index = int(stripped)
        except ValueError as exc:
            raise LandmarkFormatError(path, line_number, "index is not an integer") from exc
        if not 0 <= index < size:
            raise LandmarkFormatError(path, line_number, f"index {index} outside [0, {size})")
        indices.append(index)
    if len(set(indices)) != len(indices):
        raise LandmarkFormatError(path, None, "duplicate landmark index")
    return sorted(indices)


def write_index_file(path, indices):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{int(index)}\n" for index in sorted(indices)), encoding="utf-8")
    return path
