"""Named-array archives: a compressed ``.npz`` with a JSON manifest member.

Members are written in sorted order and numpy stamps every member with the
zip epoch, so equal content always yields equal bytes.
"""

import json
import logging
import zipfile
from pathlib import Path

import numpy as np

from faces.domain.exceptions import CheckpointError, DataIOError, ValidationError

logger = logging.getLogger(__name__)

MANIFEST_KEY = "manifest"


def write_archive(path, arrays, manifest):
    if MANIFEST_KEY in arrays:
        raise ValidationError(f"array name {MANIFEST_KEY!r} is reserved")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    members = {name: np.ascontiguousarray(arrays[name]) for name in sorted(arrays)}
    members[MANIFEST_KEY] = np.array(json.dumps(manifest, sort_keys=True))
    with path.open("wb") as handle:
        np.savez_compressed(handle, **members)
    logger.debug("event=archive_written path=%s members=%s", path, len(members) - 1)
    return path


def read_archive(path, *, error=CheckpointError):
    path = Path(path)
    if not path.exists():
        raise DataIOError(f"archive {path} does not exist")
    try:
        data = np.load(path, allow_pickle=False)
        if not isinstance(data, np.lib.npyio.NpzFile):
            raise error(f"{path} is not a manifest archive")
        with data:
            if MANIFEST_KEY not in data.files:
                raise error(f"{path} has no manifest")
            manifest = json.loads(str(data[MANIFEST_KEY]))
            arrays = {name: data[name] for name in data.files if name != MANIFEST_KEY}
    except (zipfile.BadZipFile, ValueError, OSError, EOFError) as exc:
        raise error(f"{path} is corrupt: {exc}") from exc
    return arrays, manifest
