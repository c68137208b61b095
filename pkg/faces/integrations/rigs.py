import logging

from faces.domain.exceptions import CheckpointError, ConfigurationError
from faces.domain.head_model import HeadModelConfig
from faces.integrations.archive import read_archive, write_archive

logger = logging.getLogger(__name__)


def save_rig(path, config):
    path = write_archive(path, config.arrays(), config.manifest())
    logger.info("event=rig_saved path=%s n_vertices=%s", path, config.n_vertices)
    return path


def load_rig(path):
    arrays, manifest = read_archive(path)
    try:
        config = HeadModelConfig.from_arrays(arrays, manifest)
    except (KeyError, ConfigurationError) as exc:
        raise CheckpointError(f"{path} is not a valid rig archive: {exc}") from exc
    if config.manifest() != manifest:
        raise CheckpointError(f"{path} manifest does not match its arrays")
    return config
