"""File formats, archives, checkpoints and datasets."""
