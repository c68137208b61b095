"""Per-image parameter and token dumps written by the inference commands."""

from faces.domain.exceptions import DataIOError
from faces.domain.head_model import HeadParams
from faces.integrations.archive import read_archive, write_archive


def write_params(path, params, source):
    return write_archive(path, params.arrays(), {"source": str(source)})


def read_params(path):
    arrays, _ = read_archive(path, error=DataIOError)
    return HeadParams.from_arrays(arrays)


def write_token(path, token):
    """Store the concatenated token of a single image as one (K*d,) vector."""
    return write_archive(
        path,
        {"token": token.concat[0].detach().cpu().numpy()},
        {"n_scales": token.n_scales, "token_dim": token.token_dim},
    )


def read_token(path):
    arrays, manifest = read_archive(path, error=DataIOError)
    return arrays["token"], manifest
