import os

from django.core.exceptions import ImproperlyConfigured
from dotenv import dotenv_values, load_dotenv


def load_environment(base_dir):
    load_dotenv(base_dir / ".env")


def load_config_file(path):
    if not os.path.exists(path):
        raise ImproperlyConfigured(f"config file {path} does not exist")
    return {key: value for key, value in dotenv_values(path).items() if value}


def _raw(name, source):
    if source is None:
        return os.getenv(name)
    return source.get(name)


def env_bool(name, default=False, *, source=None):
    value = _raw(name, source)
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def env_int(name, default, *, source=None):
    value = _raw(name, source)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError as exc:
        raise ImproperlyConfigured(f"{name} must be an integer") from exc


def env_float(name, default, *, source=None):
    value = _raw(name, source)
    if value is None or value == "":
        return default
    try:
        return float(value)
    except ValueError as exc:
        raise ImproperlyConfigured(f"{name} must be a number") from exc


def env_list(name, default=None, *, source=None):
    value = _raw(name, source)
    if value is None:
        return default or []
    return [item.strip() for item in value.split(",") if item.strip()]


def env_int_list(name, default, *, source=None):
    items = env_list(name, None, source=source)
    if not items:
        return list(default)
    try:
        return [int(item) for item in items]
    except ValueError as exc:
        raise ImproperlyConfigured(
            f"{name} must be a comma-separated list of integers"
        ) from exc


def env_str(name, default, *, source=None):
    value = _raw(name, source)
    if value is None or not value.strip():
        return default
    return value.strip()
