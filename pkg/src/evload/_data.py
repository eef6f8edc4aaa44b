import os
from pathlib import Path

DATA_ENV_VAR = "EVLOAD_DATA_DIR"

_BUNDLED = Path(__file__).resolve().parent / "data"


def data_dir() -> Path:
    """Directory holding OCV tables and case files; overridable through ``EVLOAD_DATA_DIR``."""
    override = os.environ.get(DATA_ENV_VAR)
    return Path(override) if override else _BUNDLED


def data_path(name: str) -> Path:
    path = data_dir() / name
    if not path.exists() and (_BUNDLED / name).exists():
        # an override directory may carry only some of the files
        return _BUNDLED / name
    return path
