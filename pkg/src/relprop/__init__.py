"""Relational propositionalization (Wordification) with embedding and MLP learners."""

from importlib import resources

__version__ = "0.1.0"


def bundled_dataset(name: str) -> str:
    """Path of a dump shipped in ``relprop/data`` (e.g. ``"toy_trains"``)."""
    path = resources.files(__name__) / "data" / f"{name}.sql"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled dataset {name!r}")
    return str(path)
