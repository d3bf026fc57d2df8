"""Historical semantic-versioning analysis for npm-style package registries."""

__version__ = "0.1.0"

from .semver import (  # noqa: E402
    Category,
    Constraint,
    IncrementType,
    Version,
    compare_versions,
    increment_type,
    parse_constraint,
    parse_version,
    satisfies,
)
from .store import Advisory, PackageHistory, Store, VersionRecord  # noqa: E402

__all__ = [
    "Advisory",
    "Category",
    "Constraint",
    "IncrementType",
    "PackageHistory",
    "Store",
    "Version",
    "VersionRecord",
    "compare_versions",
    "increment_type",
    "parse_constraint",
    "parse_version",
    "satisfies",
]
