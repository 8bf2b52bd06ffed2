"""Prompt text assets shipped with the package, pinned by sha256."""

from __future__ import annotations

import hashlib
import os
from functools import lru_cache
from pathlib import Path

ASSET_DIR = Path(__file__).with_name("assets")

ASSET_CHECKSUMS = {
    "vanilla": "07051c5e309576e7bc8e0f8fb814c84b5a294892e5c4df9195d9a4c5e1a9296d",
    "concise": "7d200c885fe7161de4acef9bffc000ea0495e18272595a648caf80708d53a5d4",
    "extreme_short": "22a066d6299a44fc8a93fea6c09bee036f03c410e4842a5e1abf37d0eb377125",
    "threat": "6d12d184b2041e2ab19a1c90fa502430cfa9788fd5eea09982238d4270d7f8e5",
    "temptation": "b9c2305bfe95ce718842b424e357f08f6f01d3d7906dbdc7d496062f81bb0482",
    "identification": "10fd547aaf764959705bca9df2d2982c54efc33086e50bcbd4016b01794b2f12",
    "internalization": "f62707404a1fcf2c1f6e42e78a0470cc39c271f7111ead491e751582d01a78ee",
    "feedback_caption": "ed430ba5217b5b9e7fdfd6e88481632597a0aebcf56d9abce7aa3bcc3c20b399",
    "solver_research": "69c94daa6e5a4be68eebe03ac1e83b6bdb31d46c9c28711fdf655f2e46688cfa",
    "solver_math": "737252d8a04d07c79e4e127ab2a9e3a875c7e859a1984458b5476e3434928bcf",
}

# The seven allocator-side prompts; the caption and solver prompts are extra.
ALLOCATOR_ASSETS = (
    "vanilla",
    "concise",
    "extreme_short",
    "threat",
    "temptation",
    "identification",
    "internalization",
)


class ConfigError(RuntimeError):
    pass


def asset_dir() -> Path:
    override = os.environ.get("SWFBENCH_ASSETS")
    return Path(override) if override else ASSET_DIR


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def verify_assets(directory: str | Path | None = None) -> list[str]:
    """Return one problem line per missing or altered asset (empty when clean)."""
    directory = Path(directory) if directory else asset_dir()
    problems = []
    for name, expected in ASSET_CHECKSUMS.items():
        path = directory / f"{name}.txt"
        if not path.is_file():
            problems.append(f"template {name}: missing ({path})")
            continue
        actual = sha256_text(path.read_text(encoding="utf-8"))
        if actual != expected:
            problems.append(f"template {name}: checksum mismatch ({actual[:12]} != {expected[:12]})")
    return problems


@lru_cache(maxsize=None)
def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def load_asset(name: str, directory: str | Path | None = None) -> str:
    if name not in ASSET_CHECKSUMS:
        raise ConfigError(f"unknown template {name!r}")
    path = (Path(directory) if directory else asset_dir()) / f"{name}.txt"
    if not path.is_file():
        raise ConfigError(f"template {name} missing at {path}")
    text = _read(str(path))
    if sha256_text(text) != ASSET_CHECKSUMS[name]:
        raise ConfigError(f"template {name} at {path} fails its checksum")
    return text
