"""Dataset manifest: one tab-separated record per line.

::

    # sgnet-manifest 1
    sub-000<TAB>images/sub-000.sgv<TAB>masks/sub-000.sgv<TAB>train

Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

HEADER = "# sgnet-manifest 1"
SPLITS = ("train", "val", "test")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    subject: str
    image: Path
    mask: Path
    split: str


def read_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    entries, seen = [], set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}")
        sid, image, mask, split = fields
        if split not in SPLITS:
            raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
        if sid in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate subject id {sid!r}")
        seen.add(sid)
        entry = ManifestEntry(sid, base / image, base / mask, split)
        if check_files:
            for p in (entry.image, entry.mask):
                if not p.is_file():
                    raise FileNotFoundError(f"{path}:{lineno}: referenced file missing: {p}")
        entries.append(entry)
    return entries


def write_manifest(path, records) -> None:
    """``records`` are (subject, image, mask, split) with paths relative to the manifest."""
    lines = [HEADER]
    for sid, image, mask, split in records:
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}")
        lines.append(f"{sid}\t{Path(image).as_posix()}\t{Path(mask).as_posix()}\t{split}")
    Path(path).write_text("\n".join(lines) + "\n")


def select(entries, split: str) -> list[ManifestEntry]:
    return [e for e in entries if e.split == split]
