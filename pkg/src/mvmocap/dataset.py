"""Discovery of samples in a dataset directory tree.

Layout (paths relative to the dataset root)::

    index.txt                          sample table, see below
    samples/<id>/rgb/<view>/           image frames, referenced by path only
    samples/<id>/skeleton2d/<view>.txt 2D skeleton files
    samples/<id>/skeleton3d.txt        3D skeleton sequence

``index.txt`` is a table file of kind ``dataset`` with columns
``sample_id action_class subject quality frames``; ``quality`` is ``-`` when
unlabelled and ``action_class`` runs from 1 to 24.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NotADataset, NotADatasetWarning
from .formats import VERSION, _ID, _num, _read, _read_table

INDEX_NAME = "index.txt"
INDEX_COLUMNS = ("sample_id", "action_class", "subject", "quality", "frames")
CLASS_RANGE = (1, 24)
MODALITIES = ("rgb", "skeleton2d", "skeleton3d")


@dataclass(frozen=True)
class SampleManifest:
    sample_id: str
    action_class: int
    subject: str
    quality: str | None
    frame_count: int
    rgb_views: dict = field(default_factory=dict)         # view -> relative directory
    skeleton2d_views: dict = field(default_factory=dict)  # view -> relative file
    skeleton3d: str | None = None
    missing: tuple = ()

    def has(self, modality):
        return modality not in self.missing


def parse_index(text, path=None):
    """Rows of the sample index as ``(sample_id, class, subject, quality, frames)``."""
    r, _, _, rows = _read_table(text, "dataset", INDEX_COLUMNS, {}, path)
    out, seen = [], set()
    for line_no, ((sid, sc), (cls, cc), (subj, jc), (q, _), (n, nc)) in rows:
        r.pos = line_no
        if not _ID.match(sid) or sid in seen:
            raise r.error(f"bad or duplicate sample id {sid!r}", column=sc)
        seen.add(sid)
        k = _num(r, cls, cc, int)
        if not CLASS_RANGE[0] <= k <= CLASS_RANGE[1]:
            raise r.error(f"action class {k} outside {CLASS_RANGE[0]}..{CLASS_RANGE[1]}", column=cc)
        if not _ID.match(subj):
            raise r.error(f"bad subject id {subj!r}", column=jc)
        frames = _num(r, n, nc, int)
        if frames < 0:
            raise r.error("frame count must be non-negative", column=nc)
        out.append((sid, k, subj, None if q == "-" else q, frames))
    return out


def format_index(manifests) -> str:
    lines = [f"mvmocap dataset {VERSION}", "columns=" + " ".join(INDEX_COLUMNS)]
    for m in sorted(manifests, key=lambda m: m.sample_id):
        lines.append(f"{m.sample_id} {m.action_class} {m.subject} {m.quality or '-'} {m.frame_count}")
    return "\n".join(lines) + "\n"


def _rel(path, root):
    return Path(os.path.relpath(path, root)).as_posix()


def scan_dataset(root) -> list[SampleManifest]:
    """Manifests for every indexed sample, sorted by sample id.

    Modalities that are absent on disk are listed in ``missing``; they are
    not an error. A root that is empty yields ``[]`` with a
    :class:`NotADatasetWarning`.

    Raises:
        NotADataset: the root is missing or has content but no index file.
        ParseError: the index is malformed.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotADataset(f"{root} is not a directory")
    index = root / INDEX_NAME
    if not index.is_file():
        if not any(root.iterdir()):
            warnings.warn(f"{root} is empty; no dataset index found", NotADatasetWarning, stacklevel=2)
            return []
        raise NotADataset(f"{root} has no {INDEX_NAME}")
    rows = parse_index(_read(index), str(index))
    out = []
    for sid, cls, subj, quality, frames in sorted(rows):
        base = root / "samples" / sid
        rgb_dir, sk2_dir, sk3 = base / "rgb", base / "skeleton2d", base / "skeleton3d.txt"
        rgb = {p.name: _rel(p, root) for p in sorted(rgb_dir.iterdir()) if p.is_dir()} if rgb_dir.is_dir() else {}
        sk2 = ({p.stem: _rel(p, root) for p in sorted(sk2_dir.glob("*.txt")) if p.is_file()}
               if sk2_dir.is_dir() else {})
        missing = tuple(m for m, present in zip(MODALITIES, (rgb, sk2, sk3.is_file())) if not present)
        out.append(SampleManifest(sid, cls, subj, quality, frames, rgb, sk2,
                                  _rel(sk3, root) if sk3.is_file() else None, missing))
    return out


__all__ = ["SampleManifest", "format_index", "parse_index", "scan_dataset"]
