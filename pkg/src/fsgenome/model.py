"""Genome and corpus data model, JSON-Lines persistence and debugfs ingest.

A genome maps each file path to the ordered physical block numbers holding
its data. Paths, not inode numbers, identify a file across installations.
"""
from __future__ import annotations

import dataclasses
import io
import json
import os
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Sequence

FORMAT_TAG = "fsg/1"
UNIVERSE_MODES = ("intersection", "union")


class FsgFormatError(ValueError):
    pass


class FsgWriteError(OSError):
    def __init__(self, message: str, bytes_written: int):
        super().__init__(f"{message} (after {bytes_written} bytes)")
        self.bytes_written = bytes_written


def _check_blocks(path: str, blocks: Sequence[int]) -> tuple[int, ...]:
    out = tuple(int(b) for b in blocks)
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate block numbers in {path}")
    if any(b < 0 for b in out):
        raise ValueError(f"negative block number in {path}")
    return out


@dataclasses.dataclass(frozen=True)
class Fsg:
    """One installation's genome.

    ``entries`` is normalized to a dict sorted by path whose values are
    tuples of block numbers.
    """

    device_label: str
    block_size: int
    entries: Mapping[str, tuple[int, ...]] = dataclasses.field(default_factory=dict)
    volume_uuid: bytes | None = None

    def __post_init__(self):
        if self.block_size <= 0:
            raise ValueError("block_size must be positive")
        if self.volume_uuid is not None and len(self.volume_uuid) != 16:
            raise ValueError("volume_uuid must be 16 bytes")
        norm = {p: _check_blocks(p, self.entries[p]) for p in sorted(self.entries)}
        object.__setattr__(self, "entries", norm)

    def __hash__(self) -> int:
        return hash((self.device_label, self.block_size, self.volume_uuid, tuple(self.entries.items())))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, path: str) -> bool:
        return path in self.entries

    def __getitem__(self, path: str) -> tuple[int, ...]:
        return self.entries[path]

    @property
    def paths(self) -> list[str]:
        return list(self.entries)

    def replace(self, **changes) -> "Fsg":
        return dataclasses.replace(self, **changes)

    def restrict(self, paths: Iterable[str]) -> "Fsg":
        """Sub-genome over ``paths``; paths missing from this genome are skipped."""
        return self.replace(entries={p: self.entries[p] for p in paths if p in self.entries})


@dataclasses.dataclass(frozen=True)
class FileUniverse:
    paths: tuple[str, ...]
    mode: str = "intersection"

    def __post_init__(self):
        if self.mode not in UNIVERSE_MODES:
            raise ValueError(f"unknown universe mode {self.mode!r}")
        object.__setattr__(self, "paths", tuple(sorted(set(self.paths))))

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


@dataclasses.dataclass(frozen=True)
class Corpus:
    """Installations of the same system, aligned by path."""

    installations: tuple[Fsg, ...]
    label: str = ""

    def __post_init__(self):
        insts = tuple(self.installations)
        if not insts:
            raise ValueError("a corpus needs at least one installation")
        sizes = {f.block_size for f in insts}
        if len(sizes) != 1:
            raise ValueError(f"installations disagree on block_size: {sorted(sizes)}")
        object.__setattr__(self, "installations", insts)

    def __len__(self) -> int:
        return len(self.installations)

    def __iter__(self):
        return iter(self.installations)

    @property
    def block_size(self) -> int:
        return self.installations[0].block_size


def file_universe(corpus: Corpus, mode: str = "intersection") -> FileUniverse:
    sets = [set(f.entries) for f in corpus]
    if mode == "intersection":
        paths = set.intersection(*sets)
    elif mode == "union":
        paths = set.union(*sets)
    else:
        raise ValueError(f"unknown universe mode {mode!r}")
    return FileUniverse(tuple(paths), mode)


def project_first_block(fsg: Fsg) -> Fsg:
    return fsg.replace(entries={p: b[:1] for p, b in fsg.entries.items()})


# --- persistence ---

def _dumps(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode()


def write_fsg(fsg: Fsg, sink: BinaryIO) -> int:
    """Write ``fsg`` as JSON Lines; returns the number of bytes written."""
    header = {
        "format": FORMAT_TAG,
        "device_label": fsg.device_label,
        "volume_uuid": fsg.volume_uuid.hex() if fsg.volume_uuid is not None else None,
        "block_size": fsg.block_size,
    }
    written = 0
    lines = [_dumps(header)] + [_dumps({"path": p, "blocks": list(b)}) for p, b in fsg.entries.items()]
    for line in lines:
        try:
            sink.write(line)
        except OSError as exc:
            raise FsgWriteError(f"write failed: {exc}", written) from exc
        written += len(line)
    return written


def read_fsg(source: BinaryIO) -> Fsg:
    header = None
    entries: dict[str, tuple[int, ...]] = {}
    for lineno, raw in enumerate(source, 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise FsgFormatError(f"parse error at line {lineno}: {exc}") from None
        if header is None:
            if not isinstance(obj, dict) or obj.get("format") != FORMAT_TAG:
                raise FsgFormatError(f"parse error at line {lineno}: missing {FORMAT_TAG} header")
            header = obj
            continue
        try:
            path, blocks = obj["path"], obj["blocks"]
            if not isinstance(path, str) or not all(isinstance(b, int) for b in blocks):
                raise TypeError("bad field types")
        except (KeyError, TypeError) as exc:
            raise FsgFormatError(f"parse error at line {lineno}: {exc}") from None
        if path in entries:
            raise FsgFormatError(f"duplicate entry {path!r} at line {lineno}")
        entries[path] = tuple(blocks)
    if header is None:
        raise FsgFormatError("parse error at line 1: empty input")
    uid = header.get("volume_uuid")
    try:
        return Fsg(device_label=header["device_label"], block_size=int(header["block_size"]),
                   entries=entries, volume_uuid=bytes.fromhex(uid) if uid else None)
    except (KeyError, ValueError) as exc:
        raise FsgFormatError(f"parse error: {exc}") from None


def ingest_debugfs_dump(source: BinaryIO, device_label: str, block_size: int) -> Fsg:
    """Parse ``path<TAB>b1,b2,...`` lines (one per file) into a genome."""
    entries: dict[str, tuple[int, ...]] = {}
    for lineno, raw in enumerate(source, 1):
        line = raw.decode("utf-8", "surrogateescape") if isinstance(raw, bytes) else raw
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise FsgFormatError(f"parse error at line {lineno}: missing tab")
        path, field = line.split("\t", 1)
        tokens = [t.strip() for t in field.split(",")] if field.strip() else []
        if not all(t.isdigit() for t in tokens):
            raise FsgFormatError(f"parse error at line {lineno}: non-numeric block")
        if path in entries:
            raise FsgFormatError(f"duplicate entry {path!r} at line {lineno}")
        entries[path] = tuple(int(t) for t in tokens)
    return Fsg(device_label=device_label, block_size=block_size, entries=entries)


def save_fsg(fsg: Fsg, path: str | os.PathLike) -> int:
    with open(path, "wb") as f:
        return write_fsg(fsg, f)


def load_fsg(path: str | os.PathLike) -> Fsg:
    with open(path, "rb") as f:
        return read_fsg(f)


def dumps_fsg(fsg: Fsg) -> bytes:
    buf = io.BytesIO()
    write_fsg(fsg, buf)
    return buf.getvalue()


def loads_fsg(data: bytes) -> Fsg:
    return read_fsg(io.BytesIO(data))


def save_corpus(corpus: Corpus, directory: str | os.PathLike) -> list[Path]:
    """Write one ``<device_label>.fsg`` file per installation."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fsg in corpus:
        target = out / f"{fsg.device_label}.fsg"
        save_fsg(fsg, target)
        written.append(target)
    return written


def load_corpus(directory: str | os.PathLike, label: str | None = None) -> Corpus:
    """Load every ``*.fsg`` file in ``directory`` (sorted by file name)."""
    d = Path(directory)
    files = sorted(d.glob("*.fsg"))
    if not files:
        raise FsgFormatError(f"no .fsg files in {d}")
    return Corpus(tuple(load_fsg(f) for f in files), label=label if label is not None else d.name)
