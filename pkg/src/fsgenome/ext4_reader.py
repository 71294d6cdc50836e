"""Read-only ext4 image parsing and per-file block resolution.

Only what is needed to list the physical data blocks of every regular file:
superblock, group descriptors, inodes, extent trees and linear directory
blocks. Checksums are skipped, never verified.
"""
from __future__ import annotations

import dataclasses
import mmap
import os
import struct
import uuid
from typing import BinaryIO, Iterator, Union

from .model import Fsg

EXT4_MAGIC = 0xEF53
EXTENT_MAGIC = 0xF30A
SUPERBLOCK_OFFSET = 1024
SUPERBLOCK_SIZE = 1024
ROOT_INO = 2

INCOMPAT_FILETYPE = 0x2
INCOMPAT_EXTENTS = 0x40
INCOMPAT_64BIT = 0x80
INCOMPAT_FLEX_BG = 0x200

INCOMPAT_NAMES = {
    0x1: "compression",
    0x2: "filetype",
    0x4: "recover",
    0x8: "journal_dev",
    0x10: "meta_bg",
    0x40: "extents",
    0x80: "64bit",
    0x100: "mmp",
    0x200: "flex_bg",
    0x400: "ea_inode",
    0x1000: "dirdata",
    0x2000: "metadata_csum_seed",
    0x4000: "large_dir",
    0x8000: "inline_data",
    0x10000: "encrypt",
    0x20000: "casefold",
}
SUPPORTED_INCOMPAT = INCOMPAT_FILETYPE | INCOMPAT_EXTENTS | INCOMPAT_64BIT | INCOMPAT_FLEX_BG

EXTENTS_FL = 0x80000
INLINE_DATA_FL = 0x10000000

S_IFMT = 0xF000
_FILE_TYPES = {0x8000: "regular", 0x4000: "directory", 0xA000: "symlink"}

# The genome covers regular files only; directory data blocks, symlink
# targets and device nodes are left out.
GENOME_FILE_TYPES = frozenset({"regular"})

MAX_EXTENT_LEN = 32768


class Ext4Error(ValueError):
    """Raised for any image that cannot be read as a supported ext4 filesystem."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NotExt4Error(Ext4Error):
    pass


class ImageTruncatedError(Ext4Error):
    pass


class UnsupportedFeatureError(Ext4Error):
    pass


class CorruptExtentTreeError(Ext4Error):
    pass


class LegacyBlockMapError(Ext4Error):
    pass


class CorruptDirectoryError(Ext4Error):
    pass


class DirectoryCycleError(Ext4Error):
    pass


@dataclasses.dataclass(frozen=True)
class Superblock:
    block_size: int
    blocks_count: int
    inodes_count: int
    blocks_per_group: int
    inodes_per_group: int
    inode_size: int
    first_data_block: int
    feature_incompat: int
    volume_uuid: bytes
    magic: int
    desc_size: int

    @property
    def group_count(self) -> int:
        n = self.blocks_count - self.first_data_block
        return -(-n // self.blocks_per_group)

    @property
    def is_64bit(self) -> bool:
        return bool(self.feature_incompat & INCOMPAT_64BIT)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Superblock":
        (inodes_count, blocks_lo, _r, _free_b, _free_i, first_data_block, log_block_size,
         _log_cluster, blocks_per_group, _cpg, inodes_per_group) = struct.unpack_from("<11I", raw, 0)
        magic, = struct.unpack_from("<H", raw, 0x38)
        if magic != EXT4_MAGIC:
            raise NotExt4Error(f"not an ext4 image (magic 0x{magic:04X})")
        rev_level, = struct.unpack_from("<I", raw, 0x4C)
        inode_size = struct.unpack_from("<H", raw, 0x58)[0] if rev_level >= 1 else 128
        incompat, = struct.unpack_from("<I", raw, 0x60)
        unsupported = incompat & ~SUPPORTED_INCOMPAT
        if unsupported:
            names = [INCOMPAT_NAMES.get(bit, hex(bit)) for bit in _bits(unsupported)]
            raise UnsupportedFeatureError(f"unsupported feature: {', '.join(names)}")
        blocks_count = blocks_lo
        desc_size = 32
        if incompat & INCOMPAT_64BIT:
            blocks_count |= struct.unpack_from("<I", raw, 0x150)[0] << 32
            desc_size = struct.unpack_from("<H", raw, 0xFE)[0] or 64
        if log_block_size > 6:
            raise NotExt4Error(f"not an ext4 image (log block size {log_block_size})")
        block_size = 1024 << log_block_size
        if not blocks_per_group or blocks_per_group > 8 * block_size or not inodes_per_group:
            raise NotExt4Error("not an ext4 image (bad group geometry)")
        return cls(
            block_size=block_size,
            blocks_count=blocks_count,
            inodes_count=inodes_count,
            blocks_per_group=blocks_per_group,
            inodes_per_group=inodes_per_group,
            inode_size=inode_size,
            first_data_block=first_data_block,
            feature_incompat=incompat,
            volume_uuid=bytes(raw[0x68:0x78]),
            magic=magic,
            desc_size=desc_size,
        )


def _bits(value: int) -> Iterator[int]:
    bit = 1
    while bit <= value:
        if value & bit:
            yield bit
        bit <<= 1


@dataclasses.dataclass(frozen=True)
class GroupDescriptor:
    block_bitmap_loc: int
    inode_bitmap_loc: int
    inode_table_loc: int
    free_blocks: int
    free_inodes: int

    @classmethod
    def from_bytes(cls, raw: bytes, wide: bool) -> "GroupDescriptor":
        bb, ib, it, fb, fi = struct.unpack_from("<IIIHH", raw, 0)
        if wide:
            bb_hi, ib_hi, it_hi, fb_hi, fi_hi = struct.unpack_from("<IIIHH", raw, 0x20)
            bb |= bb_hi << 32
            ib |= ib_hi << 32
            it |= it_hi << 32
            fb |= fb_hi << 16
            fi |= fi_hi << 16
        return cls(bb, ib, it, fb, fi)


@dataclasses.dataclass(frozen=True)
class InodeRecord:
    ino: int
    file_type: str
    size: int
    flags: int
    block_map_raw: bytes

    @property
    def uses_extents(self) -> bool:
        return bool(self.flags & EXTENTS_FL)

    @property
    def has_inline_data(self) -> bool:
        return bool(self.flags & INLINE_DATA_FL)


@dataclasses.dataclass(frozen=True)
class Extent:
    logical_start: int
    physical_start: int
    length: int

    def blocks(self) -> range:
        return range(self.physical_start, self.physical_start + self.length)


@dataclasses.dataclass(frozen=True)
class FileRecord:
    path: str
    ino: int
    blocks: tuple[int, ...]

    @property
    def top_dir(self) -> str:
        return self.path.lstrip("/").split("/", 1)[0]


class Ext4Image:
    """Immutable view of an ext4 image held in memory or memory-mapped."""

    def __init__(self, data: Union[bytes, memoryview, mmap.mmap], closer=None):
        self._data = data
        self._closer = closer
        if len(data) < SUPERBLOCK_OFFSET + SUPERBLOCK_SIZE:
            raise ImageTruncatedError("image truncated (no room for a superblock)")
        self.superblock = Superblock.from_bytes(self._read(SUPERBLOCK_OFFSET, SUPERBLOCK_SIZE))
        sb = self.superblock
        gdt_offset = (sb.first_data_block + 1) * sb.block_size
        raw = self._read(gdt_offset, sb.group_count * sb.desc_size)
        self.groups = tuple(
            GroupDescriptor.from_bytes(raw[i * sb.desc_size:(i + 1) * sb.desc_size], sb.is_64bit)
            for i in range(sb.group_count)
        )

    def close(self) -> None:
        if self._closer is not None:
            self._closer()
            self._closer = None

    def __enter__(self) -> "Ext4Image":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def block_size(self) -> int:
        return self.superblock.block_size

    def _read(self, offset: int, length: int) -> bytes:
        end = offset + length
        if offset < 0 or end > len(self._data):
            raise ImageTruncatedError(f"image truncated (need bytes {offset}..{end}, "
                                      f"image has {len(self._data)})")
        return bytes(self._data[offset:end])

    def read_block(self, block: int) -> bytes:
        if block >= self.superblock.blocks_count:
            raise ImageTruncatedError(f"image truncated (block {block} beyond blocks_count)")
        return self._read(block * self.block_size, self.block_size)


def open_image(source: Union[str, os.PathLike, bytes, bytearray, BinaryIO]) -> Ext4Image:
    """Open an ext4 image from a path, a bytes object or a seekable binary stream.

    Paths are memory-mapped read-only; streams are read fully into memory.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        return Ext4Image(bytes(source))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            if os.fstat(f.fileno()).st_size == 0:
                return Ext4Image(b"")
            mm = mmap.mmap(f.fileno(), 0, access=mmap.ACCESS_READ)
        try:
            return Ext4Image(mm, closer=mm.close)
        except Exception:
            mm.close()
            raise
    source.seek(0)
    return Ext4Image(source.read())


def read_inode(img: Ext4Image, ino: int) -> InodeRecord:
    sb = img.superblock
    if not 1 <= ino <= sb.inodes_count:
        raise Ext4Error(f"inode out of range: {ino}")
    group, index = divmod(ino - 1, sb.inodes_per_group)
    offset = img.groups[group].inode_table_loc * sb.block_size + index * sb.inode_size
    raw = img._read(offset, min(sb.inode_size, 160))
    mode, _uid, size_lo = struct.unpack_from("<HHI", raw, 0)
    flags, = struct.unpack_from("<I", raw, 0x20)
    size_hi, = struct.unpack_from("<I", raw, 0x6C)
    return InodeRecord(
        ino=ino,
        file_type=_FILE_TYPES.get(mode & S_IFMT, "other"),
        size=size_lo | (size_hi << 32),
        flags=flags,
        block_map_raw=raw[0x28:0x28 + 60],
    )


def _extent_node(img: Ext4Image, node: bytes, depth_expected: int | None, seen: set) -> Iterator[Extent]:
    if len(node) < 12:
        raise CorruptExtentTreeError("corrupt extent tree (short node)")
    magic, entries, max_entries, depth = struct.unpack_from("<HHHH", node, 0)
    if magic != EXTENT_MAGIC:
        raise CorruptExtentTreeError(f"corrupt extent tree (node magic 0x{magic:04X})")
    if entries > max_entries or 12 + 12 * entries > len(node):
        raise CorruptExtentTreeError("corrupt extent tree (entry count)")
    if depth_expected is not None and depth != depth_expected:
        raise CorruptExtentTreeError("corrupt extent tree (depth mismatch)")
    blocks_count = img.superblock.blocks_count
    for i in range(entries):
        off = 12 + 12 * i
        if depth == 0:
            lblk, length, start_hi, start_lo = struct.unpack_from("<IHHI", node, off)
            if length > MAX_EXTENT_LEN:
                length -= MAX_EXTENT_LEN  # unwritten extent; blocks are still allocated
            start = start_lo | (start_hi << 32)
            if start + length > blocks_count:
                raise CorruptExtentTreeError("corrupt extent tree (extent beyond filesystem)")
            yield Extent(lblk, start, length)
        else:
            _lblk, leaf_lo, leaf_hi = struct.unpack_from("<IIH", node, off)
            child = leaf_lo | (leaf_hi << 32)
            if child in seen or child >= blocks_count:
                raise CorruptExtentTreeError(f"corrupt extent tree (bad index block {child})")
            seen.add(child)
            yield from _extent_node(img, img.read_block(child), depth - 1, seen)


def extents(img: Ext4Image, inode: InodeRecord) -> list[Extent]:
    """Leaf extents of an inode, sorted by logical start."""
    if inode.has_inline_data:
        return []
    if not inode.uses_extents:
        if inode.file_type in ("regular", "directory") and inode.size > 0:
            raise LegacyBlockMapError("unsupported legacy block map (indirect blocks)")
        return []
    found = list(_extent_node(img, inode.block_map_raw, None, set()))
    found.sort(key=lambda e: e.logical_start)
    return found


def resolve_blocks(img: Ext4Image, inode: InodeRecord) -> list[int]:
    """Physical data blocks of a file in ascending logical order; holes are skipped."""
    blocks: list[int] = []
    for ext in extents(img, inode):
        blocks.extend(ext.blocks())
    return blocks


def _dir_entries(img: Ext4Image, inode: InodeRecord) -> Iterator[tuple[str, int]]:
    bs = img.block_size
    inodes_count = img.superblock.inodes_count
    for block in resolve_blocks(img, inode):
        raw = img.read_block(block)
        pos = 0
        while pos + 8 <= bs:
            ino, rec_len, name_len = struct.unpack_from("<IHB", raw, pos)
            if rec_len < 8 or rec_len % 4 or pos + rec_len > bs or 8 + name_len > rec_len:
                raise CorruptDirectoryError(f"corrupt directory (bad record at inode {inode.ino}, "
                                            f"block {block}, offset {pos})")
            if ino:
                name = raw[pos + 8:pos + 8 + name_len].decode("utf-8", "surrogateescape")
                if name not in (".", ".."):
                    if ino > inodes_count:
                        raise CorruptDirectoryError(
                            f"corrupt directory (entry {name!r} points at inode {ino})")
                    yield name, ino
            pos += rec_len


def walk_tree(img: Ext4Image) -> Iterator[FileRecord]:
    """Yield every regular file depth-first from the root, names sorted at each level."""
    root = read_inode(img, ROOT_INO)
    if root.file_type != "directory":
        raise CorruptDirectoryError("corrupt directory (root inode is not a directory)")
    yield from _walk(img, root, "", {ROOT_INO})


def _walk(img: Ext4Image, dir_inode: InodeRecord, prefix: str, on_path: set) -> Iterator[FileRecord]:
    try:
        listing = sorted(_dir_entries(img, dir_inode))
    except Ext4Error as exc:
        raise type(exc)(str(exc), path=prefix or "/") from exc
    for name, ino in listing:
        path = f"{prefix}/{name}"
        child = read_inode(img, ino)
        if child.file_type == "directory":
            if ino in on_path:
                raise DirectoryCycleError(f"directory cycle at {path} (inode {ino})")
            on_path.add(ino)
            yield from _walk(img, child, path, on_path)
            on_path.discard(ino)
        elif child.file_type in GENOME_FILE_TYPES:
            try:
                blocks = resolve_blocks(img, child)
            except Ext4Error as exc:
                raise type(exc)(str(exc), path=path) from exc
            yield FileRecord(path, ino, tuple(blocks))


def extract_fsg(img: Ext4Image, first_block_only: bool = False, device_label: str | None = None) -> Fsg:
    """Genome of an image: one entry per regular file."""
    entries = {}
    for rec in walk_tree(img):
        blocks = rec.blocks[:1] if first_block_only else rec.blocks
        entries[rec.path] = blocks
    sb = img.superblock
    label = device_label if device_label is not None else str(uuid.UUID(bytes=sb.volume_uuid))
    return Fsg(device_label=label, volume_uuid=sb.volume_uuid, block_size=sb.block_size,
               entries=entries)
