"""Seeded simulator of installer writes under delayed, multi-block allocation.

One installation is replayed as follows. Every random draw comes from
:class:`fsgenome.rng.SplitMix64` seeded with the installation seed.

1. Files of ``file_plan`` are written in order, one block per write. A write
   adds one pending block to the file's write-cache entry, creating the entry
   (with the next arrival index) if the file has none.
2. After each write, ``rng.random() < 1 / sync_mean_writes`` triggers a sync.
   After the last write a final sync flushes whatever is left.
3. A sync walks cache entries in arrival order and forms allocation groups.
   An entry with ``pending >= small_file_threshold`` is its own group and
   uses the file's goal. Smaller entries join the group of CPU slot
   ``arrival % cpu_slots`` and share that slot's goal. Groups are allocated
   in the order of their first entry.
4. Goals: a file's goal is the block after its last allocated block, or the
   start of its top-level directory's group when it has none yet. Distinct
   top-level directories get groups round-robin in order of first
   appearance in the plan. A CPU slot's goal is the block after its last
   allocation; an unused slot takes the goal of its group's first file.
5. A group of ``n`` blocks goes to the first run of ``n`` free blocks
   starting at or after the goal; if none exists before the disk end the
   search restarts at block 0. Runs never wrap. If no run exists the goal is
   redrawn as ``rng.below(n_groups) * group_size`` and the ``n`` blocks are
   taken one by one as the first free blocks at or after it, wrapping.
6. Blocks go to the group's entries in arrival order. Afterwards every
   served file's goal, and the CPU slot's goal, move to the block after the
   last one handed out (modulo ``disk_blocks``). The cache is then emptied.

Bad blocks are never free. Zero-size files get an empty block list.
"""
from __future__ import annotations

import dataclasses
import json
import os
from importlib import resources
from typing import Sequence

import numpy as np

from .model import Corpus, Fsg
from .rng import SplitMix64, derive_seed

STANDARD_MIX_BUCKETS = ((1, 9), (10, 99), (100, 499), (500, 999), (1000, 1999), (2000, 3999), (4000, 8000))
STANDARD_MIX_COUNTS = (24108, 2096, 154, 24, 3, 4, 0)
TOP_DIR_WEIGHTS = (("usr", 0.62), ("lib", 0.14), ("etc", 0.10), ("var", 0.08), ("boot", 0.03),
                   ("root", 0.03))


class SimulationError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class SimConfig:
    disk_blocks: int
    file_plan: tuple[tuple[str, int], ...]
    block_size: int = 4096
    sync_mean_writes: float = 16.0
    cpu_slots: int = 4
    group_size: int = 4096
    small_file_threshold: int = 16
    bad_blocks: frozenset[int] = frozenset()
    seed: int = 0

    def __post_init__(self):
        plan = tuple((str(p), int(n)) for p, n in self.file_plan)
        object.__setattr__(self, "file_plan", plan)
        object.__setattr__(self, "bad_blocks", frozenset(int(b) for b in self.bad_blocks))
        if self.disk_blocks <= 0 or self.group_size <= 0 or self.disk_blocks % self.group_size:
            raise ValueError("group_size must divide disk_blocks")
        if self.sync_mean_writes < 1:
            raise ValueError("sync_mean_writes must be >= 1")
        if self.cpu_slots < 1:
            raise ValueError("cpu_slots must be >= 1")
        if self.small_file_threshold < 1:
            raise ValueError("small_file_threshold must be >= 1")
        if any(not 0 <= b < self.disk_blocks for b in self.bad_blocks):
            raise ValueError("bad block outside the disk")
        paths = [p for p, _ in plan]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate path in file_plan")
        if any(n < 0 for _, n in plan):
            raise ValueError("negative file size in file_plan")

    @property
    def n_groups(self) -> int:
        return self.disk_blocks // self.group_size

    @property
    def total_blocks(self) -> int:
        return sum(n for _, n in self.file_plan)

    def to_dict(self) -> dict:
        return {
            "disk_blocks": self.disk_blocks,
            "block_size": self.block_size,
            "sync_mean_writes": self.sync_mean_writes,
            "cpu_slots": self.cpu_slots,
            "group_size": self.group_size,
            "small_file_threshold": self.small_file_threshold,
            "bad_blocks": sorted(self.bad_blocks),
            "seed": self.seed,
            "file_plan": [[p, n] for p, n in self.file_plan],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        missing = {"disk_blocks", "file_plan"} - set(d)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        d = dict(d)
        d["file_plan"] = tuple(tuple(x) for x in d["file_plan"])
        d["bad_blocks"] = frozenset(d.get("bad_blocks", ()))
        return cls(**d)

    def to_json(self) -> str:
        d = self.to_dict()
        plan = d.pop("file_plan")
        head = json.dumps(d, indent=1)[:-2]
        rows = ",\n".join("  " + json.dumps(row) for row in plan)
        return f'{head},\n "file_plan": [\n{rows}\n ]\n}}\n'

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))


def load_config(path: str | os.PathLike) -> SimConfig:
    with open(path, encoding="utf-8") as f:
        return SimConfig.from_json(f.read())


def _top_dir(path: str) -> str:
    return path.lstrip("/").split("/", 1)[0]


def _bucket_counts(n_files: int, counts: Sequence[int]) -> list[int]:
    """Largest-remainder apportionment of ``n_files`` over the bucket counts."""
    total = sum(counts)
    quotas = [n_files * c / total for c in counts]
    out = [int(q) for q in quotas]
    order = sorted(range(len(counts)), key=lambda i: (out[i] - quotas[i], i))
    for i in order[:n_files - sum(out)]:
        out[i] += 1
    return out


def standard_mix_plan(n_files: int = 1000, seed: int = 2013,
                      counts: Sequence[int] = STANDARD_MIX_COUNTS) -> tuple[tuple[str, int], ...]:
    """File plan whose size mix follows a block-count histogram.

    Bucket sizes are apportioned exactly, so every bucket share is within
    ``100 / n_files`` points of the target. Sizes are uniform within a
    bucket; empty files are not generated.
    """
    rng = SplitMix64(seed)
    sizes = []
    for (lo, hi), k in zip(STANDARD_MIX_BUCKETS, _bucket_counts(n_files, counts)):
        sizes += [lo + rng.below(hi - lo + 1) for _ in range(k)]
    for i in range(len(sizes) - 1, 0, -1):
        j = rng.below(i + 1)
        sizes[i], sizes[j] = sizes[j], sizes[i]
    cum = np.cumsum([w for _, w in TOP_DIR_WEIGHTS])
    plan = []
    for i, size in enumerate(sizes):
        pkg = i // 25
        top = TOP_DIR_WEIGHTS[int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))][0]
        plan.append((f"/{top}/pkg{pkg:03d}/f{i:05d}", size))
    return tuple(plan)


def default_config() -> SimConfig:
    """The bundled 1,000-file configuration."""
    text = resources.files("fsgenome").joinpath("data/default_config.json").read_text("utf-8")
    return SimConfig.from_json(text)


def _find_run(free: np.ndarray, goal: int, n: int) -> int | None:
    disk = len(free)
    for lo, hi in ((goal, disk), (0, min(goal + n - 1, disk))):
        p = lo
        while p + n <= hi:
            start = _first(free, p, hi, True)
            if start is None or start + n > hi:
                break
            stop = _first(free, start, start + n, False)
            if stop is None:
                return start
            p = stop + 1
    return None


def _first(free: np.ndarray, lo: int, hi: int, value: bool, chunk: int = 4096) -> int | None:
    """First index in [lo, hi) whose bitmap value equals ``value``."""
    while lo < hi:
        seg = free[lo:min(hi, lo + chunk)]
        hit = np.flatnonzero(seg == value)
        if hit.size:
            return lo + int(hit[0])
        lo += chunk
    return None


class _Installation:
    def __init__(self, cfg: SimConfig, seed: int):
        self.cfg = cfg
        self.rng = SplitMix64(seed)
        self.free = np.ones(cfg.disk_blocks, dtype=bool)
        if cfg.bad_blocks:
            self.free[list(cfg.bad_blocks)] = False
        self.top_goal: dict[str, int] = {}
        for path, _ in cfg.file_plan:
            top = _top_dir(path)
            if top not in self.top_goal:
                self.top_goal[top] = (len(self.top_goal) % cfg.n_groups) * cfg.group_size
        self.file_goal: dict[str, int] = {}
        self.cpu_goal: dict[int, int] = {}
        self.cache: dict[str, list[int]] = {}  # path -> [pending, arrival]
        self.arrival = 0
        self.blocks: dict[str, list[int]] = {p: [] for p, _ in cfg.file_plan}

    def sync_due(self) -> bool:
        return self.rng.random() < 1.0 / self.cfg.sync_mean_writes

    def redraw_goal(self) -> int:
        return self.rng.below(self.cfg.n_groups) * self.cfg.group_size

    def run(self) -> dict[str, list[int]]:
        for path, size in self.cfg.file_plan:
            for _ in range(size):
                entry = self.cache.get(path)
                if entry is None:
                    entry = self.cache[path] = [0, self.arrival]
                    self.arrival += 1
                entry[0] += 1
                if self.sync_due():
                    self.flush()
        self.flush()
        return self.blocks

    def _goal_for(self, path: str) -> int:
        goal = self.file_goal.get(path)
        return self.top_goal[_top_dir(path)] if goal is None else goal

    def flush(self) -> None:
        cfg = self.cfg
        groups: dict[tuple, list[tuple[str, int]]] = {}
        for path, (pending, arrival) in self.cache.items():
            if pending >= cfg.small_file_threshold:
                key = ("file", path)
            else:
                key = ("cpu", arrival % cfg.cpu_slots)
            groups.setdefault(key, []).append((path, pending))
        for key, members in groups.items():
            if key[0] == "file":
                goal = self._goal_for(key[1])
            else:
                goal = self.cpu_goal.get(key[1])
                if goal is None:
                    goal = self._goal_for(members[0][0])
            got = self._allocate(goal, sum(n for _, n in members))
            pos = 0
            for path, n in members:
                self.blocks[path].extend(got[pos:pos + n])
                pos += n
                self.file_goal[path] = (got[pos - 1] + 1) % cfg.disk_blocks
            if key[0] == "cpu":
                self.cpu_goal[key[1]] = (got[-1] + 1) % cfg.disk_blocks
        self.cache.clear()

    def _allocate(self, goal: int, n: int) -> list[int]:
        start = _find_run(self.free, goal, n)
        if start is not None:
            self.free[start:start + n] = False
            return list(range(start, start + n))
        goal = self.redraw_goal()
        picked = np.flatnonzero(self.free[goal:])[:n] + goal
        if picked.size < n:
            picked = np.concatenate([picked, np.flatnonzero(self.free[:goal])[:n - picked.size]])
        self.free[picked] = False
        return [int(b) for b in picked]


def _check_capacity(cfg: SimConfig) -> None:
    capacity = cfg.disk_blocks - len(cfg.bad_blocks)
    used = 0
    for path, size in cfg.file_plan:
        used += size
        if used > capacity:
            raise SimulationError(f"disk full at path {path}")


def simulate_installation(cfg: SimConfig, seed: int | None = None, device_label: str = "sim") -> Fsg:
    """Genome of one simulated installation; a pure function of ``(cfg, seed)``."""
    _check_capacity(cfg)
    blocks = _Installation(cfg, cfg.seed if seed is None else seed).run()
    return Fsg(device_label=device_label, block_size=cfg.block_size, entries=blocks)


def simulate_corpus(cfg: SimConfig, n: int, base_seed: int | None = None) -> Corpus:
    """``n`` installations; installation ``i`` uses ``derive_seed(base_seed, i)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    base = cfg.seed if base_seed is None else base_seed
    return Corpus(tuple(simulate_installation(cfg, derive_seed(base, i), device_label=f"install-{i}")
                        for i in range(n)), label=f"sim-{base}")
