"""Diversity statistics over genome corpora.

Occurrence counting, per-file Shannon entropy and min-entropy, location
CDFs with a KS distance to the uniform law, the block-count histogram, the
corpus summary and the Hamming distance between genomes.

Counting is positional: a slot is one (installation, block position) pair of
a file. In first-block mode each installation contributes at most one slot
per file.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from collections import Counter
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .model import Corpus, FileUniverse, Fsg

MIB = 1 << 20


class MetricsError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class OccurrenceMatrix:
    """Sparse per-file location counts over a corpus.

    ``installs_per_file`` counts the installations that contributed at least
    one slot to a file; it is the min-entropy denominator and equals
    ``num_installations`` whenever the file is non-empty everywhere.
    """

    per_file: Mapping[str, Mapping[int, int]]
    num_installations: int
    slots_per_file: Mapping[str, int]
    installs_per_file: Mapping[str, int]

    def __contains__(self, path: str) -> bool:
        return path in self.per_file

    @property
    def paths(self) -> list[str]:
        return list(self.per_file)


def build_occurrence_matrix(corpus: Corpus, universe: FileUniverse | Iterable[str],
                            first_block_only: bool = False) -> OccurrenceMatrix:
    paths = list(universe.paths if isinstance(universe, FileUniverse) else universe)
    if not paths:
        raise MetricsError("empty file universe")
    counts: dict[str, Counter] = {p: Counter() for p in paths}
    slots = dict.fromkeys(paths, 0)
    installs = dict.fromkeys(paths, 0)
    for fsg in corpus:
        for p in paths:
            blocks = fsg.entries.get(p)
            if not blocks:
                continue
            if first_block_only:
                blocks = blocks[:1]
            counts[p].update(blocks)
            slots[p] += len(blocks)
            installs[p] += 1
    return OccurrenceMatrix(
        per_file={p: dict(sorted(c.items())) for p, c in counts.items()},
        num_installations=len(corpus),
        slots_per_file=slots,
        installs_per_file=installs,
    )


@dataclasses.dataclass(frozen=True)
class FileEntropy:
    shannon_bits: float
    min_entropy_bits: float


@dataclasses.dataclass(frozen=True)
class EntropyReport:
    per_file: Mapping[str, FileEntropy]
    corpus_size: int
    skipped: int = 0

    def shannon(self) -> dict[str, float]:
        return {p: e.shannon_bits for p, e in self.per_file.items()}

    def min_entropy(self) -> dict[str, float]:
        return {p: e.min_entropy_bits for p, e in self.per_file.items()}


def _min_entropy(counts: Mapping[int, int], n: int) -> float:
    v = max(counts.values())
    return -math.log2(v / n) if v != n else 0.0


def _shannon(counts: Mapping[int, int], slots: int) -> float:
    h = 0.0
    for c in counts.values():
        p = c / slots
        h -= p * math.log2(p)
    return h + 0.0


def min_entropy_per_file(m: OccurrenceMatrix) -> dict[str, float]:
    """Per-file ``-log2(max_count / installations)``; files with no slots are left out."""
    return {p: _min_entropy(c, m.installs_per_file[p]) for p, c in m.per_file.items() if c}


def shannon_entropy_per_file(m: OccurrenceMatrix) -> dict[str, float]:
    return {p: _shannon(c, m.slots_per_file[p]) for p, c in m.per_file.items() if c}


def entropy_report(m: OccurrenceMatrix) -> EntropyReport:
    shannon = shannon_entropy_per_file(m)
    mins = min_entropy_per_file(m)
    per_file = {p: FileEntropy(shannon[p], mins[p]) for p in shannon}
    return EntropyReport(per_file, m.num_installations, skipped=len(m.per_file) - len(per_file))


def location_cdf(m: OccurrenceMatrix, path: str) -> list[tuple[int, float]]:
    """Empirical CDF of a file's locations as ``(location, cumulative)`` steps."""
    if path not in m.per_file:
        raise MetricsError(f"file not in matrix: {path}")
    counts = m.per_file[path]
    slots = m.slots_per_file[path]
    out = []
    acc = 0
    for loc in sorted(counts):
        acc += counts[loc]
        out.append((loc, acc / slots))
    if out:
        out[-1] = (out[-1][0], 1.0)
    return out


def ks_distance_to_uniform(cdf: list[tuple[int, float]], support: tuple[int, int]) -> float:
    """Sup distance between a step CDF and the discrete uniform CDF on ``[lo, hi)``."""
    lo, hi = support
    if hi <= lo:
        raise MetricsError("degenerate support")
    if not cdf:
        raise MetricsError("empty CDF")
    if cdf[0][0] < lo or cdf[-1][0] >= hi:
        raise MetricsError("support does not cover the CDF")
    width = hi - lo
    d = 0.0
    prev = 0.0
    for loc, cum in cdf:
        d = max(d, abs(prev - (loc - lo) / width), abs(cum - (loc - lo + 1) / width))
        prev = cum
    return d


# --- single-genome tables ---

HISTOGRAM_BUCKETS = ((0, 9), (10, 99), (100, 499), (500, 999), (1000, 1999), (2000, 3999), (4000, None))


@dataclasses.dataclass(frozen=True)
class HistogramRow:
    low: int
    high: int | None
    count: int
    percent: float

    @property
    def bucket(self) -> str:
        return f"[{self.low}-{self.high}]" if self.high is not None else f">={self.low}"


def block_count_histogram(fsg: Fsg) -> list[HistogramRow]:
    counts = [0] * len(HISTOGRAM_BUCKETS)
    for blocks in fsg.entries.values():
        n = len(blocks)
        for i, (lo, hi) in enumerate(HISTOGRAM_BUCKETS):
            if n >= lo and (hi is None or n <= hi):
                counts[i] += 1
                break
    total = sum(counts)
    return [HistogramRow(lo, hi, c, 100.0 * c / total if total else 0.0)
            for (lo, hi), c in zip(HISTOGRAM_BUCKETS, counts)]


@dataclasses.dataclass(frozen=True)
class CorpusSummary:
    total_files: int
    total_blocks: int
    required_space: int

    @property
    def required_space_mib(self) -> float:
        return self.required_space / MIB


def corpus_summary(fsg: Fsg) -> CorpusSummary:
    blocks = sum(len(b) for b in fsg.entries.values())
    return CorpusSummary(len(fsg.entries), blocks, blocks * fsg.block_size)


# --- distances ---

def _paths(universe: FileUniverse | Iterable[str]) -> Iterable[str]:
    return universe.paths if isinstance(universe, FileUniverse) else universe


def file_hamming(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    """Positions that differ, plus the length difference."""
    return sum(x != y for x, y in zip(a, b)) + abs(len(a) - len(b))


def hamming_distance(a: Fsg, b: Fsg, universe: FileUniverse | Iterable[str]) -> int:
    total = 0
    for p in _paths(universe):
        la, lb = a.entries.get(p), b.entries.get(p)
        if la is None or lb is None:
            raise MetricsError(f"file absent from genome: {p}")
        total += file_hamming(la, lb)
    return total


def aligned_block_matrix(genomes: Sequence[Fsg], paths: Sequence[str]) -> np.ndarray | None:
    """Stack the genomes' block lists over ``paths`` into one row per genome.

    Returns None unless every genome holds every path with the same list
    length, which is the only case where positional comparison reduces to
    an element-wise one.
    """
    lengths = None
    rows = []
    for g in genomes:
        lists = [g.entries.get(p) for p in paths]
        if any(x is None for x in lists):
            return None
        these = [len(x) for x in lists]
        if lengths is None:
            lengths = these
        elif these != lengths:
            return None
        rows.append([b for x in lists for b in x])
    return np.array(rows, dtype=np.uint64).reshape(len(rows), sum(lengths or ()))


def pairwise_hamming(corpus: Corpus, universe: FileUniverse | Iterable[str]) -> dict[tuple[str, str], int]:
    """Distances for every unordered pair of installations, keyed by label."""
    paths = list(_paths(universe))
    insts = list(corpus)
    out = {}
    flat = aligned_block_matrix(insts, paths)
    for i, a in enumerate(insts):
        if flat is not None:
            dists = np.count_nonzero(flat[i + 1:] != flat[i], axis=1)
        else:
            dists = [hamming_distance(a, b, paths) for b in insts[i + 1:]]
        for b, d in zip(insts[i + 1:], dists):
            out[(a.device_label, b.device_label)] = int(d)
    return out


# --- CSV output ---

def write_entropy_csv(report: EntropyReport, out: TextIO, columns=("shannon_bits", "min_entropy_bits")) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["path", *columns])
    for path, e in report.per_file.items():
        w.writerow([path, *(repr(getattr(e, c)) for c in columns)])


def write_cdf_csv(m: OccurrenceMatrix, out: TextIO, paths: Iterable[str] | None = None) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["path", "location", "cumulative"])
    for p in (m.paths if paths is None else paths):
        if not m.per_file[p]:
            continue
        for loc, cum in location_cdf(m, p):
            w.writerow([p, loc, repr(cum)])


def entropy_csv(report: EntropyReport) -> str:
    buf = io.StringIO()
    write_entropy_csv(report, buf)
    return buf.getvalue()
