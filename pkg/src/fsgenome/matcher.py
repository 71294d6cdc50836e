"""Device identification and ownership verification from genomes."""
from __future__ import annotations

import dataclasses
import functools
import json
import os
import re
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .metrics import aligned_block_matrix, file_hamming
from .model import FileUniverse, Fsg, load_fsg, save_fsg

DEFAULT_THRESHOLD = 0.9
MANIFEST_NAME = "manifest.json"


class MatchError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class MatchScore:
    similarity: float
    raw_distance: int
    slots: int


@dataclasses.dataclass(frozen=True)
class Identification:
    """Outcome of :func:`identify`. ``label`` is None when nothing matched."""

    label: str | None
    score: MatchScore
    tied: tuple[str, ...] = ()

    @property
    def matched(self) -> bool:
        return self.label is not None

    @property
    def is_tie(self) -> bool:
        return len(self.tied) > 1


@dataclasses.dataclass(frozen=True)
class Verification:
    accepted: bool
    score: MatchScore


def _universe_paths(universe: FileUniverse | Iterable[str]) -> tuple[str, ...]:
    if isinstance(universe, FileUniverse):
        return universe.paths
    return tuple(sorted(set(universe)))


def _score(a: Mapping[str, tuple], b: Mapping[str, tuple], paths: Iterable[str]) -> MatchScore:
    distance = slots = 0
    for p in paths:
        la, lb = a[p], b[p]
        distance += file_hamming(la, lb)
        slots += max(len(la), len(lb))
    sim = 1.0 - distance / slots if slots else 1.0
    return MatchScore(sim, distance, slots)


def similarity(a: Fsg, b: Fsg, universe: FileUniverse | Iterable[str]) -> MatchScore:
    """Share of (file, position) slots where both genomes use the same block."""
    paths = _universe_paths(universe)
    if not paths:
        raise MatchError("empty file universe")
    for g in (a, b):
        missing = [p for p in paths if p not in g.entries]
        if missing:
            raise MatchError(f"file absent from genome {g.device_label}: {missing[0]}")
    return _score(a.entries, b.entries, paths)


@dataclasses.dataclass(frozen=True)
class EnrolledSet:
    """Reference fingerprints, each restricted to ``reference_universe``."""

    fingerprints: Mapping[str, Fsg]
    reference_universe: FileUniverse
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        paths = self.reference_universe.paths
        norm = {}
        for label in sorted(self.fingerprints):
            fsg = self.fingerprints[label]
            missing = [p for p in paths if p not in fsg.entries]
            if missing:
                raise MatchError(f"fingerprint {label} lacks reference files: {missing[:5]}")
            norm[label] = fsg.restrict(paths)
        object.__setattr__(self, "fingerprints", norm)

    @classmethod
    def enroll(cls, genomes: Iterable[Fsg], reference_universe: FileUniverse | Iterable[str],
               threshold: float = DEFAULT_THRESHOLD) -> "EnrolledSet":
        universe = reference_universe if isinstance(reference_universe, FileUniverse) \
            else FileUniverse(tuple(reference_universe))
        fps = {}
        for g in genomes:
            if g.device_label in fps:
                raise MatchError(f"duplicate device label {g.device_label}")
            fps[g.device_label] = g
        return cls(fps, universe, threshold)

    def __len__(self) -> int:
        return len(self.fingerprints)

    @functools.cached_property
    def _aligned(self) -> np.ndarray | None:
        return aligned_block_matrix(list(self.fingerprints.values()), self.reference_universe.paths)

    def save(self, directory: str | os.PathLike) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        devices = []
        for i, (label, fsg) in enumerate(self.fingerprints.items()):
            fname = f"{i:04d}-{re.sub(r'[^A-Za-z0-9._-]', '_', label)}.fsg"
            save_fsg(fsg, d / fname)
            devices.append({"label": label, "file": fname})
        manifest = {
            "format": "enrolled/1",
            "devices": devices,
            "reference_universe": list(self.reference_universe.paths),
            "universe_mode": self.reference_universe.mode,
            "threshold": self.threshold,
        }
        (d / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "EnrolledSet":
        d = Path(directory)
        try:
            manifest = json.loads((d / MANIFEST_NAME).read_text(encoding="utf-8"))
            devices = manifest["devices"]
            universe = FileUniverse(tuple(manifest["reference_universe"]),
                                    manifest.get("universe_mode", "intersection"))
        except (OSError, KeyError, ValueError) as exc:
            raise MatchError(f"bad enrolled set at {d}: {exc}") from exc
        fps = {}
        for dev in devices:
            fps[dev["label"]] = load_fsg(d / dev["file"]).replace(device_label=dev["label"])
        return cls(fps, universe, float(manifest.get("threshold", DEFAULT_THRESHOLD)))


def identify(candidate: Fsg, enrolled: EnrolledSet, threshold: float | None = None) -> Identification:
    """Best-scoring enrolled device, if its score reaches ``threshold``.

    Equal best scores resolve to the smallest label; all tied labels are
    reported in ``tied``.
    """
    if not enrolled.fingerprints:
        raise MatchError("enrolled set is empty")
    threshold = enrolled.threshold if threshold is None else threshold
    paths = enrolled.reference_universe.paths
    missing = [p for p in paths if p not in candidate.entries]
    if missing:
        raise MatchError(f"candidate incomplete, missing: {', '.join(missing)}")
    labels = list(enrolled.fingerprints)
    enrolled_flat = enrolled._aligned
    cand_flat = None
    if enrolled_flat is not None:
        first = enrolled.fingerprints[labels[0]]
        cand_flat = aligned_block_matrix([candidate, first], paths)
    if cand_flat is not None:
        slots = cand_flat.shape[1]
        dists = np.count_nonzero(enrolled_flat != cand_flat[0], axis=1)
        scores = {label: MatchScore(1.0 - int(d) / slots if slots else 1.0, int(d), slots)
                  for label, d in zip(labels, dists)}
    else:
        scores = {label: _score(candidate.entries, enrolled.fingerprints[label].entries, paths)
                  for label in labels}
    best = max(s.similarity for s in scores.values())
    tied = tuple(sorted(label for label, s in scores.items() if s.similarity == best))
    top = scores[tied[0]]
    if best >= threshold:
        return Identification(tied[0], top, tied)
    return Identification(None, top, tied)


def verify_ownership(candidate: Fsg, reference: Fsg, readonly_universe: FileUniverse | Iterable[str],
                     threshold: float = DEFAULT_THRESHOLD) -> Verification:
    """Compare only the declared read-only files; everything else on the candidate is ignored.

    A read-only file missing from the candidate counts as an empty block list,
    so every one of its reference slots is a mismatch.
    """
    paths = _universe_paths(readonly_universe)
    if not paths:
        raise MatchError("empty reference universe")
    missing = [p for p in paths if p not in reference.entries]
    if missing:
        raise MatchError(f"reference lacks read-only files: {missing[:5]}")
    cand = {p: candidate.entries.get(p, ()) for p in paths}
    score = _score(cand, reference.entries, paths)
    return Verification(score.similarity >= threshold, score)
