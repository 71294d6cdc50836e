import gzip
import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
TRUTH_FIXTURES = ["ext4_small", "ext4_1k", "ext4_empty"]


def fixture_bytes(name: str) -> bytes:
    return gzip.decompress((FIXTURES / f"{name}.img.gz").read_bytes())


def fixture_manifest(name: str) -> dict:
    return json.loads((FIXTURES / f"{name}.manifest.json").read_text())


def fixture_truth(name: str) -> dict[str, list[int]]:
    """debugfs leaf-extent block lists, parsed without fsgenome."""
    truth = {}
    for line in (FIXTURES / f"{name}.truth.tsv").read_text().splitlines():
        path, field = line.split("\t")
        truth[path] = [int(x) for x in field.split(",")] if field else []
    return truth


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("images")
    for gz in FIXTURES.glob("*.img.gz"):
        (d / gz.name[:-3]).write_bytes(gzip.decompress(gz.read_bytes()))
    return d


@pytest.fixture(scope="session")
def small_image(image_dir):
    return image_dir / "ext4_small.img"
