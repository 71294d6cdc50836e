"""Rebuild the committed ext4 fixture images and their ground truth.

Needs e2fsprogs (mke2fs, debugfs, dumpe2fs). Ground truth never touches
fsgenome: file lists come from the staging tree, block lists from the leaf
extents printed by ``debugfs dump_extents``.

    python tests/fixtures/build_fixtures.py
"""
import gzip
import json
import os
import random
import re
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
SBIN = ["/sbin", "/usr/sbin"]
FIXED_UUID = "5f5e4d3c-2b1a-4098-8776-655443322110"
ENV = dict(os.environ, E2FSPROGS_FAKE_TIME="1000000000")


def tool(name):
    found = shutil.which(name)
    if found:
        return found
    for d in SBIN:
        p = Path(d) / name
        if p.exists():
            return str(p)
    sys.exit(f"{name} not found")


def blob(rng, n):
    """Compressible, never-zero content (zero blocks could be stored as holes)."""
    unit = bytes(rng.randrange(1, 256) for _ in range(16))
    return (unit * (n // 16 + 1))[:n]


def write_sparse(path, block_size, runs):
    """runs: list of (logical_block, nblocks) data regions; the rest are holes."""
    end = max(lb + n for lb, n in runs)
    with open(path, "wb") as f:
        f.truncate(end * block_size)
        for lb, n in runs:
            f.seek(lb * block_size)
            f.write(blob(random.Random(lb), n * block_size))


def populate_small(root, rng):
    bs = 4096
    (root / "etc").mkdir()
    (root / "etc" / "hostname").write_bytes(b"fsg-fixture\n")
    (root / "a").mkdir()
    (root / "a" / "b.txt").write_bytes(b"b" * 100)
    (root / "a" / "c.txt").write_bytes(b"c" * 5000)
    for top in ["boot", "lib", "root", "usr", "var"]:
        (root / top).mkdir()
    for i in range(40):
        (root / "etc" / f"conf{i:02d}.cfg").write_bytes(blob(rng, rng.randint(1, 3 * bs)))
    for i in range(30):
        d = root / "usr" / "share" / f"pkg{i % 6}"
        d.mkdir(parents=True, exist_ok=True)
        (d / f"data{i}.bin").write_bytes(blob(rng, rng.randint(0, 12 * bs)))
    for i in range(20):
        d = root / "lib" / "modules" / f"m{i % 4}"
        d.mkdir(parents=True, exist_ok=True)
        (d / f"mod{i}.ko").write_bytes(blob(rng, rng.randint(bs, 40 * bs)))
    (root / "boot" / "vmlinuz").write_bytes(blob(rng, 300 * bs + 17))
    (root / "boot" / "initrd.img").write_bytes(blob(rng, 700 * bs))
    (root / "var" / "empty.log").write_bytes(b"")
    (root / "var" / "lastlog").write_bytes(b"")
    for i in range(10):
        (root / "var" / f"log{i}.txt").write_bytes(blob(rng, rng.randint(1, 2 * bs)))
    (root / "root" / ".profile").write_bytes(b"export PATH\n")
    write_sparse(root / "var" / "two_extents.db", bs, [(0, 2), (5, 3)])
    write_sparse(root / "var" / "holes.db", bs, [(0, 1), (4, 1), (9, 2), (20, 1), (33, 4), (60, 1)])
    os.symlink("/etc/hostname", root / "etc" / "hostname.link")
    os.symlink("/usr/share/" + "x" * 80, root / "usr" / "long.link")


def populate_1k(root, rng):
    bs = 1024
    big = root / "usr" / "lib" / "many"
    big.mkdir(parents=True)
    for i in range(300):
        (big / f"entry_with_a_long_name_{i:04d}.so").write_bytes(blob(rng, rng.randint(0, 5 * bs)))
    (root / "etc").mkdir()
    for i in range(20):
        (root / "etc" / f"f{i}").write_bytes(blob(rng, rng.randint(1, 3000)))
    (root / "var").mkdir()
    write_sparse(root / "var" / "depth1.img", bs, [(2 * k, 1) for k in range(20)])
    write_sparse(root / "var" / "depth2.img", bs, [(2 * k, 1) for k in range(400)])
    (root / "var" / "big.bin").write_bytes(blob(rng, 3000 * bs))


def populate_legacy(root, rng):
    (root / "etc").mkdir()
    for i in range(5):
        (root / "etc" / f"f{i}").write_bytes(blob(rng, 2000 + i))


def populate_cycle(root, rng):
    (root / "a" / "b").mkdir(parents=True)
    (root / "a" / "b" / "f.txt").write_bytes(b"data")


def manifest_of(stage):
    files = {}
    for dirpath, dirnames, filenames in os.walk(stage):
        for name in filenames:
            p = Path(dirpath) / name
            if p.is_symlink() or not p.is_file():
                continue
            rel = "/" + str(p.relative_to(stage))
            files[rel] = p.stat().st_size
    return dict(sorted(files.items()))


def run_debugfs(img, commands):
    with tempfile.NamedTemporaryFile("w", suffix=".cmd", delete=False) as f:
        f.write("\n".join(commands) + "\n")
        cmdfile = f.name
    try:
        out = subprocess.run([tool("debugfs"), "-f", cmdfile, str(img)], capture_output=True,
                             text=True, check=True, env=ENV).stdout
    finally:
        os.unlink(cmdfile)
    chunks = re.split(r"^debugfs: ", out, flags=re.M)
    return [c for c in chunks[1:]]


LEAF = re.compile(r"^\s*(\d+)/\s*(\d+)\s+\d+/\s*\d+\s+(\d+)\s+-\s+(\d+)\s+(\d+)(?:\s+-\s+(\d+))?\s+(\d+)")


def leaf_blocks(ex_output):
    blocks = []
    for line in ex_output.splitlines():
        m = LEAF.match(line)
        if not m or m.group(1) != m.group(2):
            continue
        start, length = int(m.group(5)), int(m.group(7))
        blocks.extend(range(start, start + length))
    return blocks


def ground_truth(img, paths):
    ex = run_debugfs(img, [f'dump_extents "{p}"' for p in paths])
    st = run_debugfs(img, [f'stat "{p}"' for p in paths])
    truth, inos = {}, {}
    for p, e, s in zip(paths, ex, st):
        truth[p] = leaf_blocks(e)
        inos[p] = int(re.search(r"Inode:\s+(\d+)", s).group(1))
    return truth, inos


def superblock_facts(img):
    out = subprocess.run([tool("dumpe2fs"), "-h", str(img)], capture_output=True, text=True,
                         check=True).stdout
    facts = {}
    for key, name in [("Block size", "block_size"), ("Block count", "blocks_count"),
                      ("Inode count", "inodes_count"), ("Blocks per group", "blocks_per_group"),
                      ("Inodes per group", "inodes_per_group"), ("Inode size", "inode_size"),
                      ("First block", "first_data_block"), ("Filesystem magic number", "magic"),
                      ("Filesystem UUID", "volume_uuid")]:
        m = re.search(rf"^{key}:\s+(\S+)", out, flags=re.M)
        val = m.group(1)
        facts[name] = val if name in ("volume_uuid", "magic") else int(val)
    return facts


def build(name, size, block_size, populate, seed, extra=(), mkfs_opts=(), legacy=False):
    rng = random.Random(seed)
    with tempfile.TemporaryDirectory() as tmp:
        stage = Path(tmp) / "stage"
        stage.mkdir()
        populate(stage, rng)
        img = Path(tmp) / f"{name}.img"
        fstype = ["-t", "ext4"]
        cmd = [tool("mke2fs"), "-q", *fstype, "-b", str(block_size), "-U", FIXED_UUID,
               "-E", f"hash_seed={FIXED_UUID}", *mkfs_opts, "-d", str(stage), str(img), size]
        subprocess.run(cmd, check=True, env=ENV)
        for c in extra:
            subprocess.run([tool("debugfs"), "-w", "-R", c, str(img)], check=True, env=ENV,
                           capture_output=True)
        files = manifest_of(stage)
        facts = superblock_facts(img)
        if legacy:
            truth, inos = {}, {}
        else:
            truth, inos = ground_truth(img, list(files))
        with open(HERE / f"{name}.img.gz", "wb") as raw, \
                gzip.GzipFile(fileobj=raw, mode="wb", compresslevel=9, mtime=0) as f:
            f.write(img.read_bytes())
    manifest = {"image": f"{name}.img.gz", "superblock": facts,
                "files": {p: {"size": s, "ino": inos.get(p)} for p, s in files.items()}}
    (HERE / f"{name}.manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    if not legacy:
        lines = [f"{p}\t{','.join(map(str, b))}" for p, b in truth.items()]
        (HERE / f"{name}.truth.tsv").write_text("\n".join(lines) + ("\n" if lines else ""))
    print(name, len(files), "files")


def main():
    build("ext4_small", "64M", 4096, populate_small, 1)
    build("ext4_1k", "16M", 1024, populate_1k, 2)
    build("ext4_empty", "8M", 4096, lambda root, rng: None, 3)
    build("ext4_legacy", "4M", 4096, populate_legacy, 4, mkfs_opts=["-O", "^extent,^64bit,^flex_bg"],
          legacy=True)
    build("ext4_cycle", "4M", 4096, populate_cycle, 5, extra=["ln /a /a/b/loop"], legacy=True)


if __name__ == "__main__":
    main()
