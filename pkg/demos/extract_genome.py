"""
Extracting the genome of an ext4 image
======================================

Reads one of the small test images, lists where a few files live on disk
and prints the block-count histogram and space summary of the image.
"""
import gzip
from pathlib import Path

from fsgenome import block_count_histogram, corpus_summary, extract_fsg, open_image

# The test images are stored compressed; open_image also accepts a path.
image = gzip.decompress((Path(__file__).parents[1] / "tests/fixtures/ext4_1k.img.gz").read_bytes())

with open_image(image) as img:
    print(f"block size {img.block_size}, {img.superblock.blocks_count} blocks, "
          f"{img.superblock.group_count} groups")
    genome = extract_fsg(img, device_label="demo")

# A genome maps each path to its physical blocks, in file order.
for path in genome.paths[:5]:
    blocks = genome[path]
    print(f"{path:40s} {len(blocks):5d} blocks, first at {blocks[0] if blocks else '-'}")

for row in block_count_histogram(genome):
    print(f"{row.bucket:>12s} {row.count:5d} {row.percent:6.2f}%")

summary = corpus_summary(genome)
print(f"{summary.total_files} files use {summary.total_blocks} blocks ({summary.required_space_mib:.2f} MiB)")
