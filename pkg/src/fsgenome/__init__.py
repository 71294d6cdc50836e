"""File system genome: per-file physical block layouts as a device fingerprint."""
from .model import (Corpus, FileUniverse, Fsg, file_universe, ingest_debugfs_dump, load_corpus,
                    load_fsg, project_first_block, read_fsg, save_corpus, save_fsg, write_fsg)
from .ext4_reader import Ext4Error, extract_fsg, open_image, read_inode, resolve_blocks, walk_tree
from .metrics import (block_count_histogram, build_occurrence_matrix, corpus_summary, entropy_report,
                      hamming_distance, ks_distance_to_uniform, location_cdf, min_entropy_per_file,
                      shannon_entropy_per_file)
from .matcher import EnrolledSet, identify, similarity, verify_ownership
from .allocsim import SimConfig, default_config, simulate_corpus, simulate_installation

__version__ = "0.1.0"
