"""Command-line front end: ``fsgenome <subcommand> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error. Results go to stdout
unless ``-o`` names a file; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import sys
from pathlib import Path
from typing import Sequence

from . import allocsim, ext4_reader, matcher, metrics, model

SCATTER_DIRS = ("boot", "etc", "lib", "root", "usr", "var")
METRICS = ("entropy", "min-entropy", "cdf", "histogram", "summary", "hamming")


def render_genome_scatter(fsg: model.Fsg) -> list[tuple[int, int, str]]:
    """Rows of ``(file_index, first_block, top_dir)`` for plotting a genome.

    Files without data blocks are skipped; indices count the remaining files.
    """
    rows = []
    for path, blocks in fsg.entries.items():
        if not blocks:
            continue
        top = path.lstrip("/").split("/", 1)[0]
        rows.append((len(rows), blocks[0], top if top in SCATTER_DIRS else "other"))
    return rows


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fsgenome", description="File system genome extraction and analysis")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("extract", help="genome of an ext4 image")
    s.add_argument("image")
    s.add_argument("--first-block", action="store_true")
    s.add_argument("--label")
    s.add_argument("-o", "--output")

    s = sub.add_parser("ingest", help="genome from a debugfs TSV dump")
    s.add_argument("tsv")
    s.add_argument("--label", required=True)
    s.add_argument("--block-size", type=int, required=True)
    s.add_argument("-o", "--output")

    s = sub.add_parser("analyze", help="corpus statistics")
    s.add_argument("--corpus", required=True)
    s.add_argument("--metric", required=True, choices=METRICS)
    s.add_argument("--universe", choices=model.UNIVERSE_MODES, default="intersection")
    s.add_argument("--first-block", action="store_true")
    s.add_argument("-o", "--output")

    s = sub.add_parser("match", help="identify a genome against an enrolled set")
    s.add_argument("--candidate", required=True)
    s.add_argument("--enrolled", required=True)
    s.add_argument("--threshold", type=float)
    s.add_argument("-o", "--output")

    s = sub.add_parser("verify", help="ownership check over read-only files")
    s.add_argument("--candidate", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--readonly", required=True, help="text file, one path per line")
    s.add_argument("--threshold", type=float, default=matcher.DEFAULT_THRESHOLD)
    s.add_argument("-o", "--output")

    s = sub.add_parser("simulate", help="write a simulated corpus")
    s.add_argument("--config", required=True, help="SimConfig JSON, or 'default'")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output", required=True)

    s = sub.add_parser("scatter", help="first-block scatter data of a genome")
    s.add_argument("fsg")
    s.add_argument("-o", "--output")
    return p


@contextlib.contextmanager
def _text_out(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            yield f


def _write_fsg(fsg, path):
    if path is None:
        model.write_fsg(fsg, sys.stdout.buffer)
        sys.stdout.flush()
    else:
        model.save_fsg(fsg, path)


def _cmd_extract(a):
    with ext4_reader.open_image(a.image) as img:
        fsg = ext4_reader.extract_fsg(img, first_block_only=a.first_block, device_label=a.label)
    _write_fsg(fsg, a.output)


def _cmd_ingest(a):
    with open(a.tsv, "rb") as f:
        fsg = model.ingest_debugfs_dump(f, a.label, a.block_size)
    _write_fsg(fsg, a.output)


def _cmd_analyze(a):
    corpus = model.load_corpus(a.corpus)
    with _text_out(a.output) as out:
        w = csv.writer(out, lineterminator="\n")
        if a.metric == "summary":
            w.writerow(["label", "total_files", "total_blocks", "required_space_bytes"])
        elif a.metric == "histogram":
            w.writerow(["label", "bucket", "count", "percent"])
        if a.metric in ("histogram", "summary"):
            for fsg in corpus:
                if a.first_block:
                    fsg = model.project_first_block(fsg)
                if a.metric == "summary":
                    s = metrics.corpus_summary(fsg)
                    w.writerow([fsg.device_label, s.total_files, s.total_blocks, s.required_space])
                else:
                    for row in metrics.block_count_histogram(fsg):
                        w.writerow([fsg.device_label, row.bucket, row.count, f"{row.percent:.4f}"])
            return
        universe = model.file_universe(corpus, a.universe)
        if a.metric == "hamming":
            w.writerow(["a", "b", "distance"])
            common = model.file_universe(corpus, "intersection") if a.universe == "union" else universe
            for (x, y), d in metrics.pairwise_hamming(corpus, common).items():
                w.writerow([x, y, d])
            return
        m = metrics.build_occurrence_matrix(corpus, universe, first_block_only=a.first_block)
        if a.metric == "cdf":
            metrics.write_cdf_csv(m, out)
            return
        report = metrics.entropy_report(m)
        columns = ("min_entropy_bits",) if a.metric == "min-entropy" else ("shannon_bits", "min_entropy_bits")
        metrics.write_entropy_csv(report, out, columns)
        if report.skipped:
            print(f"warning: {report.skipped} files without data blocks skipped", file=sys.stderr)


def _cmd_match(a):
    candidate = model.load_fsg(a.candidate)
    enrolled = matcher.EnrolledSet.load(a.enrolled)
    result = matcher.identify(candidate, enrolled, a.threshold)
    with _text_out(a.output) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["decision", "label", "similarity", "raw_distance", "slots", "tied"])
        w.writerow(["matched" if result.matched else "unmatched", result.label or "",
                    repr(result.score.similarity), result.score.raw_distance, result.score.slots,
                    ";".join(result.tied) if result.is_tie else ""])


def _cmd_verify(a):
    candidate = model.load_fsg(a.candidate)
    reference = model.load_fsg(a.reference)
    paths = [line.strip() for line in Path(a.readonly).read_text(encoding="utf-8").splitlines()
             if line.strip()]
    result = matcher.verify_ownership(candidate, reference, paths, a.threshold)
    with _text_out(a.output) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["decision", "similarity", "raw_distance", "slots"])
        w.writerow(["accept" if result.accepted else "reject", repr(result.score.similarity),
                    result.score.raw_distance, result.score.slots])


def _cmd_simulate(a):
    cfg = allocsim.default_config() if a.config == "default" else allocsim.load_config(a.config)
    corpus = allocsim.simulate_corpus(cfg, a.count, a.seed)
    model.save_corpus(corpus, a.output)


def _cmd_scatter(a):
    fsg = model.load_fsg(a.fsg)
    with _text_out(a.output) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["file_index", "first_block", "top_dir"])
        w.writerows(render_genome_scatter(fsg))


COMMANDS = {
    "extract": _cmd_extract,
    "ingest": _cmd_ingest,
    "analyze": _cmd_analyze,
    "match": _cmd_match,
    "verify": _cmd_verify,
    "simulate": _cmd_simulate,
    "scatter": _cmd_scatter,
}


def run(argv: Sequence[str]) -> int:
    try:
        args = _build_parser().parse_args(list(argv))
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
