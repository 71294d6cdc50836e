"""Brute-force reference computations, written without fsgenome.metrics."""
import math


def tally(installations, path, first_block_only):
    """Double loop over installations and positions."""
    table = {}
    slots = 0
    present = 0
    for entries in installations:
        blocks = list(entries.get(path, ()))
        if first_block_only:
            blocks = blocks[:1]
        if blocks:
            present += 1
        for loc in blocks:
            table[loc] = table.get(loc, 0) + 1
            slots += 1
    return table, slots, present


def shannon_oracle(table, slots):
    total = 0.0
    for loc in sorted(table):
        p = table[loc] / slots
        total += -p * math.log2(p)
    return total


def min_entropy_oracle(table, installs):
    biggest = 0
    for loc in table:
        biggest = max(biggest, table[loc])
    return -math.log2(biggest / installs)


def ks_oracle(locations, lo, hi):
    """Sup distance evaluated at every integer point of the support, both sides of each step."""
    n = len(locations)
    width = hi - lo
    worst = 0.0
    for x in range(lo, hi):
        below = sum(1 for v in locations if v < x) / n
        upto = sum(1 for v in locations if v <= x) / n
        worst = max(worst, abs(below - (x - lo) / width), abs(upto - (x - lo + 1) / width))
    return worst
