"""
Plotting where files start on disk
==================================

Draws the first block of every file of one simulated installation,
coloured by top-level directory. Needs matplotlib, which the library
itself does not depend on. The same rows are available on the command
line through ``fsgenome scatter genome.fsg``.
"""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from fsgenome import allocsim
from fsgenome.cli import SCATTER_DIRS, render_genome_scatter

genome = allocsim.simulate_installation(allocsim.default_config(), seed=4)
rows = render_genome_scatter(genome)

fig, ax = plt.subplots(figsize=(8, 4))
for name in (*SCATTER_DIRS, "other"):
    pts = [(i, b) for i, b, top in rows if top == name]
    if pts:
        ax.scatter(*zip(*pts), s=4, label=name)
ax.set_xlabel("file index")
ax.set_ylabel("first block")
ax.legend(markerscale=3)
fig.savefig("genome_scatter.png", dpi=120)
print("wrote genome_scatter.png")
