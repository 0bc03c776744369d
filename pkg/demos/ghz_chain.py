"""See-saw over a growing GHZ family in the LOC world.

With X/Y measurements the chain detects nonlocality at every size. With X/Z
measurements the box has a local model and the chain stalls at zero.
"""

from connectors import mpctn
from connectors.boxes import ghz_pauli_mps

for settings in ("xy", "xz"):
    boxes = [ghz_pauli_mps(m, settings) for m in (5, 10, 20, 40)]
    for net, trace in mpctn.grow_family(boxes, bond=(2, 2), seed=0, max_sweeps=50, pad="copy"):
        ok, _ = mpctn.certify_network(net)
        print(f"{settings} m={net.m:3d}: {trace.status:10s} W(P) = {trace.final:+.6f}  certified {ok}")
