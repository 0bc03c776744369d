"""A QUANT-world chain shows the Svetlichny box is not quantum.

The see-saw is a local search: from seed 0 it finds a witness for m = 3 and 4
but stalls at zero for m = 6.
"""

from connectors import mpctn
from connectors.boxes import svetlichny_mps

for m in (3, 4, 6):
    box = svetlichny_mps(m)
    net = mpctn.network_for(box, world="QUANT", bond=(2, 2), seed=0)
    net, trace = mpctn.see_saw(net, box, max_sweeps=50)
    print(f"m={m}: {trace.status:10s} W(P) = {trace.final:+.6f}  certified {mpctn.certify_network(net)[0]}")
