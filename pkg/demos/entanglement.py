"""Entanglement side: a hybrid witness minimized over PPT states and a composed spin-squeezing witness."""

from connectors import mpctn
from connectors.boxes import ghz_state
from connectors.linalg import proj
from connectors.sep import compose_toth_w6, hybrid_steer_witness, min_over_ppt, toth_detection

print(f"hybrid witness, min over PPT states: {min_over_ppt(hybrid_steer_witness()).value:+.5f}")
print(f"control measurements:                {min_over_ppt(hybrid_steer_witness(control=True)).value:+.5f}")

W6, _ = compose_toth_w6()
det = toth_detection(W6)
print(f"six-qubit composed witness: {det.value:+.4f} on a state meeting every lambda-grid constraint (slack {det.grid_min:.1e})")

rho = proj(ghz_state(4))
net, trace = mpctn.see_saw(mpctn.network_for(rho, world="SEP", bond=2, seed=0), rho, max_sweeps=20)
print(f"SEP chain on a 4-qubit GHZ state: {trace.status}, value {trace.final:+.4f}")
