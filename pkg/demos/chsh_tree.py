"""No-signalling minima of CHSH trees, with their LP certificates re-checked."""

from connectors.conic import verify_certificate
from connectors.loc import chsh_tree, ns_min_value

for depth in (1, 2, 3):
    res = ns_min_value(chsh_tree(depth))
    ok = verify_certificate(res.certificate, None).ok
    print(f"depth {depth}: {2 ** depth} pairs, minimum {res.value:+.6f}, certificate {'ok' if ok else 'FAILED'}")
