"""How much rate the finite-blocklength penalty costs.

The normal approximation subtracts Omega * sqrt(V(gamma) / eta) from the
Shannon rate.  This script tabulates the relative loss for the blocklengths of
the sweep and shows how the slot length T_sens = eta / B trades against it.

Run with ``python demos/fbl_penalty.py``.
"""

import numpy as np

from risisac.config import SystemConfig
from risisac.metrics import FblParams, fbl_rate, slot_timing

cfg = SystemConfig()
gammas = np.array([0.1, 1.0, 10.0, 100.0])
shannon = cfg.bandwidth * np.log2(1 + gammas)

print("relative rate loss (1 - r_fbl / r_shannon) in percent")
print("eta".rjust(8), " ".join(f"gamma={g:<6g}" for g in gammas), "  T_sens [us]  slots/T_c")
for eta in (125, 150, 200, 300, 400, 1000, 10 ** 6):
    fbl = FblParams.from_config(cfg, eta=eta)
    loss = 100 * (1 - fbl_rate(gammas, fbl) / shannon)
    t_sens, n_slot = slot_timing(eta, cfg.bandwidth, cfg.t_coh)
    print(f"{eta:8d} " + " ".join(f"{x:12.3f}" for x in loss) + f"  {1e6 * t_sens:11.1f}  {n_slot:9d}")

# Low-SINR links keep a sizeable relative penalty even at very long blocks,
# because the dispersion shrinks more slowly than log2(1 + gamma).
