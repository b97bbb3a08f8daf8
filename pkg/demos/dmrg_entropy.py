"""
Matrix-product ground states and entanglement
=============================================

Two-site DMRG reproduces the exact ground state on a short chain; on longer
chains in the gapless phase the half-chain entropy grows by about
ln(2)/6 each time L doubles, as expected for c = 1 with open ends.
"""

import time

import numpy as np

from o2chain import ChainSpec, DmrgSettings, dmrg_ground_state, entanglement_entropy_exact, ground_state

spec = ChainSpec("u", 1, 10, 0.9)
res = dmrg_ground_state(spec, DmrgSettings(epsilon=1e-12))
gs = ground_state(spec)
print(f"L=10 DMRG E0 = {res.energy:.12f}   ED E0 = {gs.energy:.12f}")
print(f"      DMRG S  = {res.half_chain_entropy:.10f}   ED S  = {entanglement_entropy_exact(gs):.10f}")
print(f"      sweeps {res.sweeps_used}, largest bond {res.largest_bond}")

# entropy under doubling deep in the gapless phase
settings = DmrgSettings(epsilon=1e-8, entropy_convergence=1e-8)
prev = None
print("\n  L    S_vN       increment   bond   seconds")
for L in (8, 16, 32):
    t0 = time.perf_counter()
    r = dmrg_ground_state(ChainSpec("u", 1, L, 0.1), settings)
    inc = "" if prev is None else f"{r.half_chain_entropy - prev:.4f}"
    print(f"{L:3d}   {r.half_chain_entropy:.6f}   {inc:>9s}   {r.largest_bond:4d}   {time.perf_counter() - t0:.1f}")
    prev = r.half_chain_entropy
print(f"\nln(2)/6 = {np.log(2) / 6:.4f}")
