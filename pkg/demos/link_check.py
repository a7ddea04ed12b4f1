"""DtN <-> GenEO link on small decompositions.

The GenEO pencil eigenvalues, mapped by lambda / (1 - lambda), must match the
Schur complement pencil on the overlap.  Both sides are computed densely.
"""
from helmholtz_dd.harness import LinkCheckConfig, run_link_check

for m, grid in ((8, (2, 2)), (12, (3, 1))):
    verdict = run_link_check(LinkCheckConfig(m=m, grid=grid))
    err = max(s["max_rel_error"] for s in verdict["subdomains"])
    print(f"m={m} grid {grid[0]}x{grid[1]}: {verdict['verdict']}  max relative error {err:.1e}")
