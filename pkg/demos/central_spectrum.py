"""H-GenEO spectrum on the central subdomain of a 5x5 split.

Interior subdomains have no Robin boundary, so the pencil is Hermitian and
the selected eigenvalues are real.  Passing a larger m (e.g. 400) reaches
k about 46.5 at a cost of a few seconds.
"""
import sys

import numpy as np

from helmholtz_dd.assembly import assemble_global
from helmholtz_dd.coarse import build_geneo_family_local
from helmholtz_dd.media import MediumSpec
from helmholtz_dd.mesh import build_unit_square_mesh, wavenumber_for_resolution
from helmholtz_dd.partition import build_decomposition

m = int(sys.argv[1]) if len(sys.argv) > 1 else 200
k = wavenumber_for_resolution(m)
mesh = build_unit_square_mesh(m)
system = assemble_global(mesh, MediumSpec("homogeneous", 1.0, k))
dec = build_decomposition(mesh, "uniform", grid=(5, 5), overlap=2)

loc = build_geneo_family_local(12, system, dec, "h_geneo", 0.5)
lam = np.sort(loc.values.real)
print(f"k = {k:.2f}: {loc.count} eigenvalues below 1/2, max |Im| {np.abs(loc.values.imag).max():.1e}")
print(np.array2string(lam, precision=3, max_line_width=88))
