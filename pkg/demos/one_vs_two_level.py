"""Compare one-level ORAS against DtN and H-GenEO two-level preconditioners.

Runs the homogeneous wave guide at m=100 (k about 18.5) on a 5x5 uniform
split and prints iterations and coarse sizes for each preconditioner.
"""
from helmholtz_dd.assembly import assemble_global
from helmholtz_dd.coarse import CoarseSpec, assemble_coarse
from helmholtz_dd.linalg import gmres_right_preconditioned
from helmholtz_dd.media import MediumSpec
from helmholtz_dd.mesh import build_unit_square_mesh, wavenumber_for_resolution
from helmholtz_dd.partition import build_decomposition
from helmholtz_dd.precond import build_oras

m = 100
k = wavenumber_for_resolution(m)
mesh = build_unit_square_mesh(m)
system = assemble_global(mesh, MediumSpec("homogeneous", 1.0, k))
dec = build_decomposition(mesh, "uniform", grid=(5, 5), overlap=2)
print(f"k = {k:.2f}, {system.n} unknowns, {dec.n_subdomains} subdomains")

for spec in [None, CoarseSpec("dtn"), CoarseSpec("h_geneo"), CoarseSpec("delta_geneo")]:
    cs = assemble_coarse(system, dec, spec) if spec else None
    res = gmres_right_preconditioned(system.A, build_oras(system, dec, cs), system.f, tol=1e-6)
    label = spec.label if spec else "one-level"
    size = cs.size if cs else 0
    print(f"{label:18s} coarse size {size:4d}  iterations {res.iterations:3d}  residual {res.final_residual:.1e}")
