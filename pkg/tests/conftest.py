import functools

import pytest

from helmholtz_dd.assembly import assemble_global
from helmholtz_dd.media import MediumSpec
from helmholtz_dd.mesh import build_unit_square_mesh, wavenumber_for_resolution
from helmholtz_dd.partition import build_decomposition

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def mesh_of(m):
    return build_unit_square_mesh(m)


@functools.lru_cache(maxsize=None)
def homogeneous_system(m, k=None):
    k = wavenumber_for_resolution(m) if k is None else k
    return assemble_global(mesh_of(m), MediumSpec("homogeneous", 1.0, k))


@functools.lru_cache(maxsize=None)
def decomposition(m, grid, overlap=2, pou="smooth"):
    return build_decomposition(mesh_of(m), "uniform", grid=grid, overlap=overlap, pou=pou)


@pytest.fixture(scope="session")
def small_system():
    return homogeneous_system(12)


@pytest.fixture(scope="session")
def small_decomposition():
    return decomposition(12, (2, 2))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if passed else 'FAIL'}  {detail}")
