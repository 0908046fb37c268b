import contextlib
import warnings

import pytest

from curvmf.mesh import gen_flat_cylinder, gen_hemisphere, gen_pair_of_pants
from curvmf.operators import assemble_operators

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def hemi():
    mesh, orbits = gen_hemisphere(2, 8)
    return mesh, orbits, assemble_operators(mesh)


@pytest.fixture(scope="session")
def cyl():
    mesh = gen_flat_cylinder(1.0, 16, 16)
    return mesh, assemble_operators(mesh)


@pytest.fixture(scope="session")
def pants():
    mesh = gen_pair_of_pants((1.0, 1.0, 1.0), 3)
    return mesh, assemble_operators(mesh)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@contextlib.contextmanager
def quiet_degenerate():
    """Silence the thin-triangle warning on anisotropic test grids."""
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*near-degenerate triangles.*")
        yield
