"""Shared fixtures for femwave tests."""

from pathlib import Path

import pytest

import artifacts
import ref_element as ref
from mesh_hierarchy import build_hierarchy, bundled_mesh, load_mesh


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Redirect artifacts to a temp directory for every test."""
    monkeypatch.setattr(artifacts, "OUTPUT_DIR", tmp_path / "out")
    return tmp_path / "out"


@pytest.fixture(scope="session")
def data():
    return ref.reference_data()


@pytest.fixture(scope="session")
def square():
    """Unit square, T_0..T_4: transforms up to J = 3."""
    return build_hierarchy(bundled_mesh("unit_square"), 4)


@pytest.fixture(scope="session")
def square_deep():
    """Unit square, T_0..T_5: transforms up to J = 4."""
    return build_hierarchy(bundled_mesh("unit_square"), 5)


@pytest.fixture(scope="session")
def lshape():
    """L-shaped domain with one Neumann edge, T_0..T_3."""
    return build_hierarchy(bundled_mesh("l_shape"), 3)


@pytest.fixture(scope="session")
def lshape_deep():
    """L-shaped domain, T_0..T_5: collections up to j = 3, wavelets up to level 3."""
    return build_hierarchy(bundled_mesh("l_shape"), 5)


SQUARE_TEXT = """\
femwave-mesh 1
v 0 0
v 1 0
v 1 1
v 0 1
t 0 2 3
t 0 1 2
g 0 1
g 1 2
g 2 3
g 3 0
"""


def mesh_text(gamma=("0 1", "1 2", "2 3", "3 0")) -> str:
    """The unit square document with a chosen set of Dirichlet edges."""
    head = SQUARE_TEXT.split("g ", 1)[0]
    return head + "".join(f"g {e}\n" for e in gamma)


def write_mesh(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


@pytest.fixture
def neumann_square():
    """Unit square with Gamma empty, T_0..T_3."""
    return build_hierarchy(load_mesh(mesh_text(gamma=())), 3)
