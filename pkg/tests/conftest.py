import math

import numpy as np
import pytest

from curvflow.manifold import build_torus_grid, load_off_mesh

TWO_PI = 2.0 * math.pi

OCTAHEDRON_OFF = """OFF
6 8 12
1 0 0
-1 0 0
0 1 0
0 -1 0
0 0 1
0 0 -1
3 0 2 4
3 2 1 4
3 1 3 4
3 3 0 4
3 2 0 5
3 1 2 5
3 3 1 5
3 0 3 5
"""


def circle(n, length=TWO_PI):
    return build_torus_grid([n], [length])


def make_icosphere(depth):
    """Icosahedron subdivided depth times, vertices projected to the unit
    sphere.  Returns (vertices, faces) with 0-based indices."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(depth):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=int)


def write_off(path, verts, faces):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(verts)} {len(faces)} {3 * len(faces) // 2}\n")
        for v in verts:
            fh.write("%.17g %.17g %.17g\n" % tuple(v))
        for f in faces:
            fh.write("3 %d %d %d\n" % tuple(f))


@pytest.fixture(scope="session")
def circle64():
    return circle(64)


@pytest.fixture(scope="session")
def circle128():
    return circle(128)


@pytest.fixture(scope="session")
def circle256():
    return circle(256)


@pytest.fixture(scope="session")
def torus2d():
    return build_torus_grid([32, 32], [TWO_PI, TWO_PI])


@pytest.fixture(scope="session")
def octahedron_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("mesh") / "octahedron.off"
    path.write_text(OCTAHEDRON_OFF)
    return str(path)


@pytest.fixture(scope="session")
def octahedron(octahedron_path):
    return load_off_mesh(octahedron_path)


@pytest.fixture(scope="session")
def icosphere4(tmp_path_factory):
    verts, faces = make_icosphere(4)
    path = tmp_path_factory.mktemp("mesh") / "icosphere4.off"
    write_off(path, verts, faces)
    return load_off_mesh(str(path))
