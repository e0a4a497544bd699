"""Small procedural meshes used as fixtures and CLI inputs."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh, subdivide_midpoint


def unit_square() -> TriMesh:
    """Unit square split along the (0,0)-(1,1) diagonal."""
    verts = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (1.0, 1.0, 0.0), (0.0, 1.0, 0.0)]
    return TriMesh(np.array(verts), np.array([[0, 1, 2], [0, 2, 3]]))


def equilateral_triangle(edge: float = 1.0) -> TriMesh:
    verts = [(0.0, 0.0, 0.0), (edge, 0.0, 0.0), (0.5 * edge, 0.5 * np.sqrt(3.0) * edge, 0.0)]
    return TriMesh(np.array(verts), np.array([[0, 1, 2]]))


def square_grid(nx: int, ny: int | None = None, size: float = 1.0) -> TriMesh:
    """Regular grid on [0, size]^2 with nx * ny cells, each split into two triangles.

    Diagonals alternate direction in a checkerboard so the triangulation has no
    preferred orientation.
    """
    ny = nx if ny is None else ny
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    faces = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                faces += [(a, b, c), (a, c, d)]
            else:
                faces += [(a, b, d), (b, c, d)]
    return TriMesh(verts, np.array(faces))


def icosahedron(radius: float = 1.0) -> TriMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts *= radius / np.linalg.norm(verts[0])
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ]
    )
    return TriMesh(verts, faces)


def icosphere(level: int = 3, radius: float = 1.0) -> TriMesh:
    """Icosahedron subdivided ``level`` times with vertices pushed to the sphere.

    Vertex count is 10 * 4**level + 2 (level 3 -> 642, level 5 -> 10242).
    """
    mesh = icosahedron(radius)
    for _ in range(level):
        mesh = subdivide_midpoint(mesh)
        v = mesh.vertices
        mesh = TriMesh(radius * v / np.linalg.norm(v, axis=1, keepdims=True), mesh.faces)
    return mesh


def builtin(name: str) -> TriMesh:
    """Resolve ``icosphere:3``, ``grid:20``, ``square``, ``icosahedron`` style names."""
    kind, _, arg = name.partition(":")
    if kind == "icosphere":
        return icosphere(int(arg or 3))
    if kind == "grid":
        return square_grid(int(arg or 16))
    if kind == "square":
        return unit_square()
    if kind == "icosahedron":
        return icosahedron()
    raise ValueError(f"unknown builtin mesh {name!r}")
