"""Triangle meshes: I/O, validation and exact-surface refinement."""
from __future__ import annotations

from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

DEGENERATE_REL_AREA = 1e-12


class MeshError(ValueError):
    """Raised for structurally invalid meshes or mesh files."""


class ObjParseError(MeshError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DegenerateFaceError(MeshError):
    def __init__(self, face: int, area: float):
        super().__init__(f"face {face} is degenerate (area {area:.3e})")
        self.face = face


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangle mesh with 0-based, counter-clockwise faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must have shape (m, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex coordinates must be finite")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if np.any(repeated):
            raise MeshError(f"face {int(np.argmax(repeated))} repeats a vertex")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (i, j) rows, i < j."""
        return _unique_edges(self.faces)[0]

    def face_areas(self) -> np.ndarray:
        p = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def total_area(self) -> float:
        return float(self.face_areas().sum())

    def bbox_diagonal(self) -> float:
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    def __repr__(self):
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def _unique_edges(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return unique sorted edges and, for each of the 3F half-edges, its edge id.

    Half-edge k of face f is (faces[f, k], faces[f, (k + 1) % 3]) and sits at
    row ``3 * f + k`` of the inverse map.
    """
    half = np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1).reshape(-1, 2)
    key = np.sort(half, axis=1)
    edges, inverse = np.unique(key, axis=0, return_inverse=True)
    return edges.reshape(-1, 2), inverse.ravel()


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    is_manifold: bool
    boundary_edge_count: int
    connected_components: int
    degenerate_faces: list[int] = field(default_factory=list)
    min_angle: float = float("nan")
    orientation_consistent: bool = True
    n_vertices: int = 0
    n_edges: int = 0
    n_faces: int = 0

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def as_dict(self) -> dict:
        return {
            "is_manifold": self.is_manifold,
            "boundary_edge_count": self.boundary_edge_count,
            "connected_components": self.connected_components,
            "degenerate_faces": list(self.degenerate_faces),
            "min_angle": self.min_angle,
            "orientation_consistent": self.orientation_consistent,
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
            "n_faces": self.n_faces,
        }


def validate(mesh: TriMesh) -> ValidationReport:
    """Scan edges and faces and report structural properties; never raises."""
    faces = mesh.faces
    n = mesh.n_vertices
    if mesh.n_faces == 0:
        return ValidationReport(True, 0, n, [], float("nan"), True, n, 0, 0)

    edges, inverse = _unique_edges(faces)
    counts = np.bincount(inverse, minlength=len(edges))
    is_manifold = bool(np.all(counts <= 2))
    boundary = int(np.count_nonzero(counts == 1))

    # Two faces sharing an edge must traverse it in opposite directions, so
    # each directed half-edge may appear at most once.
    half = np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1).reshape(-1, 2)
    _, directed_counts = np.unique(half, axis=0, return_counts=True)
    orientation_ok = bool(np.all(directed_counts == 1))

    adj = coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
    )
    n_comp, _ = connected_components(adj, directed=False)

    areas = mesh.face_areas()
    threshold = DEGENERATE_REL_AREA * mesh.bbox_diagonal() ** 2
    degenerate = np.flatnonzero(areas < threshold)

    good = np.setdiff1d(np.arange(mesh.n_faces), degenerate)
    min_angle = float("nan")
    if len(good):
        min_angle = float(_corner_angles(mesh.vertices, faces[good]).min())

    return ValidationReport(
        is_manifold=is_manifold,
        boundary_edge_count=boundary,
        connected_components=int(n_comp),
        degenerate_faces=[int(i) for i in degenerate],
        min_angle=min_angle,
        orientation_consistent=orientation_ok,
        n_vertices=n,
        n_edges=len(edges),
        n_faces=mesh.n_faces,
    )


def _corner_angles(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p = vertices[faces]
    out = np.empty(faces.shape)
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cos = np.einsum("ij,ij->i", a, b)
        sin = np.linalg.norm(np.cross(a, b), axis=1)
        out[:, k] = np.arctan2(sin, cos)
    return out


# --------------------------------------------------------------------------
# transforms


def scale(mesh: TriMesh, k: float) -> TriMesh:
    if not k > 0:
        raise ValueError(f"scale factor must be positive, got {k}")
    return TriMesh(mesh.vertices * k, mesh.faces)


def subdivide_midpoint(mesh: TriMesh) -> TriMesh:
    """Split every face 1 -> 4 at its edge midpoints.

    New vertices are appended after the originals, one per unique edge in
    sorted-edge order, so the result has V + E vertices and 4F faces and
    describes exactly the same piecewise-linear surface.
    """
    edges, inverse = _unique_edges(mesh.faces)
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    verts = np.vstack([mesh.vertices, mid])

    e = inverse.reshape(-1, 3) + mesh.n_vertices
    i, j, k = mesh.faces.T
    ij, jk, ki = e[:, 0], e[:, 1], e[:, 2]
    faces = np.concatenate(
        [
            np.stack([i, ij, ki], axis=1),
            np.stack([j, jk, ij], axis=1),
            np.stack([k, ki, jk], axis=1),
            np.stack([ij, jk, ki], axis=1),
        ]
    )
    return TriMesh(verts, faces)


def bisect_edges(mesh: TriMesh, edges: Iterable[tuple[int, int]]) -> TriMesh:
    """Insert the midpoint of each listed edge, splitting its incident faces 1 -> 2.

    Edges are processed one at a time in sorted order; every edge must still
    exist when its turn comes.
    """
    todo = sorted({(min(a, b), max(a, b)) for a, b in edges})
    if not todo:
        return mesh

    verts = [tuple(v) for v in mesh.vertices]
    faces = [list(f) for f in mesh.faces]
    incident: dict[tuple[int, int], set[int]] = {}
    for fi, f in enumerate(faces):
        for k in range(3):
            incident.setdefault(_key(f[k], f[(k + 1) % 3]), set()).add(fi)

    for a, b in todo:
        owners = incident.pop((a, b), None)
        if not owners:
            raise MeshError(f"edge ({a}, {b}) is not in the mesh")
        m = len(verts)
        verts.append(tuple(0.5 * (np.asarray(verts[a]) + np.asarray(verts[b]))))
        for fi in sorted(owners):
            f = faces[fi]
            # rotate so the split edge is (f[0], f[1])
            while _key(f[0], f[1]) != (a, b):
                f = f[1:] + f[:1]
            x, y, c = f
            for e in (_key(y, c), _key(c, x)):
                incident[e].discard(fi)
            new = len(faces)
            faces[fi] = [x, m, c]
            faces.append([m, y, c])
            for e in (_key(x, m), _key(m, c), _key(c, x)):
                incident.setdefault(e, set()).add(fi)
            for e in (_key(m, y), _key(y, c), _key(c, m)):
                incident.setdefault(e, set()).add(new)
    return TriMesh(np.array(verts), np.array(faces))


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


# --------------------------------------------------------------------------
# I/O


def load_obj(path: str | PathLike) -> TriMesh:
    """Read the ``v``/``f`` subset of Wavefront OBJ. Other records are ignored."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    face_lines: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise ObjParseError(lineno, "vertex needs 3 coordinates")
                try:
                    verts.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ObjParseError(lineno, f"bad vertex coordinate in {raw.strip()!r}") from None
            elif tokens[0] == "f":
                if len(tokens) != 4:
                    raise ObjParseError(
                        lineno, f"only triangles are supported, got {len(tokens) - 1}-gon"
                    )
                try:
                    idx = [int(t.split("/")[0]) for t in tokens[1:]]
                except ValueError:
                    raise ObjParseError(lineno, f"bad face index in {raw.strip()!r}") from None
                faces.append(idx)
                face_lines.append(lineno)
    n = len(verts)
    for idx, lineno in zip(faces, face_lines):
        for i in idx:
            if i < 1 or i > n:
                raise ObjParseError(lineno, f"vertex index {i} out of range 1..{n}")
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3) - 1
    return TriMesh(v, f)


def save_obj(mesh: TriMesh, path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a} {b} {c}\n")


def save_ply(
    mesh: TriMesh,
    fields: Mapping[str, np.ndarray] | None,
    path: str | PathLike,
) -> None:
    """Write an ASCII PLY with one ``double`` vertex property per named field."""
    fields = dict(fields or {})
    cols = [mesh.vertices]
    for name, values in fields.items():
        values = np.asarray(values, dtype=np.float64).ravel()
        if len(values) != mesh.n_vertices:
            raise ValueError(
                f"field {name!r} has {len(values)} values for {mesh.n_vertices} vertices"
            )
        if not name.isidentifier():
            raise ValueError(f"field name {name!r} is not a valid PLY property name")
        cols.append(values[:, None])
    table = np.hstack(cols)

    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
    ]
    header += [f"property double {name}" for name in fields]
    header += [
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(header) + "\n")
        for row in table:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
        for a, b, c in mesh.faces:
            fh.write(f"3 {a} {b} {c}\n")


def load_ply(path: str | PathLike) -> tuple[TriMesh, dict[str, np.ndarray]]:
    """Read an ASCII PLY as written by :func:`save_ply`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError("not a PLY file")
    n_vert = n_face = None
    props: list[str] = []
    current = None
    body = 0
    for i, line in enumerate(lines[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise MeshError("only ASCII PLY is supported")
        elif tok[0] == "element":
            current = tok[1]
            if current == "vertex":
                n_vert = int(tok[2])
            elif current == "face":
                n_face = int(tok[2])
        elif tok[0] == "property" and current == "vertex":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body = i + 1
            break
    if n_vert is None or n_face is None:
        raise MeshError("PLY header lacks vertex or face element")
    table = np.array(
        [[float(x) for x in lines[body + r].split()] for r in range(n_vert)]
    ).reshape(n_vert, len(props))
    faces = []
    for r in range(n_face):
        tok = lines[body + n_vert + r].split()
        if int(tok[0]) != 3:
            raise MeshError("only triangle faces are supported")
        faces.append([int(t) for t in tok[1:4]])
    col = {name: table[:, k] for k, name in enumerate(props)}
    verts = np.stack([col.pop("x"), col.pop("y"), col.pop("z")], axis=1)
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3)), col
