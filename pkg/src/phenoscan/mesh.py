"""Indexed triangle meshes: topology queries, smoothing and PLY/OBJ files."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    """Malformed mesh or mesh file."""


@dataclass
class TriMesh:
    """Vertices in mm, triangles as vertex index triples.

    ``normals`` and ``curvature`` are optional per-vertex attributes,
    ``labels`` an optional per-face region id.
    """

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None
    curvature: np.ndarray | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriMesh":
        cp = lambda a: None if a is None else a.copy()
        return TriMesh(
            self.vertices.copy(), self.faces.copy(), cp(self.normals), cp(self.curvature), cp(self.labels), dict(self.meta)
        )

    # --- geometry -----------------------------------------------------------

    def face_cross(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        c = self.face_cross()
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return np.divide(c, n, out=np.zeros_like(c), where=n > 0)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def volume(self) -> float:
        """Signed enclosed volume; positive for outward-facing closed meshes."""
        v = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def transformed(self, pose) -> "TriMesh":
        out = self.copy()
        out.vertices = pose.apply(self.vertices)
        if out.normals is not None:
            out.normals = self.normals @ pose.R.T
        return out

    # --- topology -------------------------------------------------------------

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges (E, 2) and the number of faces using each."""
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def is_watertight(self) -> bool:
        if self.n_faces == 0:
            return False
        _, counts = self.edges()
        return bool(np.all(counts == 2))

    def is_consistently_oriented(self) -> bool:
        """Every directed edge appears at most once."""
        d = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        return len(np.unique(d, axis=0)) == len(d)

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return int(len(used) - len(self.edges()[0]) + self.n_faces)

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency (1 per mesh edge)."""
        e, _ = self.edges()
        n = self.n_vertices
        a = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return (a + a.T).tocsr()

    def components(self) -> tuple[int, np.ndarray]:
        """Vertex-connected components over the vertices used by faces.

        Unused vertices get label -1.
        """
        n, lab = connected_components(self.adjacency(), directed=False)
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.faces.ravel()] = True
        lab = np.where(used, lab, -1)
        keep = np.unique(lab[used])
        remap = np.full(n, -1)
        remap[keep] = np.arange(len(keep))
        return len(keep), np.where(used, remap[np.maximum(lab, 0)], -1)

    def submesh(self, face_mask) -> "TriMesh":
        """Faces selected by a boolean mask, with unused vertices dropped."""
        faces = self.faces[np.asarray(face_mask, dtype=bool)]
        used, inv = np.unique(faces.ravel(), return_inverse=True)
        pick = lambda a: None if a is None else a[used]
        labels = None if self.labels is None else self.labels[np.asarray(face_mask, dtype=bool)]
        out = TriMesh(self.vertices[used], inv.reshape(-1, 3), pick(self.normals), pick(self.curvature), labels)
        out.meta["vertex_ids"] = used
        return out

    def remove_degenerate(self, tol: float = 0.0) -> "TriMesh":
        """Drop faces with repeated indices or area <= tol."""
        f = self.faces
        ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 2] != f[:, 0])
        ok &= self.face_areas() > tol
        if ok.all():
            return self
        return replace(self.copy(), faces=f[ok], labels=None if self.labels is None else self.labels[ok])


# ---------------------------------------------------------------------------
# smoothing


def _umbrella(mesh: TriMesh) -> sparse.csr_matrix:
    a = mesh.adjacency()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sparse.diags(inv) @ a


def laplacian_smooth(mesh: TriMesh, iterations: int = 1, lam: float = 1.0) -> TriMesh:
    """Uniform-weight Laplacian smoothing ``v += lam * (mean(neighbours) - v)``."""
    W = _umbrella(mesh)
    v = mesh.vertices.copy()
    for _ in range(iterations):
        v = v + lam * (W @ v - v)
    out = mesh.copy()
    out.vertices = v
    out.normals = None
    out.curvature = None
    return out


def taubin_smooth(mesh: TriMesh, iterations: int = 10, lam: float = 0.5, mu: float = -0.53) -> TriMesh:
    """Alternating shrink/inflate steps; removes voxel staircase noise without shrinking."""
    W = _umbrella(mesh)
    v = mesh.vertices.copy()
    for _ in range(iterations):
        v = v + lam * (W @ v - v)
        v = v + mu * (W @ v - v)
    out = mesh.copy()
    out.vertices = v
    out.normals = None
    out.curvature = None
    return out


# ---------------------------------------------------------------------------
# files


def write_ply(path, mesh: TriMesh) -> None:
    """Binary little-endian PLY: float32 vertices, uint32 triangle indices."""
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar uint vertex_indices\nend_header\n"
    ).encode("ascii")
    verts = np.ascontiguousarray(mesh.vertices, dtype="<f4").tobytes()
    faces = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("i", "<u4", (3,))])
    faces["n"] = 3
    faces["i"] = mesh.faces
    Path(path).write_bytes(header + verts + faces.tobytes())


def read_ply(path) -> TriMesh:
    """Read triangle PLY files (binary little-endian or ASCII; x, y, z vertices)."""
    data = Path(path).read_bytes()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshError(f"{path}: not a PLY file")
    body = data[data.index(b"\n", end) + 1 :]
    lines = data[:end].decode("ascii").splitlines()
    fmt = None
    elements = []
    for ln in lines:
        tok = ln.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            elements[-1][2].append(tok[1:])
    if fmt not in ("binary_little_endian", "ascii"):
        raise MeshError(f"{path}: unsupported PLY format {fmt}")
    sizes = {"char": "b", "uchar": "B", "short": "h", "ushort": "H", "int": "i", "uint": "I", "float": "f", "double": "d",
             "int8": "b", "uint8": "B", "int16": "h", "uint16": "H", "int32": "i", "uint32": "I", "float32": "f", "float64": "d"}
    verts = faces = None
    if fmt == "ascii":
        rows = iter(body.decode("ascii").split("\n"))
        for name, count, props in elements:
            vals = [next(rows).split() for _ in range(count)]
            if name == "vertex":
                names = [p[-1] for p in props]
                idx = [names.index(c) for c in "xyz"]
                verts = np.array([[float(r[i]) for i in idx] for r in vals]).reshape(-1, 3)
            elif name == "face":
                faces = np.array([[int(x) for x in r[1:4]] for r in vals if int(r[0]) == 3], dtype=np.int64).reshape(-1, 3)
        return TriMesh(verts, faces)
    pos = 0
    for name, count, props in elements:
        if all(p[0] != "list" for p in props):
            dt = np.dtype([(p[1], "<" + sizes[p[0]]) for p in props])
            arr = np.frombuffer(body, dtype=dt, count=count, offset=pos)
            pos += dt.itemsize * count
            if name == "vertex":
                verts = np.column_stack([arr[c].astype(float) for c in "xyz"])
            continue
        if name != "face" or len(props) != 1:
            raise MeshError(f"{path}: unsupported element {name}")
        _, ct, it = props[0][:3]
        cs, isz = struct.calcsize(sizes[ct]), struct.calcsize(sizes[it])
        dt = np.dtype([("n", "<" + sizes[ct]), ("i", "<" + sizes[it], (3,))])
        arr = np.frombuffer(body, dtype=dt, count=count, offset=pos)
        if np.any(arr["n"] != 3):
            raise MeshError(f"{path}: only triangle faces are supported")
        faces = arr["i"].astype(np.int64)
        pos += count * (cs + 3 * isz)
    if verts is None or faces is None:
        raise MeshError(f"{path}: missing vertex or face element")
    return TriMesh(verts, faces)


def write_obj(path, mesh: TriMesh) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for v in mesh.vertices.tolist():
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in mesh.faces + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def read_obj(path) -> TriMesh:
    verts, faces = [], []
    with open(path, encoding="ascii") as fh:
        for ln in fh:
            tok = ln.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
