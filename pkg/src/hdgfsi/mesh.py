"""Conforming triangular meshes of a fluid/solid domain split along an interface.

A :class:`Mesh` stores vertices, triangles and a per-triangle subdomain tag
(``"s"`` solid, ``"f"`` fluid). Facets (edges), their adjacency and the
interface between the two subdomains are derived on construction. Boundary
labels map a name to a set of facet ids; the interface is always labelled
``"sigma"``.

Local edge ``e`` of a triangle joins its local vertices ``e`` and
``(e + 1) % 3``. A facet is stored with its two global vertex ids sorted
ascending; that order fixes the facet parametrisation used for trace
unknowns. The facet normal points out of the adjacent triangle with the
lower index.
"""

from dataclasses import dataclass, field

import numpy as np

INTERFACE = "sigma"
TAGS = ("s", "f")
HEADER = "hdgfsi-mesh v1"


class MeshError(ValueError):
    pass


class MeshFormatError(MeshError):
    """Malformed mesh file; ``lineno`` is 1-based."""

    def __init__(self, message, lineno):
        super().__init__(f"{message}, line {lineno}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    solid: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        s = np.ascontiguousarray(self.solid, dtype=bool)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (nt, 3)")
        if s.shape != (len(t),):
            raise MeshError("one subdomain tag per triangle required")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("vertex index out of range")
        set_ = object.__setattr__
        set_(self, "vertices", v)
        set_(self, "triangles", t)
        set_(self, "solid", s)
        self._build_geometry()
        self._build_facets()
        labels = {name: np.asarray(ids, dtype=np.int64) for name, ids in self.labels.items()}
        if self.interface_facets.size:
            labels[INTERFACE] = self.interface_facets
        set_(self, "labels", labels)
        for arr in (v, t, s):
            arr.setflags(write=False)

    def _build_geometry(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        bad = np.flatnonzero(det <= 0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has non-positive signed area")
        jac = np.stack([e1, e2], axis=-1)  # columns are edge vectors
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= det[:, None, None]
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        set_ = object.__setattr__
        set_(self, "jacobian", jac)
        set_(self, "inv_jacobian", inv)
        set_(self, "det_jacobian", det)
        set_(self, "areas", 0.5 * det)
        set_(self, "diameters", np.linalg.norm(edges, axis=2).max(axis=1))
        set_(self, "centroids", p.mean(axis=1))

    def _build_facets(self):
        t = self.triangles
        nt = len(t)
        local = np.stack([t, np.roll(t, -1, axis=1)], axis=-1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        facets, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if counts.max(initial=0) > 2:
            f = facets[np.argmax(counts)]
            raise MeshError(f"facet {tuple(f)} shared by more than two triangles")
        nf = len(facets)
        elem_facets = inverse.reshape(nt, 3)
        owner = np.full((nf, 2), -1, dtype=np.int64)
        owner_local = np.full((nf, 2), -1, dtype=np.int64)
        # element ids are visited in increasing order, so slot 0 is the lower index
        for flat in range(3 * nt):
            f = inverse[flat]
            slot = 0 if owner[f, 0] < 0 else 1
            owner[f, slot] = flat // 3
            owner_local[f, slot] = flat % 3
        a = self.vertices[facets[:, 0]]
        b = self.vertices[facets[:, 1]]
        tangent = b - a
        length = np.linalg.norm(tangent, axis=1)
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / length[:, None]
        # orient out of the owner (lower-index) element
        to_c = self.centroids[owner[:, 0]] - 0.5 * (a + b)
        flip = np.einsum("ij,ij->i", normal, to_c) > 0
        normal[flip] *= -1
        boundary = owner[:, 1] < 0
        interface = ~boundary & (self.solid[owner[:, 0]] != self.solid[np.maximum(owner[:, 1], 0)])
        # sign of the facet normal seen from each element's local edge
        sign = np.where(owner[elem_facets, 0] == np.arange(nt)[:, None], 1.0, -1.0)
        set_ = object.__setattr__
        set_(self, "facets", facets)
        set_(self, "elem_facets", elem_facets)
        set_(self, "elem_facet_sign", sign)
        set_(self, "facet_elems", owner)
        set_(self, "facet_local", owner_local)
        set_(self, "facet_lengths", length)
        set_(self, "facet_normals", normal)
        set_(self, "facet_midpoints", 0.5 * (a + b))
        set_(self, "boundary_facets", np.flatnonzero(boundary))
        set_(self, "interior_facets", np.flatnonzero(~boundary))
        set_(self, "interface_facets", np.flatnonzero(interface))

    # -- summary quantities -------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def h(self):
        """Mesh size: the largest element diameter."""
        return float(self.diameters.max())

    @property
    def gamma(self):
        """Smallest gamma with h_F <= h_K <= gamma h_F on every element."""
        hf = self.facet_lengths[self.elem_facets]
        return float((self.diameters[:, None] / hf).max())

    def element_normals(self):
        """Outward unit normals, shape (nt, 3, 2), per local edge."""
        n = self.facet_normals[self.elem_facets]
        return n * self.elem_facet_sign[..., None]

    def label_of(self):
        """Map facet id -> label name for labelled facets."""
        out = {}
        for name, ids in self.labels.items():
            for f in ids:
                out[int(f)] = name
        return out

    def with_labels(self, labels):
        merged = {k: v for k, v in self.labels.items() if k != INTERFACE}
        merged.update(labels)
        return Mesh(self.vertices, self.triangles, self.solid, merged)

    def subdomain_area(self, solid):
        return float(self.areas[self.solid == solid].sum())


def generate_structured(rect, nx, ny, split_y=None, tag="f"):
    """Uniform triangulation of ``rect = (x0, x1, y0, y1)``.

    Each of the ``nx * ny`` cells is cut along its rising diagonal into two
    triangles. With ``split_y`` the cells above that ordinate are tagged
    solid and those below fluid; otherwise all triangles get ``tag``.
    """
    if nx < 1 or ny < 1:
        raise MeshError(f"nx and ny must be >= 1, got {nx}, {ny}")
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {rect}")
    if tag not in TAGS:
        raise MeshError(f"tag must be one of {TAGS}, got {tag!r}")
    x = np.linspace(x0, x1, nx + 1)
    y = np.linspace(y0, y1, ny + 1)
    if split_y is not None:
        j = (split_y - y0) / (y1 - y0) * ny
        if abs(j - round(j)) > 1e-9 or not 0 <= round(j) <= ny:
            raise MeshError(f"split_y={split_y} does not lie on a mesh line")
        y[int(round(j))] = split_y
    xx, yy = np.meshgrid(x, y, indexing="xy")
    verts = np.column_stack([xx.ravel(), yy.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    v00 = (j * (nx + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    cy = verts[tris, 1].mean(axis=1)
    if split_y is None:
        solid = np.full(len(tris), tag == "s")
    else:
        solid = cy > split_y
    return Mesh(verts, tris, solid)


def classify_facets(mesh, predicates):
    """Attach boundary labels from ``{name: predicate(x, y) -> bool}``.

    Each predicate is evaluated at facet midpoints. Every boundary facet must
    be claimed by exactly one predicate; interface facets are labelled
    ``"sigma"`` automatically and are not offered to the predicates.
    """
    bf = mesh.boundary_facets
    mid = mesh.facet_midpoints[bf]
    hits = np.zeros((len(predicates), len(bf)), dtype=bool)
    names = list(predicates)
    for r, name in enumerate(names):
        if name == INTERFACE:
            raise MeshError(f"label {INTERFACE!r} is reserved for the interface")
        hits[r] = np.asarray(predicates[name](mid[:, 0], mid[:, 1]), dtype=bool)
    count = hits.sum(axis=0)
    if np.any(count != 1):
        lines = []
        for c, what in ((0, "uncovered"), (2, "doubly covered")):
            sel = count == c if c == 0 else count >= c
            for p in mid[sel]:
                lines.append(f"{what} facet at midpoint ({p[0]:.6g}, {p[1]:.6g})")
        raise MeshError("boundary labelling failed:\n" + "\n".join(lines))
    labels = {name: bf[hits[r]] for r, name in enumerate(names)}
    return mesh.with_labels(labels)


def save_mesh(mesh, path):
    lines = [HEADER, f"{mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    for tri, s in zip(mesh.triangles, mesh.solid):
        lines.append(f"{tri[0]} {tri[1]} {tri[2]} {'s' if s else 'f'}")
    for name, ids in mesh.labels.items():
        if name == INTERFACE:
            continue
        lines.append(f"label {name} {len(ids)}")
        lines += [f"{a} {b}" for a, b in mesh.facets[ids]]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    with open(path) as fh:
        raw = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(raw):
            pos += 1
            text = raw[pos - 1].strip()
            if text:
                return text.split(), pos
        raise MeshFormatError("unexpected end of file", pos + 1)

    toks, ln = next_line()
    if " ".join(toks) != HEADER:
        raise MeshFormatError(f"bad header, expected {HEADER!r}", ln)
    toks, ln = next_line()
    try:
        nv, nt = (int(t) for t in toks)
    except ValueError:
        raise MeshFormatError("expected '<nv> <nt>'", ln) from None
    verts = np.empty((nv, 2))
    for i in range(nv):
        toks, ln = next_line()
        try:
            verts[i] = [float(toks[0]), float(toks[1])]
            if len(toks) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise MeshFormatError("expected vertex 'x y'", ln) from None
    tris = np.empty((nt, 3), dtype=np.int64)
    solid = np.empty(nt, dtype=bool)
    for i in range(nt):
        toks, ln = next_line()
        if len(toks) != 4 or toks[3] not in TAGS:
            raise MeshFormatError("expected triangle 'i0 i1 i2 tag' with tag in {s,f}", ln)
        try:
            idx = [int(t) for t in toks[:3]]
        except ValueError:
            raise MeshFormatError("bad vertex index", ln) from None
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshFormatError("vertex index out of range", ln)
        p = verts[idx]
        area2 = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0])
        if not area2 > 0:
            raise MeshFormatError("triangle with non-positive area", ln)
        tris[i] = idx
        solid[i] = toks[3] == "s"
    label_pairs = {}
    while pos < len(raw):
        if not raw[pos].strip():
            pos += 1
            continue
        toks, ln = next_line()
        if len(toks) != 3 or toks[0] != "label":
            raise MeshFormatError("expected 'label <name> <count>'", ln)
        try:
            count = int(toks[2])
        except ValueError:
            raise MeshFormatError("bad label count", ln) from None
        pairs = []
        for _ in range(count):
            ptoks, pln = next_line()
            try:
                a, b = (int(t) for t in ptoks)
            except ValueError:
                raise MeshFormatError("expected facet 'a b'", pln) from None
            if min(a, b) < 0 or max(a, b) >= nv:
                raise MeshFormatError("vertex index out of range", pln)
            pairs.append((min(a, b), max(a, b), pln))
        label_pairs[toks[1]] = pairs
    mesh = Mesh(verts, tris, solid)
    lookup = {tuple(f): i for i, f in enumerate(mesh.facets.tolist())}
    labels = {}
    for name, pairs in label_pairs.items():
        ids = []
        for a, b, pln in pairs:
            if (a, b) not in lookup:
                raise MeshFormatError(f"label {name!r} names a non-facet ({a}, {b})", pln)
            ids.append(lookup[(a, b)])
        labels[name] = np.array(ids, dtype=np.int64)
    return mesh.with_labels(labels) if labels else mesh


def check_labels(mesh):
    """Raise if labels overlap or leave a boundary/interface facet unlabelled."""
    seen = np.zeros(mesh.n_facets, dtype=int)
    for ids in mesh.labels.values():
        np.add.at(seen, ids, 1)
    need = np.zeros(mesh.n_facets, dtype=bool)
    need[mesh.boundary_facets] = True
    need[mesh.interface_facets] = True
    bad = np.flatnonzero((need & (seen != 1)) | (~need & (seen > 0)))
    if bad.size:
        pts = ", ".join(f"({x:.6g}, {y:.6g})" for x, y in mesh.facet_midpoints[bad[:10]])
        raise MeshError(f"{bad.size} facets with inconsistent labels, e.g. at {pts}")
