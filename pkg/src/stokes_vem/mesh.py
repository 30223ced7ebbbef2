"""Polygonal meshes of the unit square.

A :class:`PolyMesh` stores vertices and CCW element cycles and derives the
edge table.  Every edge ``(lo, hi)`` (``lo < hi``) carries a global unit
normal obtained by rotating ``x_hi - x_lo`` by +90 degrees; each element sees
that edge with sign +1 when its outward normal agrees with the global one and
-1 otherwise.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import Voronoi

from .errors import ConfigurationError, MeshGenerationError, MeshParseError
from .polyquad import centroid, diameter, signed_area

FAMILIES = ("M1", "M2", "M3")
MESH_TOL = 1e-12
MAGIC = "vem-poly-mesh 1"


@dataclass(frozen=True, eq=False)
class PolyMesh:
    vertices: np.ndarray
    elements: tuple
    edges: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    element_edges: tuple = field(repr=False)
    element_signs: tuple = field(repr=False)
    edge_elements: np.ndarray = field(repr=False)
    boundary_edges: np.ndarray = field(repr=False)
    boundary_vertices: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    def polygon(self, e):
        return self.vertices[self.elements[e]]

    def areas(self):
        return np.array([signed_area(self.polygon(e)) for e in range(self.n_elements)])


def build_mesh(vertices, elements):
    """Assemble a :class:`PolyMesh` and check its topological invariants.

    Raises ``ValueError`` subclasses (via :class:`MeshGenerationError`) when an
    element is not CCW or an edge is shared by more than two elements or with
    equal incidence signs.
    """
    verts = np.array(vertices, dtype=float)
    verts.setflags(write=False)
    elems = tuple(np.array(c, dtype=int) for c in elements)
    if not elems:
        raise MeshGenerationError("mesh has no elements")
    edge_id = {}
    edge_list = []
    inc = []
    e_edges, e_signs = [], []
    for ei, cyc in enumerate(elems):
        if len(cyc) < 3:
            raise MeshGenerationError(f"element {ei} has fewer than 3 vertices")
        if cyc.min() < 0 or cyc.max() >= len(verts):
            raise MeshGenerationError(f"element {ei} references a missing vertex")
        if signed_area(verts[cyc]) <= 0.0:
            raise MeshGenerationError(f"element {ei} is not counter-clockwise")
        ids, sg = [], []
        for a, b in zip(cyc, np.roll(cyc, -1)):
            key = (min(a, b), max(a, b))
            if key not in edge_id:
                edge_id[key] = len(edge_list)
                edge_list.append(key)
                inc.append([])
            k = edge_id[key]
            # traversing lo -> hi means the outward normal is the clockwise
            # rotation, i.e. opposite to the global (counter-clockwise) one
            s = -1 if a < b else 1
            inc[k].append((ei, s))
            ids.append(k)
            sg.append(s)
        e_edges.append(np.array(ids, dtype=int))
        e_signs.append(np.array(sg, dtype=int))
    edges = np.array(edge_list, dtype=int)
    d = verts[edges[:, 1]] - verts[edges[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    if length.min() <= MESH_TOL:
        raise MeshGenerationError("mesh contains a zero-length edge")
    normals = np.column_stack([-d[:, 1], d[:, 0]]) / length[:, None]
    edge_elements = -np.ones((len(edges), 2), dtype=int)
    for k, lst in enumerate(inc):
        if len(lst) > 2:
            raise MeshGenerationError(f"edge {tuple(edges[k])} shared by {len(lst)} elements")
        if len(lst) == 2 and lst[0][1] + lst[1][1] != 0:
            raise MeshGenerationError(f"edge {tuple(edges[k])} has equal incidence signs "
                                      "(inconsistent orientation)")
        # column 0 holds the element whose outward normal is the global one
        for ei, s in lst:
            col = 0 if s > 0 else 1
            edge_elements[k, col] = ei
    bedges = (edge_elements >= 0).sum(1) == 1
    bverts = np.zeros(len(verts), dtype=bool)
    bverts[edges[bedges].ravel()] = True
    for arr in (edges, normals, edge_elements, bedges, bverts):
        arr.setflags(write=False)
    return PolyMesh(vertices=verts, elements=elems, edges=edges, normals=normals,
                    element_edges=tuple(e_edges), element_signs=tuple(e_signs),
                    edge_elements=edge_elements, boundary_edges=bedges,
                    boundary_vertices=bverts)


def check_unit_square(mesh):
    """Raise MeshGenerationError unless ``mesh`` tiles [0,1]^2."""
    total = mesh.areas().sum()
    if abs(total - 1.0) > MESH_TOL:
        raise MeshGenerationError(f"element areas sum to {float(total)!r}, not 1")
    v = mesh.vertices
    if v.min() < -MESH_TOL or v.max() > 1.0 + MESH_TOL:
        raise MeshGenerationError("vertex outside the unit square")
    for k in np.flatnonzero(mesh.boundary_edges):
        a, b = v[mesh.edges[k]]
        on_side = any(abs(a[i] - c) <= MESH_TOL and abs(b[i] - c) <= MESH_TOL
                      for i in (0, 1) for c in (0.0, 1.0))
        if not on_side:
            raise MeshGenerationError(f"boundary edge {tuple(mesh.edges[k])} "
                                      "is not on the square boundary")


def mesh_diameter(mesh):
    """h = max over elements of the element diameter."""
    return max(diameter(mesh.polygon(e)) for e in range(mesh.n_elements))


# ---------------------------------------------------------------- generators

def generate(family, level, seed=0, perturbation=0.1):
    """Generate one of the three mesh families on the unit square.

    ``M1`` is an ``n x n`` quadrilateral grid (``n = 4 * 2**(level-1)``) whose
    interior vertices are shifted by up to ``perturbation / n`` per
    coordinate; ``M2`` a Lloyd-relaxed, clipped Voronoi tessellation of ``n**2``
    random seeds; ``M3`` a grid of congruent non-convex octagons.
    """
    fam = str(family).upper()
    if fam not in FAMILIES:
        raise ConfigurationError(f"unknown mesh family {family!r}; expected one of {FAMILIES}")
    if not isinstance(level, (int, np.integer)) or level < 1:
        raise ConfigurationError(f"level must be an integer >= 1, got {level!r}")
    n = 4 * 2 ** (int(level) - 1)
    rng = np.random.default_rng(seed)
    if fam == "M1":
        verts, elems = _quad_grid(n, rng, perturbation)
    elif fam == "M2":
        verts, elems = _lloyd_voronoi(n, rng)
    else:
        verts, elems = _concave_octagons(n)
    try:
        mesh = build_mesh(verts, elems)
        check_unit_square(mesh)
    except MeshGenerationError as exc:
        raise MeshGenerationError(f"{fam} level {level} seed {seed}: {exc}") from exc
    return mesh


def _quad_grid(n, rng, perturbation):
    g = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(g, g, indexing="xy")
    verts = np.column_stack([xx.ravel(), yy.ravel()])
    interior = np.ones((n + 1, n + 1), dtype=bool)
    interior[0, :] = interior[-1, :] = interior[:, 0] = interior[:, -1] = False
    interior = interior.ravel()
    shift = rng.uniform(-perturbation, perturbation, size=(interior.sum(), 2)) / n
    verts[interior] += shift

    def vid(i, j):
        return j * (n + 1) + i

    elems = [[vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
             for j in range(n) for i in range(n)]
    return verts, elems


def _concave_octagons(n, dent=0.2):
    """Grid cells whose edge midpoints are all shifted in +x / +y.

    Interior horizontal-edge midpoints move up and interior vertical-edge
    midpoints move right by ``dent / n``: each cell is dented on its bottom and
    left sides and bulges on its top and right, so all interior cells are
    congruent non-convex octagons.  Boundary midpoints stay on the boundary.
    """
    d = dent / n
    verts = []
    corner = {}
    for j in range(n + 1):
        for i in range(n + 1):
            corner[i, j] = len(verts)
            verts.append((i / n, j / n))
    hmid = {}
    for j in range(n + 1):
        for i in range(n):
            shift = d if 0 < j < n else 0.0
            hmid[i, j] = len(verts)
            verts.append(((i + 0.5) / n, j / n + shift))
    vmid = {}
    for j in range(n):
        for i in range(n + 1):
            shift = d if 0 < i < n else 0.0
            vmid[i, j] = len(verts)
            verts.append((i / n + shift, (j + 0.5) / n))
    elems = []
    for j in range(n):
        for i in range(n):
            elems.append([corner[i, j], hmid[i, j], corner[i + 1, j], vmid[i + 1, j],
                          corner[i + 1, j + 1], hmid[i, j + 1], corner[i, j + 1],
                          vmid[i, j]])
    return np.array(verts), elems


def _clipped_voronoi(points):
    """Voronoi cells of ``points`` clipped to the unit square (mirror trick)."""
    p = np.asarray(points)
    mirrored = np.vstack([p,
                          np.column_stack([-p[:, 0], p[:, 1]]),
                          np.column_stack([2.0 - p[:, 0], p[:, 1]]),
                          np.column_stack([p[:, 0], -p[:, 1]]),
                          np.column_stack([p[:, 0], 2.0 - p[:, 1]])])
    vor = Voronoi(mirrored)
    verts = vor.vertices.copy()
    verts[np.abs(verts) < 1e-10] = 0.0
    verts[np.abs(verts - 1.0) < 1e-10] = 1.0
    cells = []
    for i in range(len(p)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or not region:
            raise MeshGenerationError("unbounded Voronoi cell inside the square")
        r = np.array(region)
        ang = np.arctan2(verts[r, 1] - p[i, 1], verts[r, 0] - p[i, 0])
        cells.append(r[np.argsort(ang)])
    return verts, cells


def _merge_close(verts, cells, tol):
    """Merge vertices closer than ``tol`` and renumber the used ones."""
    order = np.lexsort((verts[:, 1], verts[:, 0]))
    rep = np.arange(len(verts))
    for a_pos, a in enumerate(order):
        if rep[a] != a:
            continue
        for b in order[a_pos + 1:]:
            if verts[b, 0] - verts[a, 0] > tol:
                break
            if rep[b] == b and np.hypot(*(verts[b] - verts[a])) < tol:
                rep[b] = a
    new_cells = []
    for c in cells:
        c = rep[c]
        keep = [c[i] for i in range(len(c)) if c[i] != c[i - 1]]
        new_cells.append(keep)
    used = sorted({v for c in new_cells for v in c})
    remap = {v: i for i, v in enumerate(used)}
    return verts[used], [[remap[v] for v in c] for c in new_cells]


def _on_boundary(pt, tol=1e-12):
    return (pt[0] <= tol or pt[0] >= 1.0 - tol or pt[1] <= tol or pt[1] >= 1.0 - tol)


def _is_corner(pt, tol=1e-12):
    return ((pt[0] <= tol or pt[0] >= 1.0 - tol) and (pt[1] <= tol or pt[1] >= 1.0 - tol))


def _collapse_short_edges(verts, cells, ratio):
    """Collapse edges shorter than ``ratio * h_P`` of an incident cell.

    Boundary and corner vertices are kept in place so the square is preserved;
    a collapse that would leave a cell with fewer than 3 vertices is skipped.
    Each pass collapses a set of edges with pairwise disjoint cells.
    """
    verts = verts.copy()
    cells = [list(c) for c in cells]
    while True:
        owners = {}
        for ci, c in enumerate(cells):
            for a, b in zip(c, c[1:] + c[:1]):
                owners.setdefault((min(a, b), max(a, b)), []).append(ci)
        hp = [diameter(verts[c]) for c in cells]
        touched = set()
        absorb = {}
        for (a, b), cs in sorted(owners.items()):
            length = np.hypot(*(verts[a] - verts[b]))
            if length >= ratio * min(hp[ci] for ci in cs):
                continue
            # cells around both endpoints must be untouched in this pass
            around = {ci for ci, c in enumerate(cells) if a in c or b in c}
            if around & touched or any(len(cells[ci]) <= 3 for ci in cs):
                continue
            ba, bb = _on_boundary(verts[a]), _on_boundary(verts[b])
            ca, cb = _is_corner(verts[a]), _is_corner(verts[b])
            if ca and cb:
                continue
            if ba and bb and len(cs) != 1:
                # interior chord between two boundary points
                continue
            if cb or (bb and not ba):
                a, b = b, a
            elif not ca and ba == bb:
                verts[a] = 0.5 * (verts[a] + verts[b])
            absorb[b] = a
            touched |= around
        if not absorb:
            break
        for ci, c in enumerate(cells):
            c = [absorb.get(v, v) for v in c]
            cells[ci] = [c[i] for i in range(len(c)) if c[i] != c[i - 1]]
    used = sorted({v for c in cells for v in c})
    remap = {v: i for i, v in enumerate(used)}
    return verts[used], [[remap[v] for v in c] for c in cells]


def _lloyd_voronoi(n, rng, sweeps=3, collapse_ratio=0.1):
    pts = rng.uniform(0.0, 1.0, size=(n * n, 2))
    for _ in range(sweeps):
        verts, cells = _clipped_voronoi(pts)
        pts = np.array([centroid(verts[c]) for c in cells])
    verts, cells = _clipped_voronoi(pts)
    verts, cells = _merge_close(verts, cells, 1e-10)
    verts, cells = _collapse_short_edges(verts, cells, collapse_ratio)
    return verts, cells


# ---------------------------------------------------------------- regularity

@dataclass(frozen=True)
class RegularityReport:
    h: float
    min_edge_ratio: float
    element_h: np.ndarray
    edge_ratio: np.ndarray
    convex: np.ndarray
    star_shaped: np.ndarray
    rho: np.ndarray
    kernel_area: np.ndarray

    @property
    def min_rho(self):
        return float(self.rho.min())


def is_convex(polygon, tol=1e-12):
    v = np.asarray(polygon, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    scale = np.hypot(e[:, 0], e[:, 1]) * np.hypot(en[:, 0], en[:, 1])
    return bool(np.all(cross >= -tol * scale))


def polygon_kernel(polygon):
    """Kernel of a CCW polygon as a (possibly empty) CCW vertex array.

    The kernel is the intersection of the left half-planes of all edges,
    computed by successive Sutherland-Hodgman clipping of the polygon itself.
    """
    v = np.asarray(polygon, dtype=float)
    ker = v.copy()
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        if len(ker) == 0:
            break
        d = b - a
        side = d[0] * (ker[:, 1] - a[1]) - d[1] * (ker[:, 0] - a[0])
        out = []
        m = len(ker)
        for i in range(m):
            p, q = ker[i], ker[(i + 1) % m]
            sp, sq = side[i], side[(i + 1) % m]
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                out.append(p + t * (q - p))
        ker = np.array(out) if out else np.zeros((0, 2))
    return ker


def chebyshev_radius(polygon):
    """Radius and center of the largest disk inside all edge half-planes (LP)."""
    v = np.asarray(polygon, dtype=float)
    d = np.roll(v, -1, axis=0) - v
    length = np.hypot(d[:, 0], d[:, 1])
    inward = np.column_stack([-d[:, 1], d[:, 0]]) / length[:, None]
    # inward . (c - a) >= r   <=>   -inward . c + r <= -inward . a
    a_ub = np.column_stack([-inward, np.ones(len(v))])
    b_ub = -(inward * v).sum(1)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None), (None, None), (0.0, None)], method="highs")
    if not res.success:
        return 0.0, centroid(v)
    return float(res.x[2]), res.x[:2]


def regularity_report(mesh):
    ne = mesh.n_elements
    hp = np.zeros(ne)
    ratio = np.zeros(ne)
    convex = np.zeros(ne, dtype=bool)
    star = np.zeros(ne, dtype=bool)
    rho = np.zeros(ne)
    karea = np.zeros(ne)
    for e in range(ne):
        poly = mesh.polygon(e)
        hp[e] = diameter(poly)
        el = np.hypot(*(np.roll(poly, -1, axis=0) - poly).T)
        ratio[e] = el.min() / hp[e]
        convex[e] = is_convex(poly)
        ker = polygon_kernel(poly)
        karea[e] = signed_area(ker) if len(ker) >= 3 else 0.0
        r, _ = chebyshev_radius(poly)
        rho[e] = r / hp[e]
        star[e] = rho[e] > 1e-12 and karea[e] > 0.0
    return RegularityReport(h=float(hp.max()), min_edge_ratio=float(ratio.min()),
                            element_h=hp, edge_ratio=ratio, convex=convex,
                            star_shaped=star, rho=rho, kernel_area=karea)


# ---------------------------------------------------------------- text I/O

def write_mesh(mesh, stream):
    stream.write(MAGIC + "\n")
    stream.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
    for x, y in mesh.vertices:
        stream.write(f"{float(x)!r} {float(y)!r}\n")
    for cyc in mesh.elements:
        stream.write(" ".join(str(int(i)) for i in [len(cyc), *cyc]) + "\n")


def read_mesh(stream):
    lines = [(i + 1, ln.split()) for i, ln in enumerate(stream.read().splitlines())]
    lines = [(no, tok) for no, tok in lines if tok]
    if not lines or " ".join(lines[0][1]) != MAGIC:
        raise MeshParseError(f"expected header {MAGIC!r}", 1)
    if len(lines) < 2 or len(lines[1][1]) != 2:
        raise MeshParseError("expected '<nv> <ne>'", lines[1][0] if len(lines) > 1 else 2)
    no, tok = lines[1]
    try:
        nv, ne = int(tok[0]), int(tok[1])
    except ValueError as exc:
        raise MeshParseError("counts must be integers", no) from exc
    if nv < 3 or ne < 1:
        raise MeshParseError(f"need at least 3 vertices and 1 element, got {nv}, {ne}", no)
    if len(lines) != 2 + nv + ne:
        raise MeshParseError(f"expected {nv} vertex and {ne} element lines, "
                             f"found {len(lines) - 2} data lines", no)
    verts = np.zeros((nv, 2))
    for i in range(nv):
        no, tok = lines[2 + i]
        if len(tok) != 2:
            raise MeshParseError("vertex line needs two coordinates", no)
        try:
            verts[i] = float(tok[0]), float(tok[1])
        except ValueError as exc:
            raise MeshParseError("bad coordinate", no) from exc
    elems = []
    for i in range(ne):
        no, tok = lines[2 + nv + i]
        try:
            vals = [int(t) for t in tok]
        except ValueError as exc:
            raise MeshParseError("element indices must be integers", no) from exc
        m, cyc = vals[0], vals[1:]
        if m < 3 or len(cyc) != m:
            raise MeshParseError(f"element declares {m} vertices, lists {len(cyc)}", no)
        if min(cyc) < 0 or max(cyc) >= nv:
            raise MeshParseError("vertex index out of range", no)
        if signed_area(verts[cyc]) <= 0.0:
            raise MeshParseError("element is not counter-clockwise", no)
        elems.append(cyc)
    try:
        return build_mesh(verts, elems)
    except MeshGenerationError as exc:
        raise MeshParseError(str(exc)) from exc
