"""Design domain, level set field utilities and network initialization.

The structural domain is a regular grid of unit square elements.  Level set
values live on grid nodes (x fastest, then y).  Solid is phi >= 0, void is
phi < 0, and the zero contour is the structural boundary.

Physical coordinates are mapped into the network's input frame by an
isotropic affine map that centers the domain and scales the longer side to
[-1, 1].  Keeping the map isotropic means signed distances stay signed
distances after scaling, just measured in input-frame units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import network as net

log = logging.getLogger(__name__)


class FitDivergence(RuntimeError):
    """Raised when the initialization fit produces non-finite parameters."""


@dataclass(frozen=True)
class Grid:
    """Regular grid of square elements, element size `h`.

    Nodes are numbered x fastest: node (i, j) has id i + j * (nx + 1).
    Element (i, j) has id i + j * nx, with corner nodes ordered
    counterclockwise from the lower left.
    """

    nx: int
    ny: int
    h: float = 1.0

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid needs at least one element per direction, got {self.nx}x{self.ny}")
        if self.h <= 0:
            raise ValueError("element size must be positive")

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self) -> tuple[float, float]:
        """Physical side lengths (Lx, Ly)."""
        return (self.nx * self.h, self.ny * self.h)

    def node_id(self, i: int, j: int) -> int:
        return i + j * (self.nx + 1)

    def node_coords(self) -> np.ndarray:
        """Physical coordinates of all nodes, shape (n_nodes, 2)."""
        xs = np.arange(self.nx + 1) * self.h
        ys = np.arange(self.ny + 1) * self.h
        gx, gy = np.meshgrid(xs, ys)  # row index j, column index i
        return np.column_stack([gx.ravel(), gy.ravel()])

    def element_node_ids(self) -> np.ndarray:
        """Corner node ids per element, shape (n_elements, 4), CCW from lower left."""
        i = np.arange(self.nx)
        j = np.arange(self.ny)
        gi, gj = np.meshgrid(i, j)
        n1 = gi + gj * (self.nx + 1)
        n1 = n1.ravel()
        n2 = n1 + 1
        n3 = n2 + self.nx + 1
        n4 = n1 + self.nx + 1
        return np.column_stack([n1, n2, n3, n4])

    # ---- input-frame mapping

    @property
    def norm_scale(self) -> float:
        """d(input frame)/d(physical): 2 / max(Lx, Ly)."""
        lx, ly = self.extent
        return 2.0 / max(lx, ly)

    def to_normalized(self, points: np.ndarray) -> np.ndarray:
        """Map physical points into the network input frame."""
        lx, ly = self.extent
        s = self.norm_scale
        pts = np.asarray(points, dtype=np.float64)
        return (pts - [0.5 * lx, 0.5 * ly]) * s

    def normalized_node_coords(self) -> np.ndarray:
        return self.to_normalized(self.node_coords())


@dataclass
class ScalarField:
    """Nodal scalar field on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has shape {self.values.shape}, grid needs ({self.grid.n_nodes},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def as_2d(self) -> np.ndarray:
        """View shaped (ny + 1, nx + 1); row index is the y node index."""
        return self.values.reshape(self.grid.ny + 1, self.grid.nx + 1)


@dataclass(frozen=True)
class HoleSeedPattern:
    """Circular holes cut from an otherwise solid plate.

    Each entry is (cx, cy, r) in physical units.  An empty tuple means fully
    solid.
    """

    circles: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "circles", tuple((float(a), float(b), float(c)) for a, b, c in self.circles)
        )
        if any(r <= 0 for _, _, r in self.circles):
            raise ValueError("hole radii must be positive")


def hole_lattice(grid: Grid, n_cols: int, n_rows: int, radius: float) -> HoleSeedPattern:
    """Evenly spaced lattice of holes covering the domain."""
    lx, ly = grid.extent
    circles = []
    for j in range(n_rows):
        cy = ly * (2 * j + 1) / (2 * n_rows)
        for i in range(n_cols):
            cx = lx * (2 * i + 1) / (2 * n_cols)
            circles.append((cx, cy, radius))
    return HoleSeedPattern(tuple(circles))


def default_hole_lattice(grid: Grid) -> HoleSeedPattern:
    """Hole layout used by the shipped problem presets.

    Three columns by two rows per square patch of side min(Lx, Ly), hole
    radius one eighth of that side.  A 100x100 domain gets 3x2 holes, a
    200x100 domain 6x2, which is the mirror image of the half-domain layout.
    """
    lx, ly = grid.extent
    side = min(lx, ly)
    n_cols = max(1, round(3 * lx / side))
    n_rows = max(1, round(2 * ly / side))
    return hole_lattice(grid, n_cols, n_rows, side / 8.0)


def five_hole_plate(grid: Grid) -> HoleSeedPattern:
    """Plate with four corner holes and one central hole (fit benchmark target)."""
    lx, ly = grid.extent
    r = min(lx, ly) / 6.0
    centers = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75), (0.5, 0.5)]
    return HoleSeedPattern(tuple((lx * a, ly * b, r) for a, b in centers))


def seed_field(pattern: HoleSeedPattern, grid: Grid) -> ScalarField:
    """Signed distance to the hole union, positive in solid material.

    For disjoint circles this is the exact signed distance; overlapping holes
    give the pointwise minimum, which is still a valid level set seed.  With
    no holes the field is the constant max(Lx, Ly), a fully solid plate.
    """
    coords = grid.node_coords()
    if not pattern.circles:
        cap = max(grid.extent)
        return ScalarField(grid, np.full(grid.n_nodes, cap))
    dist = np.full(grid.n_nodes, np.inf)
    for cx, cy, r in pattern.circles:
        d = np.sqrt((coords[:, 0] - cx) ** 2 + (coords[:, 1] - cy) ** 2) - r
        np.minimum(dist, d, out=dist)
    return ScalarField(grid, dist)


@dataclass(frozen=True)
class HeavisideParams:
    """Smoothed Heaviside projection.

    `delta` is the floor value in the void, `half_width` the half width of
    the smoothing band measured in level set units.
    """

    delta: float = 1e-3
    half_width: float = 2.0

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.half_width <= 0.0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")


def heaviside(phi, params: HeavisideParams):
    """Cubic smoothed Heaviside.

    Equal to `delta` for phi <= -half_width, 1 for phi >= half_width, and a
    monotone cubic in between that is continuous at the band edges:

        0.75 (1 - delta) (phi/D - phi^3 / (3 D^3)) + (1 + delta) / 2.
    """
    d = params.delta
    w = params.half_width
    phi = np.asarray(phi, dtype=np.float64)
    t = np.clip(phi / w, -1.0, 1.0)
    return 0.75 * (1.0 - d) * (t - t**3 / 3.0) + 0.5 * (1.0 + d)


def element_means(field: ScalarField) -> np.ndarray:
    """Average of the four corner values per element, shape (n_elements,)."""
    v = field.as_2d()
    return 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, :-1] + v[1:, 1:]).ravel()


def volume_fraction(field: ScalarField, params: HeavisideParams) -> float:
    """Material fraction of the design: mean of H(phi) over element midpoints."""
    return float(np.mean(heaviside(element_means(field), params)))


# ---------------------------------------------------------------- network fit


@dataclass(frozen=True)
class FitConfig:
    """Settings for fitting the network to a target field.

    `target_scale` multiplies the target before fitting (used to express a
    physical signed distance in input-frame units) and `clamp_limit`, when
    set, clips the scaled target to [-clamp_limit, clamp_limit] so the fit
    spends its capacity near the boundary band rather than on far-field
    distance values.
    """

    iterations: int = 2000
    step_size: float = 1e-2
    target_scale: float = 1.0
    clamp_limit: float | None = None

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.clamp_limit is not None and self.clamp_limit <= 0:
            raise ValueError("clamp_limit must be positive when set")


def _loss_and_grad(theta: net.ParameterVector, pts: np.ndarray, target: np.ndarray):
    """Mean squared error over the batch and its parameter gradient.

    Reverse-mode accumulation of the scalar loss directly; cheaper than
    materializing the full parameter Jacobian every step.
    """
    layers = net.unpack(theta)
    acts = [pts]
    a = pts
    for w, b in layers[:-1]:
        a = np.tanh(a @ w.T + b)
        acts.append(a)
    w_out, b_out = layers[-1]
    pred = (a @ w_out.T + b_out)[:, 0]
    err = pred - target
    n = pts.shape[0]
    loss = float(np.dot(err, err) / n)

    grad = np.empty_like(theta.values)
    # sensitivity of the loss to each layer's pre-activation
    g = (2.0 / n) * err[:, None]
    offset = theta.values.size
    for l in range(len(layers) - 1, -1, -1):
        w, b = layers[l]
        offset -= b.size
        grad[offset : offset + b.size] = g.sum(axis=0)
        offset -= w.size
        grad[offset : offset + w.size] = (g.T @ acts[l]).ravel()
        if l > 0:
            g = (g @ w) * (1.0 - acts[l] * acts[l])
    return loss, grad


def fit_network(
    arch: net.NetworkArchitecture,
    seed: int,
    target: ScalarField,
    cfg: FitConfig = FitConfig(),
) -> net.ParameterVector:
    """Fit the network to a nodal target field by adaptive moment descent.

    Full-batch updates over all grid nodes; deterministic for a given seed
    and configuration.  Returns the iterate with the best recorded loss.
    Raises FitDivergence if the loss or parameters become non-finite, or if
    the loss explodes to 1e4 times its initial value.
    """
    pts = target.grid.normalized_node_coords()
    values = target.values * cfg.target_scale
    if cfg.clamp_limit is not None:
        values = np.clip(values, -cfg.clamp_limit, cfg.clamp_limit)

    theta = net.init_random(arch, seed)
    x = theta.values.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    best_loss = np.inf
    best_x = x.copy()
    initial_loss = None
    for k in range(1, cfg.iterations + 1):
        loss, grad = _loss_and_grad(net.ParameterVector(x, arch), pts, values)
        if not np.isfinite(loss):
            raise FitDivergence(f"fit diverged at iteration {k}: loss is not finite")
        if initial_loss is None:
            initial_loss = loss
        elif loss > 1.0 and loss > 1e4 * (initial_loss + 1e-12):
            raise FitDivergence(f"fit diverged at iteration {k}: loss exploded to {loss:.3e}")
        if loss < best_loss:
            best_loss = loss
            best_x = x.copy()
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**k)
        v_hat = v / (1.0 - beta2**k)
        x = x - cfg.step_size * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(x)):
            raise FitDivergence(f"fit diverged at iteration {k}: parameters are not finite")
    log.info("fit %s: best loss %.3e after %d iterations", arch, best_loss, cfg.iterations)
    return net.ParameterVector(best_x, arch)


def zero_level_iou(a: ScalarField, b: ScalarField) -> float:
    """Intersection over union of the nodal solid masks (phi >= 0)."""
    ma = a.values >= 0.0
    mb = b.values >= 0.0
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ma & mb) / union


# ---------------------------------------------------------------- zero contour

# Segment table for marching squares.  Keys are the 4-bit corner sign code
# (bit set when the corner is solid), in order lower-left, lower-right,
# upper-right, upper-left.  Values list crossed edge pairs; edges are
# 0: bottom, 1: right, 2: top, 3: left.
_EDGE_SEGMENTS = {
    1: [(3, 0)],
    2: [(0, 1)],
    3: [(3, 1)],
    4: [(1, 2)],
    6: [(0, 2)],
    7: [(3, 2)],
    8: [(2, 3)],
    9: [(2, 0)],
    11: [(2, 1)],
    12: [(1, 3)],
    13: [(1, 0)],
    14: [(0, 3)],
}
# codes 5 and 10 are saddles, resolved by the cell-center mean


def _edge_point(edge: int, i: int, j: int, corners: np.ndarray) -> tuple[float, float]:
    bl, br, tr, tl = corners
    if edge == 0:
        t = bl / (bl - br)
        return (i + t, float(j))
    if edge == 1:
        t = br / (br - tr)
        return (i + 1.0, j + t)
    if edge == 2:
        t = tl / (tl - tr)
        return (i + t, j + 1.0)
    t = bl / (bl - tl)
    return (float(i), j + t)


def extract_zero_contour(field: ScalarField) -> list[np.ndarray]:
    """Marching squares zero contour as a list of polylines.

    Returns arrays of shape (k, 2) in physical coordinates.  Nodes with
    phi == 0 count as solid.  Saddle cells are split according to the sign
    of the cell-center average.  Cell traversal and chain assembly are
    deterministic, so identical fields give identical polylines.
    """
    v = field.as_2d()
    h = field.grid.h
    segments: list[tuple[tuple[float, float], tuple[float, float]]] = []
    for j in range(field.grid.ny):
        for i in range(field.grid.nx):
            corners = np.array([v[j, i], v[j, i + 1], v[j + 1, i + 1], v[j + 1, i]])
            code = sum(1 << k for k in range(4) if corners[k] >= 0.0)
            if code in (0, 15):
                continue
            if code in (5, 10):
                center_solid = corners.mean() >= 0.0
                if code == 5:
                    pairs = [(3, 2), (1, 0)] if center_solid else [(3, 0), (1, 2)]
                else:
                    pairs = [(0, 1), (2, 3)] if center_solid else [(0, 3), (2, 1)]
            else:
                pairs = _EDGE_SEGMENTS[code]
            for e1, e2 in pairs:
                p1 = _edge_point(e1, i, j, corners)
                p2 = _edge_point(e2, i, j, corners)
                if p1 != p2:
                    segments.append((p1, p2))

    polylines = _chain_segments(segments)
    return [np.asarray(p, dtype=np.float64) * h for p in polylines]


def _key(p: tuple[float, float]) -> tuple[int, int]:
    return (round(p[0] * 2**20), round(p[1] * 2**20))


def _chain_segments(segments) -> list[list[tuple[float, float]]]:
    """Join segments that share endpoints into polylines, deterministically."""
    adjacency: dict[tuple[int, int], list[int]] = {}
    for idx, (p1, p2) in enumerate(segments):
        adjacency.setdefault(_key(p1), []).append(idx)
        adjacency.setdefault(_key(p2), []).append(idx)

    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        p1, p2 = segments[start]
        chain = [p1, p2]
        # grow forward from the tail, then backward from the head
        for grow_tail in (True, False):
            while True:
                tip = chain[-1] if grow_tail else chain[0]
                candidates = [k for k in adjacency.get(_key(tip), []) if not used[k]]
                if not candidates:
                    break
                k = candidates[0]
                used[k] = True
                q1, q2 = segments[k]
                nxt = q2 if _key(q1) == _key(tip) else q1
                if grow_tail:
                    chain.append(nxt)
                else:
                    chain.insert(0, nxt)
        polylines.append(chain)
    return polylines


def _densify(polylines: list[np.ndarray], max_spacing: float) -> np.ndarray:
    """Resample polylines so consecutive points are at most max_spacing apart."""
    points = []
    for poly in polylines:
        if len(poly) == 1:
            points.append(poly)
            continue
        for a, b in zip(poly[:-1], poly[1:]):
            length = float(np.hypot(*(b - a)))
            n = max(1, int(np.ceil(length / max_spacing)))
            ts = np.linspace(0.0, 1.0, n, endpoint=False)
            points.append(a + ts[:, None] * (b - a))
        points.append(poly[-1:])
    return np.vstack(points) if points else np.empty((0, 2))


def contour_hausdorff(a: list[np.ndarray], b: list[np.ndarray], max_spacing: float = 0.25) -> float:
    """Symmetric Hausdorff distance between two contour sets.

    Polylines are densified before the point-set distance, so the result
    over-estimates the true curve distance by at most max_spacing / 2.
    """
    from scipy.spatial import cKDTree

    pa = _densify(a, max_spacing)
    pb = _densify(b, max_spacing)
    if pa.size == 0 and pb.size == 0:
        return 0.0
    if pa.size == 0 or pb.size == 0:
        return np.inf
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))


# ---------------------------------------------------------------- writers


def write_vtk(path, fields: dict[str, ScalarField], title: str = "level set field") -> None:
    """Legacy ASCII structured-points file with one scalar array per field."""
    if not fields:
        raise ValueError("need at least one field to write")
    grids = {f.grid for f in fields.values()}
    if len(grids) > 1:
        raise ValueError("all fields must share one grid")
    grid = next(iter(grids))
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {grid.h:g} {grid.h:g} 1",
        f"POINT_DATA {grid.n_nodes}",
    ]
    for name, f in fields.items():
        lines.append(f"SCALARS {name} double")
        lines.append("LOOKUP_TABLE default")
        lines.extend(format(v, ".9g") for v in f.values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pgm(path, values: np.ndarray) -> None:
    """8-bit grayscale PGM (plain P2) from values in [0, 1], origin lower left.

    Rows in the file run top to bottom, so the array's first row (lowest y)
    is written last.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D array")
    gray = np.rint(np.clip(arr, 0.0, 1.0) * 255).astype(int)
    rows = gray[::-1]
    lines = [f"P2", f"{arr.shape[1]} {arr.shape[0]}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
