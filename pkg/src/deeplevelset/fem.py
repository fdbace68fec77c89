"""Plane stress finite element model on the regular grid.

Bilinear quadrilateral elements with 2x2 Gauss integration and unit
thickness.  The design enters through an ersatz material: each element's
modulus is the solid modulus scaled by the smoothed Heaviside of the mean
nodal level set value, floored at a small positive value so the global
matrix stays positive definite.

Degrees of freedom follow the node numbering: node k owns dofs 2k (x) and
2k + 1 (y).  Fixed dofs are eliminated from the solved system rather than
penalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid, HeavisideParams, ScalarField, element_means, heaviside

log = logging.getLogger(__name__)

#: grids up to this many elements per side may use the dense reference solver
DENSE_SOLVER_LIMIT = 20


class SingularSystemError(RuntimeError):
    """Raised when the constrained stiffness matrix is singular."""


class SolverError(RuntimeError):
    """Raised when the linear solver fails to reach the required residual."""


@dataclass(frozen=True)
class MaterialModel:
    """Isotropic plane stress material with an ersatz void floor."""

    e_solid: float = 1.0
    e_min: float = 1e-6
    nu: float = 0.3

    def __post_init__(self) -> None:
        if self.e_solid <= 0:
            raise ValueError("solid modulus must be positive")
        if not 0 < self.e_min < self.e_solid:
            raise ValueError("void floor must lie in (0, e_solid)")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")


@dataclass(frozen=True)
class BoundaryConditions:
    """Supports and point loads.

    `fixed_dofs` holds (node id, direction) pairs with direction 0 for x and
    1 for y.  `point_loads` holds (node id, direction, magnitude) triples.
    """

    fixed_dofs: frozenset[tuple[int, int]]
    point_loads: tuple[tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        for node, direction in self.fixed_dofs:
            if direction not in (0, 1) or node < 0:
                raise ValueError(f"bad fixed dof ({node}, {direction})")
        for node, direction, mag in self.point_loads:
            if direction not in (0, 1) or node < 0:
                raise ValueError(f"bad load dof ({node}, {direction})")
            if not np.isfinite(mag):
                raise ValueError("load magnitude must be finite")

    def fixed_dof_indices(self) -> np.ndarray:
        return np.array(sorted(2 * n + d for n, d in self.fixed_dofs), dtype=int)

    def load_vector(self, n_dofs: int) -> np.ndarray:
        f = np.zeros(n_dofs)
        for node, direction, mag in self.point_loads:
            f[2 * node + direction] += mag
        return f


@dataclass
class DisplacementField:
    """Nodal displacements, shape (n_nodes, 2)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_nodes, 2):
            raise ValueError(f"expected shape ({self.grid.n_nodes}, 2), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("displacement field contains non-finite values")

    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass
class ElementField:
    """One value per element (modulus, energy and the like)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n_elements,):
            raise ValueError(f"expected shape ({self.grid.n_elements},), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("element field contains non-finite values")

    def as_2d(self) -> np.ndarray:
        """View shaped (ny, nx); row index is the y element index."""
        return self.values.reshape(self.grid.ny, self.grid.nx)


def constitutive_matrix(e: float, nu: float) -> np.ndarray:
    """Plane stress constitutive matrix, Voigt order (xx, yy, xy)."""
    return (e / (1.0 - nu * nu)) * np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]
    )


def _shape_gradients(xi: float, eta: float, h: float) -> np.ndarray:
    """d(shape)/d(x, y) for the four corner nodes at one quadrature point.

    Node order counterclockwise from the lower left; returns shape (2, 4).
    """
    dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return np.vstack([dxi, deta]) * (2.0 / h)


def strain_displacement_matrix(xi: float, eta: float, h: float) -> np.ndarray:
    """B matrix (3x8) mapping corner displacements to strains at (xi, eta)."""
    g = _shape_gradients(xi, eta, h)
    b = np.zeros((3, 8))
    b[0, 0::2] = g[0]
    b[1, 1::2] = g[1]
    b[2, 0::2] = g[1]
    b[2, 1::2] = g[0]
    return b


_GAUSS = 1.0 / np.sqrt(3.0)
_QUAD_POINTS = [(-_GAUSS, -_GAUSS), (_GAUSS, -_GAUSS), (_GAUSS, _GAUSS), (-_GAUSS, _GAUSS)]


def element_stiffness(e: float, nu: float, h: float = 1.0) -> np.ndarray:
    """8x8 stiffness of one square element, 2x2 Gauss integration.

    The integrand is quadratic per direction, so the 2x2 rule is exact.  For
    plane stress with unit thickness the result is independent of h.
    """
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu}")
    c = constitutive_matrix(e, nu)
    det_j = h * h / 4.0
    ke = np.zeros((8, 8))
    for xi, eta in _QUAD_POINTS:
        b = strain_displacement_matrix(xi, eta, h)
        ke += b.T @ c @ b * det_j
    return ke


def interpolate_modulus(
    phi: ScalarField, hside: HeavisideParams, material: MaterialModel
) -> ElementField:
    """Ersatz modulus per element from the mean corner level set value."""
    h_elem = heaviside(element_means(phi), hside)
    e = np.maximum(material.e_min, material.e_solid * h_elem)
    return ElementField(phi.grid, e)


def _element_dof_matrix(grid: Grid) -> np.ndarray:
    """Dof indices per element, shape (n_elements, 8)."""
    nodes = grid.element_node_ids()
    dofs = np.empty((grid.n_elements, 8), dtype=int)
    dofs[:, 0::2] = 2 * nodes
    dofs[:, 1::2] = 2 * nodes + 1
    return dofs


def assemble_stiffness(grid: Grid, moduli: ElementField, material: MaterialModel) -> sp.csr_matrix:
    """Global sparse stiffness: the unit element matrix scaled per element."""
    ke = element_stiffness(1.0, material.nu, grid.h)
    dofs = _element_dof_matrix(grid)
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    vals = (moduli.values[:, None] * ke.ravel()[None, :]).ravel()
    n = 2 * grid.n_nodes
    k = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return k


_RIGID_MODE_NAMES = ("translation-x", "translation-y", "rotation")


def _rigid_modes(grid: Grid) -> np.ndarray:
    coords = grid.node_coords()
    n = grid.n_nodes
    modes = np.zeros((3, 2 * n))
    modes[0, 0::2] = 1.0
    modes[1, 1::2] = 1.0
    modes[2, 0::2] = -coords[:, 1]
    modes[2, 1::2] = coords[:, 0]
    return modes


def _find_unconstrained_mode(k_free: sp.csr_matrix, free: np.ndarray, grid: Grid) -> str | None:
    """Name a rigid body mode the constraints fail to suppress, if any.

    A mode restricted to the free dofs that the reduced matrix annihilates
    (relative to the matrix scale) means the supports are insufficient.  The
    check runs before solving because a singular but consistent system can
    slip through a factorization with a small residual.
    """
    scale = np.abs(k_free).sum(axis=1).max()
    if scale == 0:
        return "translation-x"
    for name, mode in zip(_RIGID_MODE_NAMES, _rigid_modes(grid)):
        restricted = mode[free]
        norm = np.linalg.norm(restricted)
        if norm == 0:
            continue
        if np.linalg.norm(k_free @ restricted) / (scale * norm) < 1e-10:
            return name
    return None


def assemble_and_solve(
    grid: Grid,
    moduli: ElementField,
    bc: BoundaryConditions,
    material: MaterialModel,
    solver: str = "direct",
    tol: float = 1e-8,
) -> DisplacementField:
    """Solve K u = f with fixed dofs eliminated.

    Solvers:
      direct: sparse LU factorization (default).
      pcg:    conjugate gradients with diagonal preconditioning, capped at
              10 * n_dofs iterations.
      dense:  numpy dense solve, only for small reference grids.

    The relative residual on the reduced system is verified against `tol`
    regardless of solver; failures raise SolverError, and a singular reduced
    matrix raises SingularSystemError naming the unconstrained rigid mode.
    """
    n_dofs = 2 * grid.n_nodes
    k = assemble_stiffness(grid, moduli, material)
    f = bc.load_vector(n_dofs)

    fixed = bc.fixed_dof_indices()
    free = np.setdiff1d(np.arange(n_dofs), fixed)
    k_free = k[free][:, free]
    f_free = f[free]

    loose = _find_unconstrained_mode(k_free, free, grid)
    if loose is not None:
        raise SingularSystemError(f"singular system: unconstrained {loose}")

    u_free = _solve_reduced(k_free, f_free, grid, free, solver, tol)

    norm_f = np.linalg.norm(f_free)
    if norm_f > 0:
        residual = np.linalg.norm(k_free @ u_free - f_free) / norm_f
        if not residual <= tol:
            raise SolverError(f"{solver} solve residual {residual:.3e} exceeds {tol:.1e}")

    u = np.zeros(n_dofs)
    u[free] = u_free
    return DisplacementField(grid, u.reshape(-1, 2))


def _solve_reduced(k_free, f_free, grid, free, solver, tol):
    if solver == "dense":
        if grid.nx > DENSE_SOLVER_LIMIT or grid.ny > DENSE_SOLVER_LIMIT:
            raise ValueError(f"dense solver limited to {DENSE_SOLVER_LIMIT} elements per side")
        dense = k_free.toarray()
        try:
            return np.linalg.solve(dense, f_free)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                f"singular system: unconstrained {_find_unconstrained_mode(k_free, free, grid) or 'unknown mode'}"
            ) from exc

    if solver == "pcg":
        diag = k_free.diagonal()
        if np.any(diag <= 0):
            raise SingularSystemError(
                f"singular system: unconstrained {_find_unconstrained_mode(k_free, free, grid) or 'unknown mode'}"
            )
        m_inv = spla.LinearOperator(k_free.shape, matvec=lambda x: x / diag)
        cap = 10 * k_free.shape[0]
        u, info = spla.cg(k_free, f_free, rtol=tol, atol=0.0, maxiter=cap, M=m_inv)
        if info != 0:
            raise SolverError(f"pcg did not converge within {cap} iterations (info={info})")
        return u

    if solver == "direct":
        try:
            lu = spla.splu(k_free.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(
                f"singular system: unconstrained {_find_unconstrained_mode(k_free, free, grid) or 'unknown mode'}"
            ) from exc
        u = lu.solve(f_free)
        if not np.all(np.isfinite(u)):
            raise SingularSystemError(
                f"singular system: unconstrained {_find_unconstrained_mode(k_free, free, grid) or 'unknown mode'}"
            )
        return u

    raise ValueError(f"unknown solver {solver!r}")


def strain_energy_density(
    grid: Grid,
    u: DisplacementField,
    material: MaterialModel,
    moduli: ElementField | None = None,
) -> ScalarField:
    """Nodal strain energy density eps : C : eps (without the 1/2 factor).

    Strains are evaluated at element centroids.  By default the energy uses
    the solid modulus everywhere, which keeps the boundary velocity alive in
    softened elements near the interface; pass `moduli` to weight each
    element by its ersatz modulus instead.
    """
    b0 = strain_displacement_matrix(0.0, 0.0, grid.h)
    dofs = _element_dof_matrix(grid)
    u_elems = u.flat()[dofs]  # (n_elements, 8)
    strains = u_elems @ b0.T  # (n_elements, 3)
    c_unit = constitutive_matrix(1.0, material.nu)
    density = np.einsum("ei,ij,ej->e", strains, c_unit, strains)
    if moduli is not None:
        density *= moduli.values
    else:
        density *= material.e_solid

    # average element values onto nodes (1, 2 or 4 adjacent elements)
    acc = np.zeros((grid.ny + 1, grid.nx + 1))
    count = np.zeros((grid.ny + 1, grid.nx + 1))
    d2 = density.reshape(grid.ny, grid.nx)
    for dj in (0, 1):
        for di in (0, 1):
            acc[dj : dj + grid.ny, di : di + grid.nx] += d2
            count[dj : dj + grid.ny, di : di + grid.nx] += 1.0
    return ScalarField(grid, (acc / count).ravel())


def compliance(u: DisplacementField, bc: BoundaryConditions) -> float:
    """External work of the point loads, f . u."""
    total = 0.0
    for node, direction, mag in bc.point_loads:
        total += mag * u.values[node, direction]
    return float(total)
