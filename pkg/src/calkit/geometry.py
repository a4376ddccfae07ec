"""Grids, boundary quadrature, frames and rotations on the cube.

The inner domain is the cube Ω = (−L, L)³ sampled by an m³ node grid; the
periodic box Q = (−R, R)³ carries the M³ grid of the Fourier solver.

Boundary nodes are enumerated face by face in the order −x, +x, −y, +y,
−z, +z; inside a face nodes follow the row-major (i, j, k) order, and a
node already listed on an earlier face is skipped. Each boundary node
keeps the normal of the face that listed it (its owning face) and one
trapezoid weight per incident face, so that face-wise quadrature stays
exact on edges and corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
from numpy.typing import NDArray

from calkit.errors import CalkitError

MIN_NODES = 9
MIN_BOX_NODES = 16
ORTHONORMAL_TOLERANCE = 1e-12
UNIT_TOLERANCE = 1e-8

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.intp]
BoolArray = NDArray[np.bool_]

# (axis, side) per face, in enumeration order
FACES: tuple[tuple[int, int], ...] = (
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 1),
    (2, -1),
    (2, 1),
)
FACE_NAMES = ("-x", "+x", "-y", "+y", "-z", "+z")
FACE_NORMALS: FloatArray = np.array(
    [[side * float(axis == k) for k in range(3)] for axis, side in FACES]
)


class GeometryError(CalkitError, ValueError):
    """Base exception for invalid geometric input."""


class DomainNotInsideBoxError(GeometryError):
    """Error when Ω does not embed strictly in the periodic box."""

    def __init__(self, R: float, L: float) -> None:
        """Initialize with the two half-widths."""
        self.R = R
        self.L = L
        super().__init__(
            f"Ω must be strictly inside Q (L={L:g}, R={R:g}): need 0 < L < R"
        )


class GridSizeError(GeometryError):
    """Error when a node count is below its minimum or has wrong parity."""

    def __init__(self, name: str, value: int, rule: str) -> None:
        """Initialize with the offending parameter."""
        self.name = name
        self.value = value
        super().__init__(f"Invalid {name}={value}: {rule}")


class NotUnitVectorError(GeometryError):
    """Error when a direction is not a unit vector."""

    def __init__(self, vector: FloatArray) -> None:
        """Initialize with the rejected vector."""
        self.vector = vector
        norm = float(np.linalg.norm(vector))
        super().__init__(f"Expected a unit vector, got norm {norm:.12g}")


class FrameError(GeometryError):
    """Error when a frame violates its orthogonality relations."""

    def __init__(self, detail: str) -> None:
        """Initialize with the violated relation."""
        super().__init__(f"Invalid frame: {detail}")


class SplitParameterError(GeometryError):
    """Error when the boundary split threshold is out of range."""

    def __init__(self, epsilon: float) -> None:
        """Initialize with the rejected threshold."""
        self.epsilon = epsilon
        super().__init__(
            f"ε must satisfy 0 < ε < 1/2, got {epsilon:g}"
            " (the split would be degenerate)"
        )


@dataclass(frozen=True)
class Grid:
    """Ω-grid, Q-grid size and boundary metadata.

    Array attributes are computed on first access and shared read-only.
    """

    R: float
    L: float
    m: int
    M: int

    @property
    def h(self) -> float:
        """Ω-grid spacing."""
        return 2 * self.L / (self.m - 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Shape of node arrays on the Ω-grid."""
        return (self.m, self.m, self.m)

    @property
    def node_count(self) -> int:
        """Total number of Ω-grid nodes."""
        return self.m**3

    @cached_property
    def axis(self) -> FloatArray:
        """Node coordinates along one axis."""
        return np.linspace(-self.L, self.L, self.m)

    @cached_property
    def coordinates(self) -> FloatArray:
        """Node positions, shape (m, m, m, 3)."""
        axis = self.axis
        x1, x2, x3 = np.meshgrid(axis, axis, axis, indexing="ij")
        return np.stack([x1, x2, x3], axis=-1)

    @cached_property
    def interior_flat(self) -> IntArray:
        """Flat indices of interior nodes in row-major order."""
        index = np.arange(self.node_count).reshape(self.shape)
        return index[1:-1, 1:-1, 1:-1].ravel()

    @cached_property
    def boundary_flat(self) -> IntArray:
        """Flat indices of boundary nodes in enumeration order."""
        index = np.arange(self.node_count).reshape(self.shape)
        seen = np.zeros(self.node_count, dtype=bool)
        ordered: list[IntArray] = []
        for axis, side in FACES:
            face = [slice(None)] * 3
            face[axis] = 0 if side < 0 else self.m - 1
            nodes = index[tuple(face)].ravel()
            new = nodes[~seen[nodes]]
            seen[new] = True
            ordered.append(new)
        return np.concatenate(ordered)

    @property
    def boundary_count(self) -> int:
        """Number of boundary nodes."""
        return len(self.boundary_flat)

    @cached_property
    def boundary_index(self) -> IntArray:
        """Boundary node (i, j, k) indices, shape (nb, 3)."""
        return np.stack(
            np.unravel_index(self.boundary_flat, self.shape), axis=-1
        )

    @cached_property
    def boundary_points(self) -> FloatArray:
        """Boundary node positions, shape (nb, 3)."""
        return self.axis[self.boundary_index]

    @cached_property
    def face_weights(self) -> FloatArray:
        """Trapezoid area weight of each boundary node on each face.

        Shape (nb, 6), zero where the node does not lie on the face.
        """
        index = self.boundary_index
        last = self.m - 1
        ends = (index == 0) | (index == last)
        weights = np.zeros((self.boundary_count, len(FACES)))
        for f, (axis, side) in enumerate(FACES):
            on_face = index[:, axis] == (0 if side < 0 else last)
            tangential = [t for t in range(3) if t != axis]
            factor = np.where(ends[:, tangential], 0.5, 1.0).prod(axis=1)
            weights[:, f] = np.where(on_face, factor * self.h**2, 0.0)
        return weights

    @cached_property
    def weights(self) -> FloatArray:
        """Total area weight per boundary node."""
        return self.face_weights.sum(axis=1)

    @cached_property
    def owner_face(self) -> IntArray:
        """Index into FACES of the face owning each boundary node."""
        return np.argmax(self.face_weights > 0, axis=1)

    @cached_property
    def normals(self) -> FloatArray:
        """Outward unit normal of the owning face, shape (nb, 3).

        Owner normals depend on the face enumeration order, so an edge node
        between −x and +y reports −e₁. Anything that must treat the six
        faces alike, such as the boundary split, uses mean_normals.
        """
        return FACE_NORMALS[self.owner_face]

    @cached_property
    def mean_normals(self) -> FloatArray:
        """Weight-averaged normal over incident faces (not unit on edges)."""
        return self.face_weights @ FACE_NORMALS / self.weights[:, None]

    @cached_property
    def edge_mask(self) -> BoolArray:
        """Boundary nodes shared by two or more faces."""
        return (self.face_weights > 0).sum(axis=1) >= 2

    @cached_property
    def volume_weights(self) -> FloatArray:
        """Trapezoid volume weights on the Ω-grid; they sum to (2L)³."""
        line = np.full(self.m, self.h)
        line[[0, -1]] *= 0.5
        return np.einsum("i,j,k->ijk", line, line, line)

    @cached_property
    def box_axis(self) -> FloatArray:
        """Q-grid node coordinates along one rotated axis."""
        return q_grid_axis(self.R, self.M)


def make_grid(R: float, L: float, m: int, M: int) -> Grid:
    """Validate the parameters and build a grid."""
    if not 0 < L < R:
        raise DomainNotInsideBoxError(R, L)
    if m < MIN_NODES:
        raise GridSizeError("m", m, f"need at least {MIN_NODES} nodes")
    if M < MIN_BOX_NODES or M % 2:
        raise GridSizeError(
            "M", M, f"need an even count of at least {MIN_BOX_NODES}"
        )
    return Grid(float(R), float(L), int(m), int(M))


def q_grid_axis(R: float, M: int) -> FloatArray:
    """Periodic node coordinates y_k = −R + k·2R/M, k = 0..M−1."""
    return -R + np.arange(M) * (2 * R / M)


def grid_manifest(grid: Grid) -> dict[str, Any]:
    """Describe a grid for JSON manifests."""
    return {
        "R": grid.R,
        "L": grid.L,
        "m": grid.m,
        "M": grid.M,
        "h": grid.h,
        "node_order": "row-major (i, j, k), x_i = -L + i*h",
        "boundary_order": "face by face " + " ".join(FACE_NAMES),
        "boundary_nodes": grid.boundary_count,
    }


def integrate(values: NDArray[Any], grid: Grid) -> Any:  # noqa: ANN401
    """Trapezoid quadrature of node values over Ω."""
    return np.sum(values * grid.volume_weights)


def boundary_integral(values: NDArray[Any], grid: Grid) -> Any:  # noqa: ANN401
    """Area-weighted sum of boundary node values."""
    return np.sum(values * grid.weights)


@dataclass(frozen=True, eq=False)
class Frame:
    """Reconstruction frame (ξ, η₁, η₂, ρ)."""

    xi: FloatArray
    eta1: FloatArray
    eta2: FloatArray
    rho: float

    def __post_init__(self) -> None:
        """Check unit lengths and mutual orthogonality."""
        for name, eta in (("η₁", self.eta1), ("η₂", self.eta2)):
            if abs(np.linalg.norm(eta) - 1) > ORTHONORMAL_TOLERANCE:
                raise FrameError(f"|{name}| ≠ 1")
        dots = (
            float(self.xi @ self.eta1),
            float(self.xi @ self.eta2),
            float(self.eta1 @ self.eta2),
        )
        scale = max(1.0, float(np.linalg.norm(self.xi)))
        if max(abs(d) for d in dots) > ORTHONORMAL_TOLERANCE * scale:
            raise FrameError("ξ, η₁, η₂ are not mutually orthogonal")
        if self.rho <= 0:
            raise FrameError(f"ρ must be positive, got {self.rho:g}")

    @classmethod
    def for_xi(cls, xi: FloatArray, rho: float) -> Frame:
        """Complete ξ to a frame with the deterministic rule."""
        xi = np.asarray(xi, dtype=float)
        eta1, eta2 = orthonormal_frame(xi)
        return cls(xi, eta1, eta2, float(rho))

    def to_record(self) -> dict[str, Any]:
        """Describe the frame for JSON records."""
        return {
            "xi": self.xi.tolist(),
            "eta1": self.eta1.tolist(),
            "eta2": self.eta2.tolist(),
            "rho": self.rho,
        }


def orthonormal_frame(xi: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Complete ξ to an orthonormal pair (η₁, η₂) orthogonal to ξ.

    η₁ is the normalized cross product ξ × e_k with e_k the axis of smallest
    |ξ_k| (lowest k on ties), which is never parallel to ξ; η₂ = ξ̂ × η₁.
    For ξ = 0 the pair is (e₁, e₂).
    """
    xi = np.asarray(xi, dtype=float)
    identity = np.eye(3)
    norm = float(np.linalg.norm(xi))
    if norm == 0:
        return identity[0].copy(), identity[1].copy()
    unit = xi / norm
    axis = int(np.argmin(np.abs(xi)))
    eta1 = np.cross(unit, identity[axis])
    eta1 /= np.linalg.norm(eta1)
    eta2 = np.cross(unit, eta1)
    eta2 /= np.linalg.norm(eta2)
    return eta1, eta2


def rotation_to_e1(eta1: FloatArray) -> FloatArray:
    """Return the orthogonal S with S η₁ = e₁.

    Built from one Householder reflection; when η₁ has a non-negative first
    component the reflection maps η₁ to −e₁ and is followed by flipping the
    first axis, which keeps the construction stable near e₁ and returns the
    identity for η₁ = e₁.
    """
    eta1 = np.asarray(eta1, dtype=float)
    if abs(np.linalg.norm(eta1) - 1) > UNIT_TOLERANCE:
        raise NotUnitVectorError(eta1)
    e1 = np.eye(3)[0]
    if eta1[0] < 0:
        u = eta1 - e1
        return np.eye(3) - 2 * np.outer(u, u) / (u @ u)
    u = eta1 + e1
    reflection = np.eye(3) - 2 * np.outer(u, u) / (u @ u)
    reflection[0] *= -1
    return reflection


@dataclass(frozen=True, eq=False)
class BoundarySplit:
    """Partition of the boundary nodes relative to a direction η."""

    V: IntArray
    U: IntArray
    illuminated: IntArray
    shadowed: IntArray


def face_split(grid: Grid, eta: FloatArray, epsilon: float) -> BoundarySplit:
    """Split ∂Ω into V = {ν·η < 2ε} and its complement U.

    Also exposes the illuminated part {ν·η ≤ 0} and the shadowed part
    {ν·η ≥ 0}. ν is the weight-averaged normal, so the split commutes
    with the symmetries of the cube: an edge node has ν·e_k = 1/2 towards
    both incident faces and a corner node 1/3.
    """
    if not 0 < epsilon < 0.5:
        raise SplitParameterError(epsilon)
    dots = grid.mean_normals @ np.asarray(eta, dtype=float)
    nodes = np.arange(grid.boundary_count)
    in_v = dots < 2 * epsilon
    return BoundarySplit(
        V=nodes[in_v],
        U=nodes[~in_v],
        illuminated=nodes[dots <= 0],
        shadowed=nodes[dots >= 0],
    )


def ball_radius(grid: Grid) -> float:
    """Radius of the smallest ball about 0 containing Ω."""
    return grid.L * math.sqrt(3)
