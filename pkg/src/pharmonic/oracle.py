"""Grid solvers for the p-Laplace Dirichlet problem.

Two independent routes to the same solution:

* ``solve_dirichlet_variational`` minimises the discrete p-energy with
  nonlinear Gauss-Seidel.  Each cell uses the four one-sided gradients at its
  corners, so the energy is convex and has no checkerboard null mode.
* ``solve_dirichlet_amv`` iterates the mean value formula, replacing every
  interior value by the weighted midrange and mean over a discrete disk.

Arrays are indexed ``values[j, i]`` with ``x = origin.real + i h`` and
``y = origin.imag + j h``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "GridField",
    "SolveReport",
    "GeometryMismatchError",
    "boundary_grid",
    "band_mask",
    "p_energy",
    "energy_gradient",
    "solve_laplace",
    "solve_dirichlet_variational",
    "solve_dirichlet_amv",
    "disk_offsets",
    "compare_fields",
]

# corner gradients as (x-difference, y-difference) picks among Dx0, Dx1, Dy0, Dy1
_CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))  # (which Dx, which Dy)
# d(Dx0, Dx1, Dy0, Dy1)/du for the cell nodes c00, c10, c01, c11, times h
_NODE_STENCIL = {
    (0, 0): ((-1, 0), (-1, 0)),
    (0, 1): ((1, 0), (0, -1)),
    (1, 0): ((0, -1), (1, 0)),
    (1, 1): ((0, 1), (0, 1)),
}


_ROUNDING = 8 * np.finfo(float).eps


class GeometryMismatchError(ValueError):
    pass


@dataclass
class GridField:
    origin: complex
    spacing: float
    values: np.ndarray
    boundary_mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.boundary_mask = np.asarray(self.boundary_mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.boundary_mask.shape:
            raise ValueError("values and boundary_mask must be 2-D arrays of equal shape")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        self.origin = complex(self.origin)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary_mask

    def points(self) -> np.ndarray:
        jj, ii = np.mgrid[0 : self.height, 0 : self.width]
        return self.origin + self.spacing * (ii + 1j * jj)

    def with_values(self, values) -> "GridField":
        return replace(self, values=np.array(values, dtype=float))

    def same_geometry(self, other: "GridField") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.origin == other.origin
            and self.spacing == other.spacing
            and np.array_equal(self.boundary_mask, other.boundary_mask)
        )

    def band_width(self) -> int:
        """Width of the outer band marked as boundary, or 0 if the mask is not a band."""
        for b in range(1, min(self.width, self.height) // 2 + 1):
            if np.array_equal(self.boundary_mask, band_mask(self.height, self.width, b)):
                return b
        return 0

    def write_csv(self, path) -> None:
        pts = self.points()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "value", "is_boundary"])
            for j in range(self.height):
                for i in range(self.width):
                    z = pts[j, i]
                    w.writerow([
                        f"{z.real:.17g}",
                        f"{z.imag:.17g}",
                        f"{self.values[j, i]:.17g}",
                        int(self.boundary_mask[j, i]),
                    ])

    def to_bytes(self) -> bytes:
        """Little-endian: uint32 width, height, version, band; doubles origin, spacing; values."""
        band = self.band_width()
        if band == 0:
            raise ValueError("binary layout stores only outer-band boundary masks")
        head = struct.pack("<4I3d", self.width, self.height, 1, band,
                           self.origin.real, self.origin.imag, self.spacing)
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridField":
        width, height, version, band, ox, oy, h = struct.unpack_from("<4I3d", data)
        if version != 1:
            raise ValueError(f"unsupported grid format version {version}")
        offset = struct.calcsize("<4I3d")
        vals = np.frombuffer(data, dtype="<f8", count=width * height, offset=offset)
        return cls(complex(ox, oy), h, vals.reshape(height, width).copy(),
                   band_mask(height, width, band))


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float
    energy: float
    converged: bool


def band_mask(height: int, width: int, band: int = 1) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[:band, :] = mask[-band:, :] = True
    mask[:, :band] = mask[:, -band:] = True
    return mask


def boundary_grid(fn, center: complex, half_width: float, nodes: int, band: int = 1,
                  fill: str = "zero") -> GridField:
    """Square grid on ``center +- half_width`` with ``fn`` sampled on the outer band.

    ``fill='exact'`` also samples the interior (for reference fields).
    """
    if nodes < 3:
        raise ValueError("need at least 3 nodes per side")
    h = 2 * half_width / (nodes - 1)
    origin = complex(center) - half_width * (1 + 1j)
    mask = band_mask(nodes, nodes, band)
    grid = GridField(origin, h, np.zeros((nodes, nodes)), mask)
    pts = grid.points()
    vals = np.zeros((nodes, nodes))
    if fill == "exact":
        vals = np.asarray(fn(pts), dtype=float)
    else:
        vals[mask] = np.asarray(fn(pts[mask]), dtype=float)
    return grid.with_values(vals)


def _differences(u: np.ndarray, h: float):
    dx = ((u[:-1, 1:] - u[:-1, :-1]) / h, (u[1:, 1:] - u[1:, :-1]) / h)
    dy = ((u[1:, :-1] - u[:-1, :-1]) / h, (u[1:, 1:] - u[:-1, 1:]) / h)
    return dx, dy


def _cell_energy(u: np.ndarray, h: float, p: float, delta: float = 0.0) -> np.ndarray:
    dx, dy = _differences(u, h)
    e = np.zeros((u.shape[0] - 1, u.shape[1] - 1))
    for a, b in _CORNERS:
        e += (dx[a] ** 2 + dy[b] ** 2 + delta * delta) ** (p / 2)
    return e * (h * h / 4)


def p_energy(grid: GridField, p: float) -> float:
    """Discrete ``integral |grad u|^p`` from the four corner gradients of every cell."""
    if not p > 1:
        raise ValueError(f"p must satisfy p > 1, got {p}")
    return float(np.sum(_cell_energy(grid.values, grid.spacing, p)))


def _scatter(cellwise: dict, shape) -> np.ndarray:
    out = np.zeros(shape)
    for (qy, qx), arr in cellwise.items():
        out[qy : qy + arr.shape[0], qx : qx + arr.shape[1]] += arr
    return out


def _grad_and_diag(u: np.ndarray, h: float, p: float, delta: float):
    """Energy gradient and Hessian diagonal at every node."""
    dx, dy = _differences(u, h)
    grad = {}
    diag = {}
    for q, ((sx0, sx1), (sy0, sy1)) in _NODE_STENCIL.items():
        sx, sy = (sx0, sx1), (sy0, sy1)
        g_acc = 0.0
        d_acc = 0.0
        for a, b in _CORNERS:
            vx, vy = sx[a], sy[b]
            if vx == 0 and vy == 0:
                continue
            t = dx[a] ** 2 + dy[b] ** 2 + delta * delta
            t = np.where(t > 0, t, 1e-300)
            phi1 = (p / 2) * t ** (p / 2 - 1)
            phi2 = (p / 2) * (p / 2 - 1) * t ** (p / 2 - 2)
            gv = dx[a] * vx + dy[b] * vy
            g_acc = g_acc + phi1 * gv
            d_acc = d_acc + 2 * phi1 * (vx * vx + vy * vy) + 4 * phi2 * gv * gv
        grad[q] = (h / 2) * g_acc
        diag[q] = 0.25 * d_acc
    return _scatter(grad, u.shape), _scatter(diag, u.shape)


def energy_gradient(grid: GridField, p: float) -> np.ndarray:
    g, _ = _grad_and_diag(grid.values, grid.spacing, p, 0.0)
    return g


def solve_laplace(boundary: GridField) -> GridField:
    """Direct solve of the 5-point Laplacian with the given boundary values."""
    u = boundary.values.copy()
    inner = boundary.interior
    idx = -np.ones(u.shape, dtype=int)
    idx[inner] = np.arange(np.count_nonzero(inner))
    rows, cols, data = [], [], []
    rhs = np.zeros(np.count_nonzero(inner))
    H, W = u.shape
    for j, i in zip(*np.nonzero(inner)):
        r = idx[j, i]
        rows.append(r); cols.append(r); data.append(4.0)
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jj, ii = j + dj, i + di
            if not (0 <= jj < H and 0 <= ii < W):
                raise ValueError("interior node touches the grid edge; boundary mask must enclose it")
            if inner[jj, ii]:
                rows.append(r); cols.append(idx[jj, ii]); data.append(-1.0)
            else:
                rhs[r] += u[jj, ii]
    A = sp.csr_matrix((data, (rows, cols)), shape=(rhs.size, rhs.size))
    u[inner] = spla.spsolve(A, rhs)
    return boundary.with_values(u)


def _color_masks(shape, inner):
    jj, ii = np.indices(shape)
    return [inner & (jj % 2 == cy) & (ii % 2 == cx) for cy in (0, 1) for cx in (0, 1)]


def _node_sum_of_cells(cell: np.ndarray, shape) -> np.ndarray:
    return _scatter({q: cell for q in _NODE_STENCIL}, shape)


def solve_dirichlet_variational(
    boundary: GridField,
    p: float,
    tol: float = 1e-8,
    max_iter: int = 20000,
    omega: float = 1.8,
    delta: float = 1e-10,
    initial: GridField | None = None,
    on_sweep=None,
):
    """Minimise the discrete p-energy over the interior values.

    One sweep updates the four parity classes of nodes in turn.  Nodes of one
    class share no cell, so each gets an exact one-dimensional Newton step
    (over-relaxed by ``omega``), halved until its local energy does not rise.
    The energy therefore never increases between sweeps, up to a rounding
    slack of a few ulps of the local energy.  Convergence is
    declared when the largest interior energy gradient, divided by ``h^2``,
    is at most ``tol``.  For ``p < 2`` the regularisation ``delta`` is halved
    every sweep.
    """
    if not p > 1:
        raise ValueError(f"p must satisfy p > 1, got {p}")
    h = boundary.spacing
    start = initial if initial is not None else solve_laplace(boundary)
    u = start.values.copy()
    u[boundary.boundary_mask] = boundary.values[boundary.boundary_mask]
    inner = boundary.interior
    colors = _color_masks(u.shape, inner)
    d = delta
    residual = math.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        for cmask in colors:
            g, dg = _grad_and_diag(u, h, p, d)
            step = np.zeros_like(u)
            ok = cmask & (dg > 0) & np.isfinite(dg)
            step[ok] = -omega * g[ok] / dg[ok]
            e0 = _cell_energy(u, h, p, d)
            slack = _ROUNDING * _node_sum_of_cells(e0, u.shape)
            pending = ok.copy()
            for _ in range(40):
                if not np.any(pending):
                    break
                trial = u + np.where(pending, step, 0.0)
                change = _node_sum_of_cells(_cell_energy(trial, h, p, d) - e0, u.shape)
                good = pending & (change <= slack)
                u[good] = trial[good]
                pending &= ~good
                step[pending] *= 0.5
        if p < 2:
            d = d * 0.5 if d > 1e-150 else 0.0
        g, _ = _grad_and_diag(u, h, p, d)
        residual = float(np.max(np.abs(g[inner]))) / (h * h)
        if on_sweep is not None:
            on_sweep(it, u)
        if residual <= tol:
            converged = True
            break
    out = boundary.with_values(u)
    return out, SolveReport(it, residual, p_energy(out, p), converged)


def disk_offsets(eps_in_nodes: int) -> np.ndarray:
    r = int(eps_in_nodes)
    dj, di = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dj * dj + di * di <= r * r
    return np.stack([dj[keep], di[keep]], axis=1)


def solve_dirichlet_amv(
    boundary: GridField,
    p: float,
    eps_in_nodes: int = 3,
    tol: float = 1e-10,
    max_iter: int = 200000,
    initial: GridField | None = None,
):
    """Jacobi iteration of the mean value formula on the discrete disk.

    The disk is every node within ``eps_in_nodes`` grid steps; disks are
    clipped at the grid edge, so a boundary band at least ``eps_in_nodes``
    wide keeps them whole.  Requires ``p >= 2`` so both weights are
    non-negative.
    """
    if not (2 <= p < math.inf):
        raise ValueError(f"AMV iteration requires 2 <= p < inf, got p={p}")
    if eps_in_nodes < 2:
        raise ValueError(f"eps_in_nodes must be >= 2, got {eps_in_nodes}")
    alpha, beta = (p - 2) / (p + 2), 4 / (p + 2)
    start = initial if initial is not None else solve_laplace(boundary)
    u = start.values.copy()
    u[boundary.boundary_mask] = boundary.values[boundary.boundary_mask]
    inner = boundary.interior
    H, W = u.shape
    r = int(eps_in_nodes)
    offsets = disk_offsets(r)
    js, is_ = np.nonzero(inner)
    # neighbour index table with -1 where the disk leaves the grid
    nj = js[:, None] + offsets[None, :, 0]
    ni = is_[:, None] + offsets[None, :, 1]
    valid = (nj >= 0) & (nj < H) & (ni >= 0) & (ni < W)
    flat = np.where(valid, nj * W + ni, 0)
    count = valid.sum(axis=1)
    change = math.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        uf = u.ravel()
        vals = uf[flat]
        vmax = np.max(np.where(valid, vals, -np.inf), axis=1)
        vmin = np.min(np.where(valid, vals, np.inf), axis=1)
        vmean = np.sum(np.where(valid, vals, 0.0), axis=1) / count
        new = alpha * (vmax + vmin) / 2 + beta * vmean
        change = float(np.max(np.abs(new - u[js, is_]))) if new.size else 0.0
        u[js, is_] = new
        if change <= tol:
            converged = True
            break
    out = boundary.with_values(u)
    return out, SolveReport(it, change, p_energy(out, p), converged)


def compare_fields(a: GridField, b: GridField) -> tuple[float, float]:
    """``(max_abs, rel_l2)`` of ``a - b`` over interior nodes, relative to ``b``."""
    if a.values.shape != b.values.shape or a.origin != b.origin or a.spacing != b.spacing:
        raise GeometryMismatchError("grids differ in shape, origin or spacing")
    inner = a.interior & b.interior
    diff = a.values[inner] - b.values[inner]
    if diff.size == 0:
        return 0.0, 0.0
    ref = float(np.linalg.norm(b.values[inner]))
    err = float(np.linalg.norm(diff))
    rel = err / ref if ref > 0 else err
    return float(np.max(np.abs(diff))), rel
