"""Closed-form electromagnetic quantities and discretised propagation kernels.

Sign convention: time-harmonic with outgoing waves carrying exp(-jkR)
everywhere, including the scalar Green function g = exp(-jkR) / (4 pi R).
All distances are computed in double precision; kernel assembly is chunked
over target rows so the matrix never needs to exist twice in memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import FREE_SPACE_IMPEDANCE
from .errors import (
    CacheMismatch,
    CoincidentPoints,
    DimensionMismatch,
    KernelSizeError,
    KindMismatch,
)
from .scene import PLANE_2D, VOLUME_3D, SampleGrids, ValidatedScene

KIND_Z2D = "Z_2d"
KIND_Y3D = "Y_3d"

# Complex128 entries; 2**26 entries is ~1 GiB. Raise deliberately for big runs.
DEFAULT_ENTRY_CAP = 1 << 26
_ROW_CHUNK = 256


@dataclass(frozen=True)
class KernelMatrix:
    """Discretised propagation operator from aperture samples to target samples.

    ``entries[m, n]`` maps the reflection coefficient at aperture sample n to
    the field quantity at target sample m. Read-only after assembly.
    """

    entries: np.ndarray  # (M, N) complex128
    kind: str  # KIND_Z2D | KIND_Y3D
    fingerprint: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class GreenTensor:
    """Free-space dyadic Green tensor evaluated for one observation/source pair."""

    matrix: np.ndarray  # (3, 3) complex128, symmetric
    observation: tuple[float, float, float]
    source: tuple[float, float, float]


def incident_current(scene: ValidatedScene, point) -> complex:
    """Equivalent electric current density induced on the aperture sheet (A/m).

    Only the y-coordinate matters: the obliquely incident plane wave advances
    its phase along y. The x-directed density at (x, y, 0) is
    (2 E0 / eta) cos(theta_in) exp(-j k sin(theta_in) y).
    """
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.size < 2:
        raise DimensionMismatch(f"expected an (x, y[, z]) point, got shape {point.shape}")
    return complex(_incident_current_at(scene, np.array([point[1]]))[0])


def _incident_current_at(scene: ValidatedScene, y: np.ndarray) -> np.ndarray:
    cfg = scene.config
    k = scene.wavenumber
    amplitude = 2.0 * cfg.incident_amplitude / FREE_SPACE_IMPEDANCE * math.cos(cfg.incident_elevation)
    return amplitude * np.exp(-1j * k * math.sin(cfg.incident_elevation) * y)


def _check_size(n_rows: int, n_cols: int, entry_cap: int) -> None:
    if n_rows * n_cols > entry_cap:
        raise KernelSizeError(
            f"kernel of {n_rows} x {n_cols} = {n_rows * n_cols} entries exceeds the "
            f"cap of {entry_cap}; raise entry_cap to allocate anyway"
        )


def kernel_2d(
    scene: ValidatedScene,
    grids: SampleGrids,
    entry_cap: int = DEFAULT_ENTRY_CAP,
) -> KernelMatrix:
    """Assemble the plane-target kernel: target-plane tangential H per unit coefficient.

    Entry (m, n) is
    -(1 + jkR) / (4 pi R^3) * dx dy * z' * J_x(r_n) * exp(-jkR),
    with R the distance from aperture sample n to target pixel m.
    """
    if scene.config.target_kind != PLANE_2D:
        raise KindMismatch(f"kernel_2d needs target_kind={PLANE_2D!r}")
    ris = grids.ris_points
    targets = grids.target_points
    _check_size(targets.shape[0], ris.shape[0], entry_cap)

    k = scene.wavenumber
    z_prime = scene.config.target_distance
    jx = _incident_current_at(scene, ris[:, 1])
    cell = grids.ris_cell_area

    out = np.empty((targets.shape[0], ris.shape[0]), dtype=np.complex128)
    for start in range(0, targets.shape[0], _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, targets.shape[0])
        diff = targets[start:stop, None, :] - ris[None, :, :]
        r = np.sqrt(np.einsum("mni,mni->mn", diff, diff))
        out[start:stop] = (
            -(1.0 + 1j * k * r) / (4.0 * math.pi * r**3) * cell * z_prime * jx[None, :]
        ) * np.exp(-1j * k * r)
    out.setflags(write=False)
    return KernelMatrix(entries=out, kind=KIND_Z2D, fingerprint=scene.fingerprint)


def h_out_y(kernel: KernelMatrix, p: np.ndarray) -> np.ndarray:
    """Field produced on the target samples by coefficient vector ``p``."""
    p = np.asarray(p)
    if p.shape != (kernel.entries.shape[1],):
        raise DimensionMismatch(
            f"coefficient vector of length {p.shape} does not match N={kernel.entries.shape[1]}"
        )
    return kernel.entries @ p


def psf(scene: ValidatedScene, target_point) -> complex:
    """Point spread function: propagation weight from a target point to the receiver.

    K = k eta / (4 pi j) * exp(-jkR') / R', so |K| = k eta / (4 pi R') and
    arg K = -pi/2 - kR' (mod 2 pi).
    """
    return complex(psf_vector(scene, np.asarray(target_point, dtype=float)[None, :])[0])


def psf_vector(scene: ValidatedScene, target_points: np.ndarray) -> np.ndarray:
    receiver = np.asarray(scene.config.receiver_pos)
    diff = np.asarray(target_points, dtype=float) - receiver[None, :]
    r = np.sqrt(np.einsum("mi,mi->m", diff, diff))
    if np.any(r == 0.0):
        raise CoincidentPoints("receiver coincides with a target sample")
    k = scene.wavenumber
    return (k * FREE_SPACE_IMPEDANCE / (4.0 * math.pi * 1j)) * np.exp(-1j * k * r) / r


def green_tensor(r_r, r_prime, k: float) -> GreenTensor:
    """Free-space dyadic Green tensor between source ``r_prime`` and observation ``r_r``.

    Equals (I + grad grad / k^2) g with g = exp(-jkR') / (4 pi R'); in closed
    form, with Rhat the unit vector from source to observation,

    [(3/(kR')^2 + 3j/(kR') - 1) Rhat Rhat^T - (1/(kR')^2 + j/(kR') - 1) I] g.
    """
    r_r = np.asarray(r_r, dtype=float)
    r_prime = np.asarray(r_prime, dtype=float)
    diff = r_r - r_prime
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        raise CoincidentPoints("Green tensor is singular at zero separation")
    rhat = diff / dist
    kr = k * dist
    g = np.exp(-1j * kr) / (4.0 * math.pi * dist)
    radial = 3.0 / kr**2 + 3j / kr - 1.0
    transverse = 1.0 / kr**2 + 1j / kr - 1.0
    matrix = (radial * np.outer(rhat, rhat) - transverse * np.eye(3)) * g
    matrix.setflags(write=False)
    return GreenTensor(matrix=matrix, observation=tuple(r_r), source=tuple(r_prime))


def _green_x_row(receiver: np.ndarray, points: np.ndarray, k: float) -> np.ndarray:
    """x-row (G_xx, G_xy, G_xz) of the Green tensor for many source points."""
    diff = receiver[None, :] - points
    dist = np.sqrt(np.einsum("mi,mi->m", diff, diff))
    if np.any(dist == 0.0):
        raise CoincidentPoints("receiver coincides with a target sample")
    rhat = diff / dist[:, None]
    kr = k * dist
    g = np.exp(-1j * kr) / (4.0 * math.pi * dist)
    radial = 3.0 / kr**2 + 3j / kr - 1.0
    transverse = 1.0 / kr**2 + 1j / kr - 1.0
    row = radial[:, None] * rhat[:, 0:1] * rhat  # Rhat_x * Rhat_a
    row[:, 0] -= transverse
    return row * g[:, None]


def _e_out_factors(k: float, diff: np.ndarray, r: np.ndarray, point_z: np.ndarray):
    """Geometric integrand factors shared by the E-field components."""
    kr = k * r
    near = (3.0 + 3j * kr - kr**2) / r**5
    t_xx = (-1.0 - 1j * kr + kr**2) / r**3 + near * diff[..., 0] ** 2
    t_xy = near * diff[..., 1] * diff[..., 0]
    t_xz = near * point_z * diff[..., 0]
    return t_xx, t_xy, t_xz


def e_out_components(
    scene: ValidatedScene,
    grids: SampleGrids,
    p: np.ndarray,
    target_point,
) -> tuple[complex, complex, complex]:
    """Electric field components radiated by the aperture at one target point.

    Discretised with the aperture cell area as quadrature weight.
    """
    p = np.asarray(p)
    ris = grids.ris_points
    if p.shape != (ris.shape[0],):
        raise DimensionMismatch(f"coefficient vector {p.shape} does not match N={ris.shape[0]}")
    point = np.asarray(target_point, dtype=float)
    diff = point[None, :] - ris
    r = np.sqrt(np.einsum("ni,ni->n", diff, diff))
    k = scene.wavenumber
    t_xx, t_xy, t_xz = _e_out_factors(k, diff, r, point[2])
    jx = _incident_current_at(scene, ris[:, 1])
    prefactor = -1j * FREE_SPACE_IMPEDANCE / (4.0 * math.pi * k) * grids.ris_cell_area
    common = jx * p * np.exp(-1j * k * r)
    return (
        complex(prefactor * np.sum(t_xx * common)),
        complex(prefactor * np.sum(t_xy * common)),
        complex(prefactor * np.sum(t_xz * common)),
    )


def kernel_3d(
    scene: ValidatedScene,
    grids: SampleGrids,
    entry_cap: int = DEFAULT_ENTRY_CAP,
) -> KernelMatrix:
    """Assemble the volume-target kernel: receiver-weighted scattering coefficient.

    Entry (m, n) combines the three aperture E-field integrands at voxel m with
    the receiver Green-tensor row, so that ``entries @ p`` gives the per-voxel
    coefficient whose contrast-weighted sum (times k^2 and the voxel volume)
    is the received x-polarised field.
    """
    if scene.config.target_kind != VOLUME_3D:
        raise KindMismatch(f"kernel_3d needs target_kind={VOLUME_3D!r}")
    ris = grids.ris_points
    targets = grids.target_points
    _check_size(targets.shape[0], ris.shape[0], entry_cap)

    k = scene.wavenumber
    jx = _incident_current_at(scene, ris[:, 1])
    receiver = np.asarray(scene.config.receiver_pos, dtype=float)
    green_rows = _green_x_row(receiver, targets, k)
    prefactor = -1j * FREE_SPACE_IMPEDANCE / (4.0 * math.pi * k) * grids.ris_cell_area

    out = np.empty((targets.shape[0], ris.shape[0]), dtype=np.complex128)
    for start in range(0, targets.shape[0], _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, targets.shape[0])
        diff = targets[start:stop, None, :] - ris[None, :, :]
        r = np.sqrt(np.einsum("mni,mni->mn", diff, diff))
        t_xx, t_xy, t_xz = _e_out_factors(k, diff, r, targets[start:stop, 2:3])
        rows = green_rows[start:stop]
        bracket = (
            rows[:, 0:1] * t_xx + rows[:, 1:2] * t_xy + rows[:, 2:3] * t_xz
        )
        out[start:stop] = prefactor * jx[None, :] * np.exp(-1j * k * r) * bracket
    out.setflags(write=False)
    return KernelMatrix(entries=out, kind=KIND_Y3D, fingerprint=scene.fingerprint)


def assemble_kernel(scene: ValidatedScene, grids: SampleGrids, entry_cap: int = DEFAULT_ENTRY_CAP) -> KernelMatrix:
    """Kernel of the kind matching the scene's target."""
    if scene.is_3d:
        return kernel_3d(scene, grids, entry_cap)
    return kernel_2d(scene, grids, entry_cap)


# --- disk cache ---------------------------------------------------------------
#
# One ASCII header line "kind=<kind> m=<M> n=<N> fingerprint=<hex>\n" followed
# by row-major little-endian complex128 entries (re, im float64 pairs).


def save_kernel(path: str | Path, kernel: KernelMatrix) -> None:
    m, n = kernel.entries.shape
    header = f"kind={kernel.kind} m={m} n={n} fingerprint={kernel.fingerprint}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(kernel.entries, dtype="<c16").tobytes())


def load_kernel(path: str | Path, expected_fingerprint: str | None = None) -> KernelMatrix:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        body = fh.read()
    try:
        meta = dict(item.split("=", 1) for item in header.split())
        kind = meta["kind"]
        m, n = int(meta["m"]), int(meta["n"])
        fp = meta["fingerprint"]
    except (KeyError, ValueError) as exc:
        raise CacheMismatch(f"unreadable kernel header {header!r}") from exc
    if kind not in (KIND_Z2D, KIND_Y3D):
        raise CacheMismatch(f"unknown kernel kind {kind!r}")
    if expected_fingerprint is not None and fp != expected_fingerprint:
        raise CacheMismatch(
            f"kernel cache fingerprint {fp} does not match the scene ({expected_fingerprint})"
        )
    entries = np.frombuffer(body, dtype="<c16")
    if entries.size != m * n:
        raise CacheMismatch(f"kernel body holds {entries.size} entries, expected {m * n}")
    entries = entries.reshape(m, n).astype(np.complex128)
    entries.setflags(write=False)
    return KernelMatrix(entries=entries, kind=kind, fingerprint=fp)
