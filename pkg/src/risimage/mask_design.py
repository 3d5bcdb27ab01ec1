"""Ideal virtual-mask design: orthogonal amplitude patterns and phase profiles.

For plane targets each mask is a {0,1} amplitude pattern times a common phase
profile chosen so the target-to-receiver propagation phase cancels; for volume
targets the masks are the real {0,1} patterns themselves. Amplitude patterns
come from distinct Hadamard-matrix columns, which makes the empirical mask
covariance exactly (1/4) times the one-point indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    CacheMismatch,
    DimensionMismatch,
    EmptyMaskSet,
    InsufficientMeasurements,
    KindMismatch,
    UnsupportedOrder,
)
from .scene import PLANE_2D, SampleGrids, ValidatedScene

KIND_MASK2D = "mask2d"
KIND_MASK3D = "mask3d"

PHASE_TAYLOR = "taylor"
PHASE_EXACT = "exact"


@dataclass(frozen=True)
class MaskSet:
    """Per-measurement mask vectors over the target samples.

    ``ideal`` holds the designed masks; ``realized`` (filled by the synthesis
    stage) holds the masks the aperture actually produces, with the generating
    coefficient vectors in ``profiles`` and the pre-normalisation solution
    norms in ``solution_norms``.
    """

    kind: str  # KIND_MASK2D | KIND_MASK3D
    ideal: np.ndarray  # (I, M) complex128
    phase: np.ndarray | None = None  # (M,) common phase profile (2D only)
    ideal_amplitudes: np.ndarray | None = None  # (I, M) designed {0,1} pattern
    realized: np.ndarray | None = None  # (I, M) complex128
    profiles: np.ndarray | None = None  # (I, N) complex128
    solution_norms: np.ndarray | None = None  # (I,)

    @property
    def count(self) -> int:
        return self.ideal.shape[0]

    @property
    def points(self) -> int:
        return self.ideal.shape[1]

    def selected(self, use: str = "auto") -> np.ndarray:
        """Pick the mask vectors a stage should work with.

        ``auto`` prefers realized masks when present; measurement simulation
        and reconstruction must use the same selection.
        """
        if use == "ideal":
            return self.ideal
        if use == "realized":
            if self.realized is None:
                raise EmptyMaskSet("no realized masks present")
            return self.realized
        if use == "auto":
            return self.realized if self.realized is not None else self.ideal
        raise ValueError(f"unknown mask selection {use!r}")

    def amplitude_values(self, use: str = "auto") -> np.ndarray:
        """Values whose spread encodes the target: magnitudes for plane masks,
        the (possibly complex) coefficients themselves for volume masks.

        For designed plane masks the stored {0,1} pattern is returned directly
        so the quarter-delta covariance stays exact.
        """
        vectors = self.selected(use)
        if self.kind != KIND_MASK2D:
            return vectors
        if vectors is self.ideal and self.ideal_amplitudes is not None:
            return self.ideal_amplitudes
        return np.abs(vectors)


def hadamard(order: int) -> np.ndarray:
    """Sylvester-construction Hadamard matrix of a power-of-two order.

    Satisfies H^T H = order * I; the first column is all ones.
    """
    if not (isinstance(order, int) and order >= 2 and order & (order - 1) == 0):
        raise UnsupportedOrder(f"order must be a power of two >= 2, got {order!r}")
    h = np.array([[1]], dtype=np.int8)
    base = np.array([[1, 1], [1, -1]], dtype=np.int8)
    while h.shape[0] < order:
        h = np.kron(base, h)
    return h


def _check_measurement_count(n_measurements: int, n_points: int) -> None:
    if not (
        isinstance(n_measurements, int)
        and n_measurements >= 4
        and n_measurements & (n_measurements - 1) == 0
    ):
        raise UnsupportedOrder(
            f"measurement count must be a power of two >= 4, got {n_measurements!r}"
        )
    if n_measurements < n_points:
        raise InsufficientMeasurements(
            f"{n_measurements} measurements cannot encode {n_points} sample points"
        )


def design_amplitudes(n_measurements: int, n_points: int) -> np.ndarray:
    """{0,1} amplitude pattern per measurement from distinct Hadamard columns.

    Point m takes column m+1 (skipping the uninformative all-ones first
    column); with exactly as many measurements as points the last point wraps
    onto the all-ones column and is unreconstructable (flagged downstream).
    The empirical covariance over measurements is exactly (1/4) delta.
    """
    _check_measurement_count(n_measurements, n_points)
    h = hadamard(n_measurements)
    columns = [(m + 1) % n_measurements for m in range(n_points)]
    return (1.0 + h[:, columns].astype(np.float64)) / 2.0


def design_phases_2d(
    scene: ValidatedScene, grids: SampleGrids, mode: str = PHASE_TAYLOR
) -> np.ndarray:
    """Common mask phase profile cancelling the pixel-to-receiver path phase.

    ``taylor`` uses the first-order expansion of the receiver distance around
    the target centre (affine in x', y'); ``exact`` uses pi/2 + k R' per pixel.
    Depends only on the receiver position, the wavenumber, and the grid.
    """
    if scene.config.target_kind != PLANE_2D:
        raise KindMismatch("phase profiles are defined for plane targets only")
    k = scene.wavenumber
    receiver = np.asarray(scene.config.receiver_pos, dtype=float)
    points = grids.target_points
    if mode == PHASE_EXACT:
        dist = np.linalg.norm(points - receiver[None, :], axis=1)
        return math.pi / 2.0 + k * dist
    if mode != PHASE_TAYLOR:
        raise ValueError(f"unknown phase mode {mode!r}")
    centre = np.array([0.0, 0.0, scene.config.target_distance])
    r0 = float(np.linalg.norm(receiver - centre))
    return math.pi / 2.0 + k * (
        r0 - receiver[0] / r0 * points[:, 0] - receiver[1] / r0 * points[:, 1]
    )


# Amplitude-pattern generators: (n_measurements, n_points) -> (I, M) array with
# zero-mean, mutually orthogonal columns after the 2q-1 mapping. Hadamard is
# the only shipped family; alternatives (Gaussian random, Fourier) can be
# registered without touching the rest of the pipeline.
AMPLITUDE_PATTERNS = {"hadamard": design_amplitudes}


def ideal_masks(
    scene: ValidatedScene,
    grids: SampleGrids,
    n_measurements: int,
    phase_mode: str = PHASE_TAYLOR,
    pattern: str = "hadamard",
) -> MaskSet:
    """Design the full ideal mask set for the scene's target kind."""
    try:
        generator = AMPLITUDE_PATTERNS[pattern]
    except KeyError:
        raise ValueError(
            f"unknown amplitude pattern {pattern!r}; available: {sorted(AMPLITUDE_PATTERNS)}"
        ) from None
    amplitudes = generator(n_measurements, grids.target_points.shape[0])
    amplitudes.setflags(write=False)
    if scene.is_3d:
        ideal = amplitudes.astype(np.complex128)
        phase = None
    else:
        phase = design_phases_2d(scene, grids, phase_mode)
        ideal = amplitudes * np.exp(1j * phase)[None, :]
    ideal.setflags(write=False)
    kind = KIND_MASK3D if scene.is_3d else KIND_MASK2D
    return MaskSet(kind=kind, ideal=ideal, phase=phase, ideal_amplitudes=amplitudes)


def mask_covariance(masks: MaskSet, ref_index: int, use: str = "auto") -> np.ndarray:
    """Empirical covariance of every mask point against a reference point.

    v_m = <u_i(m) u_i(m0)> - <u_i(m)> <u_i(m0)> over the measurement index,
    where u are the mask amplitude values. Ideal plane masks give exactly
    (1/4) times the indicator of the reference point.
    """
    if masks.count == 0:
        raise EmptyMaskSet("mask set has no measurements")
    u = masks.amplitude_values(use)
    if not 0 <= ref_index < u.shape[1]:
        raise DimensionMismatch(f"reference index {ref_index} outside 0..{u.shape[1] - 1}")
    ref = u[:, ref_index]
    return (u * ref[:, None]).mean(axis=0) - u.mean(axis=0) * ref.mean()


def with_realization(
    masks: MaskSet,
    realized: np.ndarray,
    profiles: np.ndarray | None = None,
    solution_norms: np.ndarray | None = None,
) -> MaskSet:
    """Copy of the set with realized vectors attached."""
    if realized.shape != masks.ideal.shape:
        raise DimensionMismatch(
            f"realized shape {realized.shape} does not match ideal {masks.ideal.shape}"
        )
    realized = np.asarray(realized, dtype=np.complex128)
    realized.setflags(write=False)
    return replace(
        masks, realized=realized, profiles=profiles, solution_norms=solution_norms
    )


# --- disk export ----------------------------------------------------------------
#
# One ASCII header line "kind=<kind> count=<I> points=<M> fingerprint=<hex>\n"
# followed by the per-measurement vectors as little-endian complex128, one
# vector set per file.


def save_mask_vectors(
    path: str | Path, masks: MaskSet, fingerprint: str, which: str = "ideal"
) -> None:
    vectors = masks.selected(which)
    header = (
        f"kind={masks.kind} count={masks.count} points={masks.points} "
        f"fingerprint={fingerprint}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(vectors, dtype="<c16").tobytes())


def load_mask_vectors(path: str | Path) -> tuple[str, np.ndarray, str]:
    """Read one exported vector set; returns (kind, vectors, fingerprint)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        body = fh.read()
    try:
        meta = dict(item.split("=", 1) for item in header.split())
        kind = meta["kind"]
        count, points = int(meta["count"]), int(meta["points"])
        fp = meta["fingerprint"]
    except (KeyError, ValueError) as exc:
        raise CacheMismatch(f"unreadable mask header {header!r}") from exc
    vectors = np.frombuffer(body, dtype="<c16")
    if vectors.size != count * points:
        raise CacheMismatch(f"mask body holds {vectors.size} values, expected {count * points}")
    vectors = vectors.reshape(count, points).astype(np.complex128)
    vectors.setflags(write=False)
    return kind, vectors, fp
