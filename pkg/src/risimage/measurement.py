"""Measurement chain: target scattering, receiver field, and thermal noise.

Noise is circularly-symmetric complex Gaussian added to the complex receiver
field before any magnitude detection, drawn from a counter-based generator
with a per-measurement derived seed (seed XOR index) so execution order never
changes results.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import VACUUM_PERMITTIVITY
from .em_core import KIND_Y3D, KernelMatrix, psf_vector
from .errors import DimensionMismatch, EmptySet, KindMismatch
from .mask_design import KIND_MASK2D, MaskSet
from .scene import PLANE_2D, VOLUME_3D, SampleGrids, ValidatedScene

NOISE_RELATIVE = "relative"  # variance from requested SNR and measured signal power
NOISE_ABSOLUTE = "absolute"  # variance = N0 * B regardless of the signal

DEFAULT_N0_DBM_PER_HZ = -174.0
DEFAULT_BANDWIDTH_HZ = 1.0e6


@dataclass(frozen=True)
class TargetModel:
    """Scattering description on the target grid, x-fastest flat ordering.

    Plane targets: ``values`` is the {0,1} coverage map and
    ``reflection_coeff`` the surface reflection coefficient (-1 for a perfect
    conductor). Volume targets: ``values`` is the complex contrast
    (relative permittivity - 1) + j conductivity / (eps0 * omega), so loss
    enters with a positive imaginary part.
    """

    kind: str  # PLANE_2D | VOLUME_3D
    values: np.ndarray  # (M,) float {0,1} or complex contrast
    grid_shape: tuple[int, ...]  # (nx, ny) or (nx, ny, nz)
    reflection_coeff: complex = -1.0 + 0.0j

    @property
    def n_points(self) -> int:
        return self.values.shape[0]


def make_target_2d(values: np.ndarray, grid_shape: tuple[int, int], reflection_coeff: complex = -1.0 + 0.0j) -> TargetModel:
    values = np.asarray(values, dtype=float).reshape(-1)
    if not np.all((values == 0.0) | (values == 1.0)):
        raise ValueError("plane-target coverage values must be exactly 0 or 1")
    values.setflags(write=False)
    return TargetModel(kind=PLANE_2D, values=values, grid_shape=tuple(grid_shape), reflection_coeff=reflection_coeff)


def contrast_from_materials(eps_r: np.ndarray, sigma: np.ndarray, angular_frequency: float) -> np.ndarray:
    """Complex contrast of a dielectric relative to air."""
    return (np.asarray(eps_r, dtype=float) - 1.0) + 1j * np.asarray(sigma, dtype=float) / (
        VACUUM_PERMITTIVITY * angular_frequency
    )


def make_target_3d(contrast: np.ndarray, grid_shape: tuple[int, int, int]) -> TargetModel:
    values = np.asarray(contrast, dtype=np.complex128).reshape(-1)
    values.setflags(write=False)
    return TargetModel(kind=VOLUME_3D, values=values, grid_shape=tuple(grid_shape))


@dataclass(frozen=True)
class MeasurementRecord:
    """One simulated measurement.

    ``noisy`` is the detected magnitude for plane targets and the complex
    field for volume targets; ``noiseless`` is always the complex field.
    """

    index: int
    noiseless: complex
    noisy: complex | float
    noise_variance: float
    snr_db: float | None
    seed: int


def target_current_2d(realized_mask: np.ndarray, target: TargetModel) -> np.ndarray:
    """Surface current density induced on a plane target by one mask field.

    The coverage map scales the contribution at the receiver-integral stage,
    not here; this is the (1 - reflection) conversion only, so a perfect
    conductor doubles the field.
    """
    if target.kind != PLANE_2D:
        raise KindMismatch("target currents are defined for plane targets")
    return (1.0 - target.reflection_coeff) * np.asarray(realized_mask, dtype=np.complex128)


def receiver_field_2d(
    scene: ValidatedScene,
    grids: SampleGrids,
    current: np.ndarray,
    target: TargetModel,
) -> complex:
    """x-polarised receiver field scattered by a plane target."""
    if target.kind != PLANE_2D:
        raise KindMismatch("expected a plane target")
    current = np.asarray(current)
    if current.shape != (target.n_points,):
        raise DimensionMismatch(
            f"current of shape {current.shape} does not match M={target.n_points}"
        )
    weights = psf_vector(scene, grids.target_points) * target.values * grids.target_cell_measure
    return complex(current @ weights)


def receiver_field_3d(
    scene: ValidatedScene,
    kernel: KernelMatrix,
    p: np.ndarray,
    target: TargetModel,
) -> complex:
    """Born-approximation receiver field scattered by a volume target."""
    if target.kind != VOLUME_3D:
        raise KindMismatch("expected a volume target")
    if kernel.kind != KIND_Y3D:
        raise KindMismatch("expected a volume kernel")
    coefficients = kernel.entries @ np.asarray(p)
    return _field_from_b(scene, coefficients, target)


def _field_from_b(scene: ValidatedScene, coefficients: np.ndarray, target: TargetModel) -> complex:
    k = scene.wavenumber
    return complex(k**2 * scene.target_cell_measure * (target.values @ coefficients))


def noise_variance(noiseless_fields: np.ndarray, snr_db: float) -> float:
    """Variance giving the requested receiver SNR against the mean signal power."""
    fields = np.asarray(noiseless_fields)
    if fields.size == 0:
        raise EmptySet("SNR is undefined over an empty measurement set")
    return float(np.mean(np.abs(fields) ** 2) / 10.0 ** (snr_db / 10.0))


def noise_power_watts(n0_dbm_per_hz: float = DEFAULT_N0_DBM_PER_HZ, bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ) -> float:
    """Thermal noise power N0 * B in watts."""
    return 10.0 ** ((n0_dbm_per_hz - 30.0) / 10.0) * bandwidth_hz


def noise_power_dbm(n0_dbm_per_hz: float = DEFAULT_N0_DBM_PER_HZ, bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ) -> float:
    """Thermal noise power N0 * B in dBm."""
    return n0_dbm_per_hz + 10.0 * math.log10(bandwidth_hz)


def complex_noise(variance: float, seed: int, index: int) -> complex:
    """Circularly-symmetric complex Gaussian draw for one measurement.

    Counter-based generator keyed by seed XOR index: independent of execution
    order, bit-reproducible, and exactly homogeneous in sqrt(variance).
    """
    rng = np.random.Generator(np.random.Philox(seed ^ index))
    re, im = rng.standard_normal(2)
    return complex(math.sqrt(variance / 2.0) * (re + 1j * im))


def noiseless_fields(
    scene: ValidatedScene,
    grids: SampleGrids,
    masks: MaskSet,
    target: TargetModel,
    use: str = "auto",
) -> np.ndarray:
    """Complex receiver field per measurement, without noise."""
    vectors = masks.selected(use)
    if vectors.shape[1] != target.n_points:
        raise DimensionMismatch(
            f"masks over {vectors.shape[1]} points do not match the {target.n_points}-point target"
        )
    if masks.kind == KIND_MASK2D:
        if target.kind != PLANE_2D:
            raise KindMismatch("plane masks require a plane target")
        weights = psf_vector(scene, grids.target_points) * target.values * grids.target_cell_measure
        return (1.0 - target.reflection_coeff) * (vectors @ weights)
    if target.kind != VOLUME_3D:
        raise KindMismatch("volume masks require a volume target")
    k = scene.wavenumber
    return k**2 * scene.target_cell_measure * (vectors @ target.values)


def measure(
    scene: ValidatedScene,
    grids: SampleGrids,
    masks: MaskSet,
    target: TargetModel,
    snr_db: float | None,
    seed: int,
    noise_mode: str = NOISE_RELATIVE,
    use: str = "auto",
    n0_dbm_per_hz: float = DEFAULT_N0_DBM_PER_HZ,
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ,
) -> list[MeasurementRecord]:
    """Simulate the full measurement set.

    ``snr_db=None`` disables noise. In ``relative`` mode the variance is set
    from the requested SNR against the simulated signal power; in ``absolute``
    mode it is the thermal power N0 * B. Deterministic under a fixed seed.
    """
    fields = noiseless_fields(scene, grids, masks, target, use)
    if snr_db is None:
        variance = 0.0
    elif noise_mode == NOISE_RELATIVE:
        variance = noise_variance(fields, snr_db)
    elif noise_mode == NOISE_ABSOLUTE:
        variance = noise_power_watts(n0_dbm_per_hz, bandwidth_hz)
    else:
        raise ValueError(f"unknown noise mode {noise_mode!r}")

    magnitude_detector = masks.kind == KIND_MASK2D
    records = []
    for i, field in enumerate(fields):
        noisy = complex(field) + (complex_noise(variance, seed, i) if variance > 0.0 else 0.0)
        records.append(
            MeasurementRecord(
                index=i,
                noiseless=complex(field),
                noisy=float(abs(noisy)) if magnitude_detector else noisy,
                noise_variance=float(variance),
                snr_db=snr_db,
                seed=seed ^ i,
            )
        )
    return records


# --- CSV export ------------------------------------------------------------------

_CSV_FIELDS = ["index", "re_noiseless", "im_noiseless", "value_noisy_or_re", "im_if_3d", "sigma2", "seed"]


def records_to_csv(path: str | Path, records: list[MeasurementRecord]) -> None:
    """RFC-4180 CSV; the noisy value is one column for magnitudes, two for fields."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for rec in records:
            if isinstance(rec.noisy, complex):
                noisy_re, noisy_im = repr(rec.noisy.real), repr(rec.noisy.imag)
            else:
                noisy_re, noisy_im = repr(float(rec.noisy)), ""
            writer.writerow(
                [
                    rec.index,
                    repr(rec.noiseless.real),
                    repr(rec.noiseless.imag),
                    noisy_re,
                    noisy_im,
                    repr(rec.noise_variance),
                    rec.seed,
                ]
            )


def records_from_csv(path: str | Path) -> list[MeasurementRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _CSV_FIELDS:
            raise EmptySet(f"unexpected measurement CSV header {reader.fieldnames!r}")
        for row in reader:
            noiseless = complex(float(row["re_noiseless"]), float(row["im_noiseless"]))
            if row["im_if_3d"]:
                noisy: complex | float = complex(float(row["value_noisy_or_re"]), float(row["im_if_3d"]))
            else:
                noisy = float(row["value_noisy_or_re"])
            records.append(
                MeasurementRecord(
                    index=int(row["index"]),
                    noiseless=noiseless,
                    noisy=noisy,
                    noise_variance=float(row["sigma2"]),
                    snr_db=None,
                    seed=int(row["seed"]),
                )
            )
    return records
