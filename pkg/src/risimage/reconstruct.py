"""Correlation reconstruction of targets from measurements plus mask knowledge.

The estimate at each target sample is the measurement-mask covariance divided
by the per-sample mask variance (estimated empirically from the same masks,
so synthesis distortion self-compensates) and, for plane targets, by the
propagation weight magnitude. Sample points whose masks carry no variance are
unreconstructable and set to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMaskSet, KindMismatch, ZeroTruth
from .mask_design import KIND_MASK2D, KIND_MASK3D, MaskSet
from .measurement import MeasurementRecord
from .scene import ValidatedScene

CALIBRATE_NONE = "none"
CALIBRATE_MAX1 = "max1"
CALIBRATE_LSQ = "lsq"  # scalar least-squares fit to the truth; test-only

# Relative floor below which a mask variance counts as zero.
_FLAG_RTOL = 1e-12


@dataclass(frozen=True)
class ReconstructionResult:
    """Estimated target grid plus quality metrics and run metadata."""

    estimate: np.ndarray  # (M,) float (plane) or complex (volume)
    c_values: np.ndarray  # (M,) empirical mask variance used
    flagged: np.ndarray  # (M,) bool, True where unreconstructable
    nmse: float | None = None
    metadata: dict | None = None


def estimate_c(masks: MaskSet, use: str = "auto") -> np.ndarray:
    """Empirical per-point mask variance: the diagonal of the mask covariance.

    Plain (unconjugated) products, as the correlation reconstruction demands;
    complex-valued for distorted volume masks, exactly 1/4 for ideal ones.
    """
    if masks.count == 0:
        raise EmptyMaskSet("mask set has no measurements")
    u = masks.amplitude_values(use)
    return (u * u).mean(axis=0) - u.mean(axis=0) ** 2


def zero_variance_flags(c_values: np.ndarray, masks: MaskSet | None = None, use: str = "auto") -> np.ndarray:
    """True where the mask variance is (relatively) zero: point unreconstructable.

    The comparison scale is the mask second moment when the masks are given
    (so a constant mask set flags every point), else the largest variance.
    """
    magnitude = np.abs(np.asarray(c_values))
    scale = magnitude.max() if magnitude.size else 0.0
    if masks is not None and masks.count:
        u = masks.amplitude_values(use)
        scale = max(scale, float(np.mean(np.abs(u) ** 2, axis=0).max()))
    return magnitude <= _FLAG_RTOL * scale


def _noisy_column(records: list[MeasurementRecord]) -> np.ndarray:
    return np.asarray([rec.noisy for rec in records])


def reconstruct_2d(
    records: list[MeasurementRecord],
    masks: MaskSet,
    psf_values: np.ndarray,
    c_values: np.ndarray | None = None,
    use: str = "auto",
) -> ReconstructionResult:
    """Recover a plane target's coverage map from detected magnitudes.

    estimate_m = sum_i (|E_i| - <|E|>) u_i(m) / (I c_m |K_m|) with u the mask
    amplitudes. Invariant under adding a constant to every measurement and
    under positive rescaling of all masks (the scaling cancels against c).
    """
    if masks.kind != KIND_MASK2D:
        raise KindMismatch("reconstruct_2d needs plane masks")
    if len(records) != masks.count:
        raise DimensionMismatch(f"{len(records)} records for {masks.count} masks")
    psf_values = np.asarray(psf_values)
    if psf_values.shape != (masks.points,):
        raise DimensionMismatch(
            f"PSF vector of shape {psf_values.shape} does not match M={masks.points}"
        )
    amplitudes = masks.amplitude_values(use)
    if c_values is None:
        c_values = estimate_c(masks, use)
    flagged = zero_variance_flags(c_values, masks, use)

    detected = _noisy_column(records).astype(float)
    centred = detected - detected.mean()
    numerator = centred @ amplitudes
    estimate = np.zeros(masks.points)
    live = ~flagged
    estimate[live] = numerator[live] / (
        len(records) * c_values[live].real * np.abs(psf_values[live])
    )
    return ReconstructionResult(estimate=estimate, c_values=np.asarray(c_values), flagged=flagged)


def reconstruct_3d(
    scene: ValidatedScene,
    records: list[MeasurementRecord],
    masks: MaskSet,
    c_values: np.ndarray | None = None,
    use: str = "auto",
) -> ReconstructionResult:
    """Recover a volume target's complex contrast from complex fields.

    estimate_m = sum_i (E_i - <E>) B_i(m) / (I k^2 c_m), plain products.
    """
    if masks.kind != KIND_MASK3D:
        raise KindMismatch("reconstruct_3d needs volume masks")
    if len(records) != masks.count:
        raise DimensionMismatch(f"{len(records)} records for {masks.count} masks")
    vectors = masks.amplitude_values(use)
    if c_values is None:
        c_values = estimate_c(masks, use)
    flagged = zero_variance_flags(c_values, masks, use)

    fields = _noisy_column(records).astype(np.complex128)
    centred = fields - fields.mean()
    numerator = centred @ vectors
    estimate = np.zeros(masks.points, dtype=np.complex128)
    live = ~flagged
    k = scene.wavenumber
    estimate[live] = numerator[live] / (len(records) * k**2 * c_values[live])
    return ReconstructionResult(estimate=estimate, c_values=np.asarray(c_values), flagged=flagged)


def nmse(truth: np.ndarray, estimate: np.ndarray, include: np.ndarray | None = None) -> float:
    """Normalised mean square error ||t - t_hat||^2 / ||t||^2 over flat grids.

    By default unreconstructable points count as zeros in the estimate;
    passing ``include`` (diagnostic use) restricts the comparison to the
    selected points instead.
    """
    truth = np.asarray(truth).reshape(-1)
    estimate = np.asarray(estimate).reshape(-1)
    if truth.shape != estimate.shape:
        raise DimensionMismatch(f"truth {truth.shape} vs estimate {estimate.shape}")
    if include is not None:
        include = np.asarray(include, dtype=bool).reshape(-1)
        if include.shape != truth.shape:
            raise DimensionMismatch(f"include mask {include.shape} vs truth {truth.shape}")
        truth = truth[include]
        estimate = estimate[include]
    denominator = float(np.sum(np.abs(truth) ** 2))
    if denominator == 0.0:
        raise ZeroTruth("NMSE is undefined for an all-zero truth grid")
    return float(np.sum(np.abs(truth - estimate) ** 2) / denominator)


def calibrate_estimate(
    estimate: np.ndarray, mode: str, truth: np.ndarray | None = None
) -> np.ndarray:
    """Put an estimate on a comparable scale before scoring.

    ``none`` is the identity, ``max1`` divides by the peak value, ``lsq`` fits
    the single scalar minimising the squared error to the truth (test-only,
    needs the truth grid).
    """
    estimate = np.asarray(estimate)
    if mode == CALIBRATE_NONE:
        return estimate.copy()
    if mode == CALIBRATE_MAX1:
        peak = np.abs(estimate).max() if np.iscomplexobj(estimate) else estimate.max()
        return estimate / peak if peak > 0 else estimate.copy()
    if mode == CALIBRATE_LSQ:
        if truth is None:
            raise ValueError("lsq calibration needs the truth grid")
        truth = np.asarray(truth).reshape(estimate.shape)
        power = np.vdot(estimate, estimate)
        if power == 0:
            return estimate.copy()
        scale = np.vdot(estimate, truth) / power
        if not (np.iscomplexobj(estimate) or np.iscomplexobj(truth)):
            scale = scale.real
        return scale * estimate
    raise ValueError(f"unknown calibration mode {mode!r}")
