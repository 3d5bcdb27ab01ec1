"""Reflection-coefficient synthesis: truncated-SVD Tikhonov inversion + power scaling.

The kernel SVD is computed once and reused across every mask of a measurement
set; the regularized inverse maps each ideal mask to the coefficient vector
that best reproduces it under the quadratic penalty, and each vector is then
scaled onto the aperture power budget ||p||^2 = N * P_I.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .em_core import KIND_Y3D, KIND_Z2D, KernelMatrix
from .errors import DimensionMismatch, KindMismatch, SvdFailure, ZeroSolution
from .mask_design import KIND_MASK2D, KIND_MASK3D, MaskSet, with_realization

TRUNCATE_SIGMA_SQ = "sigma_sq"  # drop modes with sigma^2 < factor * gamma (default)
TRUNCATE_SIGMA = "sigma"  # drop modes with sigma < factor * gamma (literal reading)

DEFAULT_THRESHOLD_FACTOR = 1e-5

_KERNEL_TO_MASK_KIND = {KIND_Z2D: KIND_MASK2D, KIND_Y3D: KIND_MASK3D}


@dataclass(frozen=True)
class RegularizedInverse:
    """Truncated-SVD Tikhonov pseudo-inverse of a propagation kernel.

    ``inv_sigma`` holds sigma / (sigma^2 + gamma) for retained singular values
    and exactly zero for truncated ones; ``retained_rank`` counts the former.
    """

    u: np.ndarray  # (M, K)
    sigma: np.ndarray  # (K,)
    vh: np.ndarray  # (K, N)
    inv_sigma: np.ndarray  # (K,)
    gamma: float
    threshold_factor: float
    truncation_mode: str
    retained_rank: int

    def apply(self, rhs: np.ndarray) -> np.ndarray:
        """Regularized solution V Lambda U^H rhs for one vector or a stack."""
        rhs = np.asarray(rhs, dtype=np.complex128)
        if rhs.shape[0] != self.u.shape[0]:
            raise DimensionMismatch(
                f"right-hand side of length {rhs.shape[0]} does not match M={self.u.shape[0]}"
            )
        weighted = self.inv_sigma[:, None] * (self.u.conj().T @ rhs.reshape(rhs.shape[0], -1))
        solution = self.vh.conj().T @ weighted
        return solution[:, 0] if rhs.ndim == 1 else solution


def tikhonov_inverse(
    kernel: KernelMatrix,
    gamma: float,
    threshold_factor: float = DEFAULT_THRESHOLD_FACTOR,
    truncation_mode: str = TRUNCATE_SIGMA_SQ,
) -> RegularizedInverse:
    """SVD the kernel and build the regularized pseudo-inverse spectrum.

    Modes whose singular value falls below the truncation threshold are zeroed
    outright; raising ``threshold_factor`` can only shrink the retained rank.
    """
    if not gamma > 0.0:
        raise ValueError(f"regularization weight must be > 0, got {gamma!r}")
    if truncation_mode not in (TRUNCATE_SIGMA_SQ, TRUNCATE_SIGMA):
        raise ValueError(f"unknown truncation mode {truncation_mode!r}")
    try:
        u, sigma, vh = np.linalg.svd(kernel.entries, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(f"SVD did not converge on a {kernel.entries.shape} kernel") from exc

    if truncation_mode == TRUNCATE_SIGMA_SQ:
        keep = sigma**2 >= threshold_factor * gamma
    else:
        keep = sigma >= threshold_factor * gamma
    inv_sigma = np.where(keep, sigma / (sigma**2 + gamma), 0.0)
    inv_sigma.setflags(write=False)
    return RegularizedInverse(
        u=u,
        sigma=sigma,
        vh=vh,
        inv_sigma=inv_sigma,
        gamma=gamma,
        threshold_factor=threshold_factor,
        truncation_mode=truncation_mode,
        retained_rank=int(np.count_nonzero(inv_sigma)),
    )


@dataclass(frozen=True)
class RisProfile:
    """One power-normalised reflection-coefficient vector.

    ``solution_norm`` records ||p~|| before normalisation; after it,
    ||values||^2 equals n_samples * amplification exactly.
    """

    values: np.ndarray  # (N,) complex128
    solution_norm: float
    measurement_index: int | None = None


def synthesize(
    inv: RegularizedInverse,
    ideal_mask: np.ndarray,
    n_samples: int,
    amplification: float,
    measurement_index: int | None = None,
) -> RisProfile:
    """Coefficient vector realizing one mask, scaled to the power budget.

    Positive rescaling of the mask leaves the result unchanged.
    """
    solution = inv.apply(np.asarray(ideal_mask))
    norm = float(np.linalg.norm(solution))
    if norm == 0.0:
        raise ZeroSolution("mask lies outside the retained kernel range")
    values = np.sqrt(n_samples * amplification) * solution / norm
    values.setflags(write=False)
    return RisProfile(values=values, solution_norm=norm, measurement_index=measurement_index)


def realize_masks(
    kernel: KernelMatrix,
    inv: RegularizedInverse,
    masks: MaskSet,
    amplification: float,
) -> MaskSet:
    """Synthesize one profile per ideal mask and record the masks they produce."""
    if _KERNEL_TO_MASK_KIND.get(kernel.kind) != masks.kind:
        raise KindMismatch(f"kernel kind {kernel.kind!r} cannot realize {masks.kind!r} masks")
    n_samples = kernel.entries.shape[1]
    solutions = inv.apply(masks.ideal.T)  # (N, I)
    norms = np.linalg.norm(solutions, axis=0)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroSolution(f"mask {int(zero[0])} lies outside the retained kernel range")
    profiles = np.sqrt(n_samples * amplification) * solutions / norms[None, :]
    realized = (kernel.entries @ profiles).T
    return with_realization(
        masks, realized=realized, profiles=profiles.T, solution_norms=norms
    )


def singular_spectrum(kernel: KernelMatrix) -> np.ndarray:
    """Singular values of the kernel, descending."""
    return np.linalg.svd(kernel.entries, compute_uv=False)


def spectral_rank(sigma: np.ndarray, rel_threshold: float = 1e-3) -> int:
    """Number of singular values above ``rel_threshold`` times the largest."""
    sigma = np.asarray(sigma)
    if sigma.size == 0:
        return 0
    return int(np.count_nonzero(sigma > rel_threshold * sigma[0]))


def save_profiles(path: str | Path, masks: MaskSet, fingerprint: str) -> None:
    """Per-measurement coefficient vectors, same binary layout as mask exports."""
    if masks.profiles is None:
        raise ZeroSolution("mask set carries no synthesized profiles")
    count, n = masks.profiles.shape
    header = f"kind=profiles count={count} points={n} fingerprint={fingerprint}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(masks.profiles, dtype="<c16").tobytes())


def write_synthesis_summary(path: str | Path, inv: RegularizedInverse, masks: MaskSet) -> None:
    """Human-readable record: retained rank, gamma, per-mask solution norms."""
    lines = [
        f"retained_rank = {inv.retained_rank}",
        f"gamma = {inv.gamma!r}",
        f"threshold_factor = {inv.threshold_factor!r}",
        f"truncation_mode = {inv.truncation_mode}",
    ]
    if masks.solution_norms is not None:
        lines.extend(
            f"solution_norm[{i}] = {norm!r}" for i, norm in enumerate(masks.solution_norms)
        )
    Path(path).write_text("\n".join(lines) + "\n")
