"""Experiment geometry: configuration, validation, sampling grids, resolution bounds.

All lengths are metres, angles radians (degrees only in config files), fields V/m.
The reflecting aperture is a rectangle centred at the origin of the z = 0 plane;
the target plane (or the near face of the target volume) lies parallel to it at
``target_distance`` on the +z side.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .constants import SPEED_OF_LIGHT
from .errors import (
    FarFieldViolation,
    MalformedConfig,
    NearFieldViolation,
    NonPositiveDimension,
)

PLANE_2D = "plane2d"
VOLUME_3D = "volume3d"


@dataclass(frozen=True)
class SceneConfig:
    """Geometry, sampling, and power description of one experiment.

    ``n_ris_x * n_ris_y`` reflecting samples cover the aperture;
    ``n_target_x * n_target_y`` pixels (times ``n_target_z`` slices over
    ``target_depth`` for volume targets) cover the target region.
    ``reflection_coeff`` is the surface reflection coefficient of a 2D
    target (-1 for a perfect conductor) and is ignored for volumes.
    """

    wavelength: float
    ris_len_x: float
    ris_len_y: float
    target_len_x: float
    target_len_y: float
    target_distance: float
    incident_elevation: float
    receiver_pos: tuple[float, float, float]
    n_ris_x: int
    n_ris_y: int
    n_target_x: int
    n_target_y: int
    n_target_z: int = 1
    target_depth: float = 0.0
    target_kind: str = PLANE_2D
    incident_amplitude: float = 1.0
    amplification: float = 1.0
    reflection_coeff: complex = -1.0 + 0.0j


@dataclass(frozen=True)
class ValidatedScene:
    """A :class:`SceneConfig` that passed :func:`validate_scene`.

    Immutable; safe to share read-only across parallel workers.
    """

    config: SceneConfig

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.config.wavelength

    @property
    def angular_frequency(self) -> float:
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.config.wavelength

    @property
    def n_ris(self) -> int:
        return self.config.n_ris_x * self.config.n_ris_y

    @property
    def n_target(self) -> int:
        cfg = self.config
        n = cfg.n_target_x * cfg.n_target_y
        return n * cfg.n_target_z if cfg.target_kind == VOLUME_3D else n

    @property
    def is_3d(self) -> bool:
        return self.config.target_kind == VOLUME_3D

    @property
    def rayleigh_distance(self) -> float:
        cfg = self.config
        return 2.0 * (cfg.ris_len_x**2 + cfg.ris_len_y**2) / cfg.wavelength

    @property
    def receiver_far_field_bound(self) -> float:
        """Far-field distance of the target aperture, 2 D^2 / lambda with D its
        larger side (50 m for a 0.5 m square at 0.01 m wavelength)."""
        cfg = self.config
        return 2.0 * max(cfg.target_len_x, cfg.target_len_y) ** 2 / cfg.wavelength

    @property
    def receiver_target_distance(self) -> float:
        """Distance from the receiver to the target-region centre."""
        cfg = self.config
        centre_z = cfg.target_distance
        if cfg.target_kind == VOLUME_3D:
            centre_z += cfg.target_depth / 2.0
        x_r, y_r, z_r = cfg.receiver_pos
        return math.sqrt(x_r**2 + y_r**2 + (z_r - centre_z) ** 2)

    @property
    def ris_cell_area(self) -> float:
        cfg = self.config
        return (cfg.ris_len_x / cfg.n_ris_x) * (cfg.ris_len_y / cfg.n_ris_y)

    @property
    def target_cell_measure(self) -> float:
        """Pixel area for plane targets, voxel volume for volume targets."""
        cfg = self.config
        area = (cfg.target_len_x / cfg.n_target_x) * (cfg.target_len_y / cfg.n_target_y)
        if cfg.target_kind == VOLUME_3D:
            return area * (cfg.target_depth / cfg.n_target_z)
        return area

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.config)


@dataclass(frozen=True)
class SampleGrids:
    """Deterministic cell-centred sample points for one validated scene.

    Point ordering is x-fastest, then y, then z: flat index
    ``m = ix + nx * (iy + ny * iz)``. Arrays are read-only.
    """

    ris_points: np.ndarray  # (N, 3)
    target_points: np.ndarray  # (M, 3)
    ris_cell_area: float
    target_cell_measure: float


def validate_scene(cfg: SceneConfig) -> ValidatedScene:
    """Check all geometric invariants and wrap the config.

    Raises
    ------
    NonPositiveDimension
        For any non-positive length, wavelength, sample count, or power ratio.
    NearFieldViolation
        If the target is not strictly inside the aperture Rayleigh distance.
    FarFieldViolation
        If the receiver is not strictly beyond the target far-field bound.
    """
    positive_lengths = {
        "wavelength": cfg.wavelength,
        "ris_len_x": cfg.ris_len_x,
        "ris_len_y": cfg.ris_len_y,
        "target_len_x": cfg.target_len_x,
        "target_len_y": cfg.target_len_y,
        "target_distance": cfg.target_distance,
        "amplification": cfg.amplification,
    }
    for name, value in positive_lengths.items():
        if not value > 0.0:
            raise NonPositiveDimension(f"{name} must be > 0, got {value!r}")
    counts = {
        "n_ris_x": cfg.n_ris_x,
        "n_ris_y": cfg.n_ris_y,
        "n_target_x": cfg.n_target_x,
        "n_target_y": cfg.n_target_y,
    }
    if cfg.target_kind == VOLUME_3D:
        counts["n_target_z"] = cfg.n_target_z
        if not cfg.target_depth > 0.0:
            raise NonPositiveDimension(
                f"target_depth must be > 0 for {VOLUME_3D}, got {cfg.target_depth!r}"
            )
    for name, value in counts.items():
        if not (isinstance(value, int) and value > 0):
            raise NonPositiveDimension(f"{name} must be a positive integer, got {value!r}")
    if cfg.target_kind not in (PLANE_2D, VOLUME_3D):
        raise MalformedConfig(f"unknown target_kind {cfg.target_kind!r}")

    scene = ValidatedScene(cfg)
    far_face = cfg.target_distance + (cfg.target_depth if cfg.target_kind == VOLUME_3D else 0.0)
    if not far_face < scene.rayleigh_distance:
        raise NearFieldViolation(
            f"target at {far_face} m is not inside the Rayleigh "
            f"distance {scene.rayleigh_distance} m"
        )
    if not scene.receiver_target_distance > scene.receiver_far_field_bound:
        raise FarFieldViolation(
            f"receiver at {scene.receiver_target_distance} m from the target centre "
            f"is not beyond the far-field bound {scene.receiver_far_field_bound} m"
        )
    return scene


def _cell_centres(length: float, count: int) -> np.ndarray:
    # Cell-centred samples keep the quadrature weights exactly length/count.
    step = length / count
    return (np.arange(count) + 0.5) * step - length / 2.0


def sample_grids(scene: ValidatedScene) -> SampleGrids:
    """Uniform cell-centred grids over the aperture and the target region.

    Pure function of the configuration: byte-identical output across calls.
    """
    cfg = scene.config
    rx = _cell_centres(cfg.ris_len_x, cfg.n_ris_x)
    ry = _cell_centres(cfg.ris_len_y, cfg.n_ris_y)
    ris = np.column_stack(
        [
            np.tile(rx, cfg.n_ris_y),
            np.repeat(ry, cfg.n_ris_x),
            np.zeros(cfg.n_ris_x * cfg.n_ris_y),
        ]
    )

    tx = _cell_centres(cfg.target_len_x, cfg.n_target_x)
    ty = _cell_centres(cfg.target_len_y, cfg.n_target_y)
    if cfg.target_kind == VOLUME_3D:
        tz = cfg.target_distance + (np.arange(cfg.n_target_z) + 0.5) * (
            cfg.target_depth / cfg.n_target_z
        )
    else:
        tz = np.array([cfg.target_distance])
    nz = tz.size
    nxy = cfg.n_target_x * cfg.n_target_y
    target = np.column_stack(
        [
            np.tile(tx, cfg.n_target_y * nz),
            np.tile(np.repeat(ty, cfg.n_target_x), nz),
            np.repeat(tz, nxy),
        ]
    )

    ris.setflags(write=False)
    target.setflags(write=False)
    return SampleGrids(
        ris_points=ris,
        target_points=target,
        ris_cell_area=scene.ris_cell_area,
        target_cell_measure=scene.target_cell_measure,
    )


def aperture_half_sine(aperture: float, distance: float) -> float:
    """sin of half the angle the aperture subtends at the target centre."""
    return aperture / math.sqrt(aperture**2 + 4.0 * distance**2)


def resolution_from_sine(wavelength: float, half_sine: float) -> float:
    """Cross-range resolution from the subtended-angle sine: lambda / (2 sin)."""
    return wavelength / (2.0 * half_sine)


def resolution(scene: ValidatedScene) -> tuple[float, float]:
    """Cross-range resolution (dx, dy) of the mask spatial spectrum.

    Monotonically coarser as ``target_distance`` grows for a fixed aperture.
    """
    cfg = scene.config
    return (
        resolution_from_sine(cfg.wavelength, aperture_half_sine(cfg.ris_len_x, cfg.target_distance)),
        resolution_from_sine(cfg.wavelength, aperture_half_sine(cfg.ris_len_y, cfg.target_distance)),
    )


def fingerprint(cfg: SceneConfig) -> str:
    """Stable hex digest of every field that shapes kernels and grids."""
    parts = [f"{f.name}={getattr(cfg, f.name)!r}" for f in fields(cfg)]
    blob = ";".join(parts).encode()
    return hashlib.sha256(blob).hexdigest()


# --- declarative config file -------------------------------------------------
#
# Flat "key = value" lines, '#' comments. Keys match SceneConfig field names,
# except the receiver which is given as receiver_x/receiver_y/receiver_z and
# incident_elevation which is in DEGREES in the file.

_FLOAT_KEYS = {
    "wavelength",
    "ris_len_x",
    "ris_len_y",
    "target_len_x",
    "target_len_y",
    "target_distance",
    "target_depth",
    "incident_amplitude",
    "amplification",
}
_INT_KEYS = {"n_ris_x", "n_ris_y", "n_target_x", "n_target_y", "n_target_z"}
_REQUIRED_KEYS = {
    "wavelength",
    "ris_len_x",
    "ris_len_y",
    "target_len_x",
    "target_len_y",
    "target_distance",
    "incident_elevation",
    "receiver_x",
    "receiver_y",
    "receiver_z",
    "n_ris_x",
    "n_ris_y",
    "n_target_x",
    "n_target_y",
}


def parse_key_values(text: str) -> dict[str, str]:
    """Parse the flat key-value format shared by scene and plan files."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedConfig(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise MalformedConfig(f"line {lineno}: empty key or value in {raw!r}")
        if key in values:
            raise MalformedConfig(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def parse_scene_config(text: str) -> SceneConfig:
    """Build a :class:`SceneConfig` from the declarative key-value format."""
    values = parse_key_values(text)
    missing = _REQUIRED_KEYS - values.keys()
    if missing:
        raise MalformedConfig(f"missing scene keys: {sorted(missing)}")

    kwargs: dict = {}
    try:
        for key in _FLOAT_KEYS & values.keys():
            kwargs[key] = float(values.pop(key))
        for key in _INT_KEYS & values.keys():
            kwargs[key] = int(values.pop(key))
        kwargs["incident_elevation"] = math.radians(float(values.pop("incident_elevation")))
        kwargs["receiver_pos"] = (
            float(values.pop("receiver_x")),
            float(values.pop("receiver_y")),
            float(values.pop("receiver_z")),
        )
        if "reflection_coeff" in values:
            kwargs["reflection_coeff"] = complex(values.pop("reflection_coeff").replace(" ", ""))
    except ValueError as exc:
        raise MalformedConfig(f"bad scene value: {exc}") from exc
    if "target_kind" in values:
        kwargs["target_kind"] = values.pop("target_kind")
    if values:
        raise MalformedConfig(f"unknown scene keys: {sorted(values)}")
    return SceneConfig(**kwargs)


def load_scene_config(path: str | Path) -> SceneConfig:
    return parse_scene_config(Path(path).read_text())


def with_target_distance(cfg: SceneConfig, z_prime: float) -> SceneConfig:
    """Copy of the config at a different target distance (sweep helper)."""
    return replace(cfg, target_distance=z_prime)
