"""Randomized in-silico breast phantom synthesis.

A phantom is assembled from three layers: a tissue label map (gland
foreground/background from a thresholded Gaussian random field, an optional
skin band, an optional elliptical cyst or lesion), a discretized scatterer
field, and per-pixel acoustic property maps.  The training target is the
region-averaged sound-speed map.

Arrays are (nz, nx): row 0 is the transducer face, columns run laterally.
Phantom-local coordinates are corner-origin: x = col * dx, y = row * dz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.signal import fftconvolve

from .seeding import rng_from

DEFAULT_SPACING = 58.594e-6
"""Grid spacing in meters (five grid points per 293 um element)."""

DEFAULT_WAVELENGTH = 1540.0 / 5e6
"""Transmit wavelength at 5 MHz in 1540 m/s tissue, in meters."""

DEFAULT_SCATTERERS_PER_CELL = 4.0

SPEED_FLOOR = 1400.0
SPEED_CEIL = 1750.0

SKIN_THICKNESS_RANGE = (0.7e-3, 3.0e-3)
ALPHA_RHO_RANGE = (1.35, 1.65)
GLAND_SPEED_MIN_SEPARATION = 5.0

GRF_FILTER_SIZE = (400, 400)
GRF_SIGMA = 600.0
GRF_QUANTILE_RANGE = (0.3, 0.7)

INCLUSION_EXTENT_RANGE = (2e-3, 15e-3)

SCATTER_REF_AMPLITUDE = 10.0
"""Peak-to-peak sound-speed perturbation (m/s) of a 0 dB region's scatterers.

Contrasts are expressed in dB relative to the gland background.  The
reference is sized so the strongest lesion contrast (+30 dB on a 1488 m/s
mean) stays inside the [1400, 1750] m/s property bounds.
"""


class Tissue(IntEnum):
    GLAND_BG = 0
    GLAND_FG = 1
    SKIN = 2
    CYST = 3
    LESION = 4


PHANTOM_CLASSES = ("cyst_skin", "lesion_skin", "skin", "gland", "lesion", "cyst")

SPEED_RANGES = {
    Tissue.CYST: (1500.0, 1620.0),
    Tissue.LESION: (1488.0, 1512.0),
    Tissue.SKIN: (1540.0, 1670.0),
    Tissue.GLAND_BG: (1480.0, 1528.0),
    Tissue.GLAND_FG: (1480.0, 1528.0),
}

SCATTER_CONTRAST_DB = {
    Tissue.GLAND_BG: 0.0,
    Tissue.GLAND_FG: 12.0,
    Tissue.SKIN: 10.0,
}
LESION_CONTRAST_DB_RANGE = (10.0, 30.0)


@dataclass(frozen=True)
class GridSpec:
    """Pixel grid of the phantom: counts, spacing, lateral offset."""

    nx: int = 256
    nz: int = 384
    dx: float = DEFAULT_SPACING
    dz: float = DEFAULT_SPACING
    origin: float = 0.0

    def __post_init__(self):
        if self.nx < 16 or self.nz < 16:
            raise ValueError(f"grid must be at least 16x16, got {self.nx}x{self.nz}")
        if self.dx <= 0 or self.dz <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def width(self) -> float:
        return self.nx * self.dx

    @property
    def depth(self) -> float:
        return self.nz * self.dz

    def x_local(self) -> np.ndarray:
        """Corner-origin lateral pixel coordinates."""
        return np.arange(self.nx) * self.dx

    def z_local(self) -> np.ndarray:
        """Corner-origin axial pixel coordinates (depth below the face)."""
        return np.arange(self.nz) * self.dz

    def x_transducer(self) -> np.ndarray:
        """Lateral pixel coordinates in the transducer-centered frame."""
        return self.x_local() - (self.nx - 1) / 2 * self.dx + self.origin


@dataclass(frozen=True)
class EllipseParams:
    """Inclusion geometry; r1, r2 are the raw (un-squared) denominators.

    The boundary condition is E <= 1 with the quadratic forms divided by r1
    and r2 directly, so the semi-axes are sqrt(r1) and sqrt(r2) meters.
    """

    xc: float
    yc: float
    r1: float
    r2: float
    theta: float = 0.0

    def __post_init__(self):
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError("ellipse denominators must be positive")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError("theta must lie in [0, pi]")

    @property
    def semi_axes(self) -> tuple[float, float]:
        return math.sqrt(self.r1), math.sqrt(self.r2)


@dataclass
class TissueLabelMap:
    labels: np.ndarray
    class_kind: str

    def present(self) -> list[Tissue]:
        return [Tissue(v) for v in np.unique(self.labels)]


@dataclass
class ScattererField:
    occupancy: np.ndarray
    amplitude: np.ndarray
    rho_s: float
    n_s: float


@dataclass
class PropertyMaps:
    c: np.ndarray
    rho: np.ndarray
    alpha_coeff: float = 0.75
    alpha_power: float = 1.5
    b_over_a: float = 6.0


@dataclass
class Phantom:
    grid: GridSpec
    labels: TissueLabelMap
    props: PropertyMaps
    scatterers: ScattererField
    target: np.ndarray
    seed: int
    mean_speeds: dict
    meta: dict = field(default_factory=dict)

    @property
    def class_kind(self) -> str:
        return self.labels.class_kind


def ellipse_mask(grid: GridSpec, e: EllipseParams) -> np.ndarray:
    """Boolean (nz, nx) mask of pixels with E(x, y) <= 1.

    E is evaluated with the denominators un-squared:
    E = ((x-xc) cos t + (y-yc) sin t)^2 / r1 + ((x-xc) sin t - (y-yc) cos t)^2 / r2.
    A degenerate ellipse smaller than one pixel yields an empty mask.
    """
    x = grid.x_local()[None, :]
    y = grid.z_local()[:, None]
    ct, st = math.cos(e.theta), math.sin(e.theta)
    a = (x - e.xc) * ct + (y - e.yc) * st
    b = (x - e.xc) * st - (y - e.yc) * ct
    return a * a / e.r1 + b * b / e.r2 <= 1.0


def gen_skin_band(grid: GridSpec, thickness_m: float) -> np.ndarray:
    """Boolean (nz, nx) mask of the top ceil(thickness/dz) rows.

    Thickness outside the anatomical range [0.7, 3] mm is a parameter error.
    """
    lo, hi = SKIN_THICKNESS_RANGE
    if not lo <= thickness_m <= hi:
        raise ValueError(
            f"skin thickness {thickness_m * 1e3:.3f} mm outside anatomical range "
            f"[{lo * 1e3:.1f}, {hi * 1e3:.1f}] mm"
        )
    n_rows = math.ceil(thickness_m / grid.dz)
    mask = np.zeros((grid.nz, grid.nx), dtype=bool)
    mask[:n_rows] = True
    return mask


@dataclass
class GlandField:
    field: np.ndarray
    foreground: np.ndarray
    threshold_quantile: float


def gen_grf_gland(grid: GridSpec, filter_size=GRF_FILTER_SIZE, sigma=GRF_SIGMA,
                  threshold_quantile=0.5, seed=0) -> GlandField:
    """Thresholded Gaussian random field for the gland fg/bg split.

    A uniform random field of size (nz + y_f, nx + x_f) is convolved with the
    truncated Gaussian kernel g(u, v) = exp(-(u^2+v^2)/(2 sigma^2)) / (2 pi
    sigma^2) on u in [-x_f/2, x_f/2], v in [-y_f/2, y_f/2], cropped to the
    grid, centered, and affinely scaled so min = -0.5 and max = +0.5 exactly.
    Pixels at or above the threshold quantile are foreground.
    """
    x_f, y_f = int(filter_size[0]), int(filter_size[1])
    if x_f < 1 or y_f < 1:
        raise ValueError("filter size must be at least 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not 0.0 < threshold_quantile < 1.0:
        raise ValueError("threshold quantile must lie in (0, 1)")
    rng = rng_from(seed)

    raw = rng.random((grid.nz + y_f, grid.nx + x_f))
    u = np.arange(-(x_f // 2), x_f - x_f // 2 + 1, dtype=float)[None, :]
    v = np.arange(-(y_f // 2), y_f - y_f // 2 + 1, dtype=float)[:, None]
    kernel = np.exp(-(u * u + v * v) / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)
    smooth = fftconvolve(raw, kernel, mode="valid")  # (x_f+1 taps on nx+x_f) -> exactly nx
    smooth = smooth - smooth.mean()
    span = smooth.max() - smooth.min()
    scaled = (smooth - smooth.min()) / span - 0.5

    thr = np.quantile(scaled, threshold_quantile)
    return GlandField(field=scaled, foreground=scaled >= thr, threshold_quantile=threshold_quantile)


def scatterer_density(n_s: float, wavelength_m: float, grid: GridSpec) -> float:
    """2D discretized density: scatterers per resolution cell times dx*dz/lambda^2."""
    return n_s / (wavelength_m * wavelength_m) * grid.dx * grid.dz


def gen_scatterers(grid: GridSpec, n_s: float = DEFAULT_SCATTERERS_PER_CELL,
                   wavelength_m: float = DEFAULT_WAVELENGTH, seed=0) -> ScattererField:
    """Bernoulli occupancy with Uniform[-0.5, 0.5] amplitudes on occupied pixels."""
    if n_s < 0:
        raise ValueError("n_s must be non-negative")
    if wavelength_m <= 0:
        raise ValueError("wavelength must be positive")
    rho_s = scatterer_density(n_s, wavelength_m, grid)
    if rho_s > 1.0:
        raise ValueError(f"scatterer density {rho_s:.3f} exceeds 1; reduce n_s")
    rng = rng_from(seed)
    amplitude = rng.uniform(-0.5, 0.5, size=(grid.nz, grid.nx))
    occupancy = rng.random((grid.nz, grid.nx)) < rho_s
    amplitude = np.where(occupancy, amplitude, 0.0)
    return ScattererField(occupancy=occupancy, amplitude=amplitude, rho_s=rho_s, n_s=n_s)


def region_average_target(labels: np.ndarray, c_map: np.ndarray) -> np.ndarray:
    """Replace every labeled region by its arithmetic-mean sound speed."""
    if labels.shape != c_map.shape:
        raise ValueError("label map and sound-speed map must be congruent")
    target = np.empty_like(c_map, dtype=np.float64)
    for lab in np.unique(labels):
        sel = labels == lab
        target[sel] = c_map[sel].mean(dtype=np.float64)
    return target


def _sample_inclusion(grid: GridSpec, skin_rows: int, rng) -> EllipseParams:
    """Draw an ellipse that fits inside the grid below the skin band."""
    lo = INCLUSION_EXTENT_RANGE[0] / 2.0
    hi = INCLUSION_EXTENT_RANGE[1] / 2.0
    margin = 2 * grid.dx
    z_top = skin_rows * grid.dz
    max_semi = min(grid.width / 2.0, (grid.depth - z_top) / 2.0) - margin
    if max_semi < lo:
        raise ValueError("grid too small to place a 2 mm inclusion below the skin")
    hi = min(hi, max_semi)
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    theta = rng.uniform(0.0, math.pi)
    m = max(a, b)
    xc = rng.uniform(m + margin, grid.width - m - margin)
    yc = rng.uniform(z_top + m + margin, grid.depth - m - margin)
    return EllipseParams(xc=xc, yc=yc, r1=a * a, r2=b * b, theta=theta)


def _sample_gland_speeds(rng) -> tuple[float, float]:
    lo, hi = SPEED_RANGES[Tissue.GLAND_BG]
    while True:
        bg = rng.uniform(lo, hi)
        fg = rng.uniform(lo, hi)
        if abs(fg - bg) >= GLAND_SPEED_MIN_SEPARATION:
            return bg, fg


def compose_phantom(class_kind: str, grid: GridSpec, seed: int,
                    n_s: float = DEFAULT_SCATTERERS_PER_CELL,
                    wavelength_m: float = DEFAULT_WAVELENGTH,
                    scatter_ref_amplitude: float = SCATTER_REF_AMPLITUDE,
                    alpha_coeff: float = 0.75) -> Phantom:
    """Assemble a full phantom for one of the six dataset classes.

    Draw order from the seed is fixed: GRF quantile, GRF field, skin
    thickness, inclusion geometry, scatterers, gland speeds, region speeds,
    lesion contrast sign/magnitude, density ratio.  Same seed and parameters
    give a bit-identical phantom.  ``scatter_ref_amplitude`` rescales the
    overall echogenicity (peak-to-peak m/s of a 0 dB region); lowering it is
    the desk-scale stand-in for the low echo SNR that depth produces at
    paper scale.
    """
    if class_kind not in PHANTOM_CLASSES:
        raise ValueError(f"unknown phantom class {class_kind!r}; expected one of {PHANTOM_CLASSES}")
    rng = rng_from(int(seed))
    meta: dict = {"class": class_kind, "seed": int(seed), "n_s": n_s,
                  "wavelength_m": wavelength_m,
                  "scatter_ref_amplitude": scatter_ref_amplitude,
                  "alpha_coeff": alpha_coeff}

    q = rng.uniform(*GRF_QUANTILE_RANGE)
    grf = gen_grf_gland(grid, GRF_FILTER_SIZE, GRF_SIGMA, q, rng)
    labels = np.full((grid.nz, grid.nx), int(Tissue.GLAND_BG), dtype=np.uint8)
    labels[grf.foreground] = int(Tissue.GLAND_FG)
    meta["grf"] = {"filter_size": list(GRF_FILTER_SIZE), "sigma": GRF_SIGMA, "quantile": q}

    skin_rows = 0
    if "skin" in class_kind:
        thickness = rng.uniform(*SKIN_THICKNESS_RANGE)
        band = gen_skin_band(grid, thickness)
        labels[band] = int(Tissue.SKIN)
        skin_rows = int(band[:, 0].sum())
        meta["skin_thickness_m"] = thickness

    inclusion = None
    if "cyst" in class_kind or "lesion" in class_kind:
        inclusion = _sample_inclusion(grid, skin_rows, rng)
        mask = ellipse_mask(grid, inclusion)
        lab = Tissue.CYST if "cyst" in class_kind else Tissue.LESION
        labels[mask] = int(lab)
        meta["inclusion"] = {
            "xc": inclusion.xc, "yc": inclusion.yc,
            "r1": inclusion.r1, "r2": inclusion.r2, "theta": inclusion.theta,
        }

    scatterers = gen_scatterers(grid, n_s=n_s, wavelength_m=wavelength_m, seed=rng)

    gland_bg_c, gland_fg_c = _sample_gland_speeds(rng)
    mean_speeds = {"gland_bg": gland_bg_c, "gland_fg": gland_fg_c}
    contrast_db = dict(SCATTER_CONTRAST_DB)
    if Tissue.SKIN in (Tissue(v) for v in np.unique(labels)):
        mean_speeds["skin"] = rng.uniform(*SPEED_RANGES[Tissue.SKIN])
    if inclusion is not None and "cyst" in class_kind:
        mean_speeds["cyst"] = rng.uniform(*SPEED_RANGES[Tissue.CYST])
    if inclusion is not None and "lesion" in class_kind:
        mean_speeds["lesion"] = rng.uniform(*SPEED_RANGES[Tissue.LESION])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        mag = rng.uniform(*LESION_CONTRAST_DB_RANGE)
        contrast_db[Tissue.LESION] = sign * mag
        meta["lesion_contrast_db"] = sign * mag

    region_speed = {
        Tissue.GLAND_BG: mean_speeds["gland_bg"],
        Tissue.GLAND_FG: mean_speeds["gland_fg"],
        Tissue.SKIN: mean_speeds.get("skin", 0.0),
        Tissue.CYST: mean_speeds.get("cyst", 0.0),
        Tissue.LESION: mean_speeds.get("lesion", 0.0),
    }

    c = np.zeros((grid.nz, grid.nx), dtype=np.float64)
    scale = np.zeros_like(c)
    for lab in np.unique(labels):
        tissue = Tissue(lab)
        sel = labels == lab
        c[sel] = region_speed[tissue]
        if tissue is Tissue.CYST:
            scale[sel] = 0.0  # anechoic
        else:
            scale[sel] = 10.0 ** (contrast_db[tissue] / 20.0)
    c = c + scatter_ref_amplitude / 2.0 * scale * scatterers.amplitude

    target = region_average_target(labels, c)

    alpha_rho = rng.uniform(*ALPHA_RHO_RANGE)
    rho = c / alpha_rho
    meta["alpha_rho"] = alpha_rho
    meta["mean_speeds"] = dict(mean_speeds)

    props = PropertyMaps(c=c, rho=rho, alpha_coeff=alpha_coeff)
    label_map = TissueLabelMap(labels=labels, class_kind=class_kind)
    return Phantom(grid=grid, labels=label_map, props=props, scatterers=scatterers,
                   target=target, seed=int(seed), mean_speeds=mean_speeds, meta=meta)


def homogeneous_phantom(grid: GridSpec, c0: float, seed: int = 0,
                        n_s: float = DEFAULT_SCATTERERS_PER_CELL,
                        wavelength_m: float = DEFAULT_WAVELENGTH,
                        alpha_rho: float = 1.5, speckle: bool = True) -> Phantom:
    """Uniform-speed fixture phantom, optionally speckled (verification aid)."""
    labels = np.full((grid.nz, grid.nx), int(Tissue.GLAND_BG), dtype=np.uint8)
    if speckle:
        scatterers = gen_scatterers(grid, n_s=n_s, wavelength_m=wavelength_m, seed=seed)
    else:
        scatterers = ScattererField(
            occupancy=np.zeros((grid.nz, grid.nx), dtype=bool),
            amplitude=np.zeros((grid.nz, grid.nx)), rho_s=0.0, n_s=0.0)
    c = c0 + SCATTER_REF_AMPLITUDE / 2.0 * scatterers.amplitude
    target = np.full_like(c, float(np.mean(c)))
    props = PropertyMaps(c=c, rho=c / alpha_rho)
    meta = {"class": "uniform", "seed": int(seed), "c0": c0, "alpha_rho": alpha_rho}
    return Phantom(grid=grid, labels=TissueLabelMap(labels, "uniform"), props=props,
                   scatterers=scatterers, target=target, seed=int(seed),
                   mean_speeds={"uniform": c0}, meta=meta)
