# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
8-bit RGB renders: HSV lifetime composites, phasor plots with the universal
semicircle, segmentation overlays and plain intensity slices.
"""

from dataclasses import dataclass

import numpy as np
from matplotlib.colors import LinearSegmentedColormap, hsv_to_rgb
from PIL import Image

from phasor_forge.exceptions import PaletteTooSmall, ValidationError

# black -> blue -> green -> yellow -> white at evenly spaced stops
PHASOR_STOPS = (
	(0.00, (0.0, 0.0, 0.0)),
	(0.25, (0.0, 0.0, 1.0)),
	(0.50, (0.0, 1.0, 0.0)),
	(0.75, (1.0, 1.0, 0.0)),
	(1.00, (1.0, 1.0, 1.0)),
)
PHASOR_CMAP = LinearSegmentedColormap.from_list("phasor_forge", list(PHASOR_STOPS), N=256)

ARC_COLOR = (128, 128, 128)
CENTROID_COLOR = (0, 255, 255)
CROSS_ARM = 2
HUE_SPAN_DEG = 240.0


@dataclass(frozen=True, eq=False)
class RgbImage:
	pixels: np.ndarray

	def __post_init__(self):
		pixels = np.asarray(self.pixels)
		if pixels.ndim != 3 or pixels.shape[2] != 3 or min(pixels.shape) < 1:
			raise ValidationError(f"RgbImage needs (ny, nx, 3) pixels, got {pixels.shape}")
		if pixels.dtype != np.uint8:
			if np.any(pixels < 0) or np.any(pixels > 255):
				raise ValidationError("RgbImage channels must lie in 0..255")
			pixels = pixels.astype(np.uint8)
		object.__setattr__(self, "pixels", np.ascontiguousarray(pixels))

	@property
	def height(self):
		return self.pixels.shape[0]

	@property
	def width(self):
		return self.pixels.shape[1]

	def to_pil(self):
		return Image.fromarray(self.pixels, "RGB")

	@classmethod
	def from_pil(cls, img):
		return cls(np.asarray(img.convert("RGB"), dtype=np.uint8))


def _to_bytes(rgb):
	return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def _unit_scale(values):
	peak = float(values.max()) if values.size else 0.0
	return values / peak if peak > 0 else np.zeros_like(values)


def composite_hsv(intensity, tau, tau_range_ns, z=0):
	"""
	Lifetime as hue, intensity as brightness for slice `z`.

	Hue runs linearly from 0 deg (red) at the low end of `tau_range_ns` to
	240 deg (blue) at the high end. Pixels outside the lifetime mask are drawn
	without saturation.
	"""
	lo, hi = (float(v) for v in tau_range_ns)
	if not hi > lo:
		raise ValidationError(f"tau_range_ns needs hi > lo, got {tau_range_ns}")
	if intensity.dims != tau.dims:
		raise ValidationError("Intensity and lifetime stacks must share dims")

	frac = np.clip((tau.tau.data[z] - lo) / (hi - lo), 0.0, 1.0)
	hsv = np.stack(
		[
			frac * HUE_SPAN_DEG / 360.0,
			np.where(tau.mask[z], 1.0, 0.0),
			_unit_scale(intensity.data[z]),
		],
		axis=-1,
	)
	return RgbImage(_to_bytes(hsv_to_rgb(hsv)))


def semicircle_bins(hist, samples=None):
	"""Sorted unique (i_g, i_s) bins crossed by the universal semicircle."""
	nb_g, nb_s = hist.bins
	theta = np.linspace(0.0, np.pi, samples or 8 * (nb_g + nb_s))
	g = 0.5 + 0.5 * np.cos(theta)
	s = 0.5 * np.sin(theta)
	cells = {hist.bin_of(a, b) for a, b in zip(g, s)}
	cells.discard(None)
	return sorted(cells)


def render_phasor_plot(hist, overlay_centroids=None, gamma=0.5):
	"""
	One raster pixel per histogram bin, g to the right and s upwards.

	Counts go through (count / max)^gamma onto the phasor colormap. The
	semicircle is drawn on empty bins only; centroids are cyan crosses.
	"""
	if not gamma > 0:
		raise ValidationError("gamma must be positive")
	nb_g, nb_s = hist.bins
	level = _unit_scale(np.asarray(hist.counts, dtype=np.float64)) ** gamma
	# (g, s) -> (row, col) with s growing upwards
	raster = np.flipud(level.T)
	pixels = _to_bytes(PHASOR_CMAP(raster)[..., :3])

	occupied = np.flipud(np.asarray(hist.counts).T) > 0
	for i_g, i_s in semicircle_bins(hist):
		row = nb_s - 1 - i_s
		if not occupied[row, i_g]:
			pixels[row, i_g] = ARC_COLOR

	for g, s in overlay_centroids if overlay_centroids is not None else ():
		cell = hist.bin_of(g, s)
		if cell is None:
			continue
		col, row = cell[0], nb_s - 1 - cell[1]
		for d in range(-CROSS_ARM, CROSS_ARM + 1):
			if 0 <= row + d < nb_s:
				pixels[row + d, col] = CENTROID_COLOR
			if 0 <= col + d < nb_g:
				pixels[row, col + d] = CENTROID_COLOR
	return RgbImage(pixels)


def render_segmentation(seg, z=0, intensity=None):
	"""Label 0 black, label i palette[i - 1], optionally scaled by the slice's normalized intensity."""
	labels = np.asarray(seg.labels[z], dtype=np.int64)
	palette = np.asarray(seg.palette, dtype=np.float64).reshape(-1, 3)
	if labels.max() > len(palette):
		raise PaletteTooSmall(f"Palette has {len(palette)} colors for labels up to {labels.max()}")

	colors = np.vstack([np.zeros((1, 3)), palette])[labels]
	if intensity is not None:
		colors = colors * _unit_scale(intensity.data[z])[..., np.newaxis]
	return RgbImage(np.round(colors).astype(np.uint8))


def render_intensity(intensity, z=0):
	gray = _to_bytes(_unit_scale(intensity.data[z]))
	return RgbImage(np.repeat(gray[..., np.newaxis], 3, axis=-1))
