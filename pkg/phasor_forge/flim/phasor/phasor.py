# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

import logging
import math
from dataclasses import dataclass

import numpy as np

from phasor_forge.exceptions import ValidationError, ZeroReference
from phasor_forge.flim.core.core import (
	EPS_G,
	NS,
	ImageStack,
	LifetimeMap,
	PhasorField,
	ValueKind,
	phasor_from_lifetime,
)
from phasor_forge.utils import map_slices

logger = logging.getLogger(__name__)

DEFAULT_BINS = (256, 154)
DEFAULT_BOUNDS = (0.0, 1.0, 0.0, 0.6)
INTENSITY_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class PhasorHistogram:
	counts: np.ndarray
	bounds: tuple
	overflow: float = 0
	weighted: bool = False

	@property
	def bins(self):
		return self.counts.shape

	@property
	def bin_size(self):
		g_min, g_max, s_min, s_max = self.bounds
		return (g_max - g_min) / self.bins[0], (s_max - s_min) / self.bins[1]

	def bin_of(self, g, s):
		"""(i_g, i_s) bin index of a phasor point, or None outside the bounds."""
		g_min, g_max, s_min, s_max = self.bounds
		if not (g_min <= g <= g_max and s_min <= s <= s_max):
			return None
		dg, ds = self.bin_size
		return (
			min(int((g - g_min) / dg), self.bins[0] - 1),
			min(int((s - s_min) / ds), self.bins[1] - 1),
		)


@dataclass(frozen=True)
class CalibrationRef:
	"""Measured phasor of a reference fluorophore with known lifetime (seconds)."""

	tau_ref: float
	measured_g: float
	measured_s: float

	@property
	def magnitude(self):
		return math.hypot(self.measured_g, self.measured_s)

	def factor(self, omega):
		"""Complex rotation + scale taking the measured point onto the semicircle."""
		if self.magnitude < 1e-12:
			raise ZeroReference(f"Reference phasor magnitude {self.magnitude:.3g} is too small to calibrate")
		g, s = phasor_from_lifetime(self.tau_ref, omega)
		return complex(g, s) / complex(self.measured_g, self.measured_s)


def intensity_mask(intensity, threshold=INTENSITY_THRESHOLD):
	"""Pixels brighter than `threshold` times the brightest pixel."""
	peak = float(intensity.data.max())
	if peak <= 0:
		return np.zeros(intensity.dims, dtype=bool)
	return (intensity.data >= threshold * peak) & (intensity.data > 0)


def _calibrate(g, s, cal, omega):
	z = cal.factor(omega) * (g + 1j * s)
	return z.real, z.imag


def phasor_from_mixers(m, cal=None, threshold=INTENSITY_THRESHOLD):
	"""
	G/S from the complementary mixer differences.

	S_raw = V(0) - V(pi), G_raw = V(pi/2) - V(3pi/2). With an intensity
	channel the raw values are divided by 2 gain I and dim pixels are masked;
	`cal` then rotates and scales onto the reference lifetime.
	"""
	s_raw = m.v0.data - m.v_pi.data
	g_raw = m.v_half_pi.data - m.v_three_half_pi.data

	if m.intensity is not None:
		mask = intensity_mask(m.intensity, threshold)
		norm = np.where(mask, 2.0 * m.gain * m.intensity.data, 1.0)
		g = np.where(mask, g_raw / norm, 0.0)
		s = np.where(mask, s_raw / norm, 0.0)
	else:
		mask = np.ones(m.dims, dtype=bool)
		g, s = g_raw, s_raw

	if cal is not None:
		g, s = _calibrate(g, s, cal, m.omega)
		g, s = np.where(mask, g, 0.0), np.where(mask, s, 0.0)

	logger.info(f"Mixer phasor dims={m.dims} masked_in={int(mask.sum())}")
	return PhasorField(ImageStack(g, ValueKind.G), ImageStack(s, ValueKind.S), m.omega, mask)


def measure_reference(field, tau_ref, mask=None):
	"""CalibrationRef from the mean phasor of reference pixels in an uncalibrated field."""
	points = field.points(mask)
	if len(points) == 0:
		raise ValidationError("No reference pixels to calibrate from")
	g, s = points.mean(axis=0)
	return CalibrationRef(tau_ref, float(g), float(s))


def phasor_from_decay(cube, omega, harmonic=1, threads=1):
	"""Midpoint-rule cosine/sine sums of each pixel's decay, normalized by its total counts."""
	if int(harmonic) < 1:
		raise ValidationError("harmonic must be a positive integer")
	turns = omega * harmonic * cube.period / (2.0 * math.pi)
	if abs(turns - round(turns)) > 1e-6 or round(turns) < 1:
		raise ValidationError(
			f"omega * harmonic covers {turns:.6f} turns of the cube period; it must be a whole number"
		)

	t_mid = (np.arange(cube.n_bins) + 0.5) * cube.bin_width
	cos_k = np.cos(harmonic * omega * t_mid)
	sin_k = np.sin(harmonic * omega * t_mid)

	def one_slice(z):
		decay = cube.data[z]
		total = decay.sum(axis=-1)
		valid = total > 0
		safe = np.where(valid, total, 1.0)
		return (
			np.where(valid, decay @ cos_k / safe, 0.0),
			np.where(valid, decay @ sin_k / safe, 0.0),
			valid,
		)

	slices = map_slices(one_slice, cube.dims[0], threads)
	g, s, mask = (np.stack([x[i] for x in slices]) for i in range(3))
	return PhasorField(ImageStack(g, ValueKind.G), ImageStack(s, ValueKind.S), omega, mask)


def phasor_from_fd(mod_degree, phase, omega):
	"""g = m cos(phi), s = m sin(phi)."""
	if mod_degree.dims != phase.dims:
		raise ValidationError("Modulation and phase stacks must share dims")
	if np.any(mod_degree.data < 0):
		raise ValidationError("Modulation degree must be non-negative")
	m, phi = mod_degree.data, phase.data
	return PhasorField(
		ImageStack(m * np.cos(phi), ValueKind.G),
		ImageStack(m * np.sin(phi), ValueKind.S),
		omega,
	)


def lifetime_map(field, eps_g=EPS_G):
	"""
	Phase lifetime s / (omega g) in nanoseconds.

	Pixels with |g| < eps_g or a negative lifetime are masked out and hold 0.
	"""
	g, s = field.g.data, field.s.data
	mask = field.mask & (np.abs(g) >= eps_g)
	tau = np.zeros(field.dims)
	tau[mask] = s[mask] / (field.omega * g[mask]) / NS
	mask &= tau >= 0
	tau[~mask] = 0.0
	return LifetimeMap(ImageStack(tau, ValueKind.LIFETIME_NS), mask)


def phasor_histogram(field, bins=DEFAULT_BINS, bounds=DEFAULT_BOUNDS, weights=None, threads=1):
	"""
	2D histogram of masked-in phasor points.

	Points outside `bounds` go to the overflow tally, so counts plus overflow
	equals the masked-in total (or total weight).
	"""
	nb_g, nb_s = (int(b) for b in bins)
	g_min, g_max, s_min, s_max = (float(b) for b in bounds)
	if nb_g < 1 or nb_s < 1:
		raise ValidationError("Histogram needs at least one bin per axis")
	if not (g_max > g_min and s_max > s_min):
		raise ValidationError(f"Degenerate histogram bounds {bounds}")
	if weights is not None and weights.dims != field.dims:
		raise ValidationError("Histogram weights must share the field dims")

	def one_slice(z):
		mask = field.mask[z]
		g, s = field.g.data[z][mask], field.s.data[z][mask]
		w = None if weights is None else weights.data[z][mask]
		counts, _, _ = np.histogram2d(g, s, bins=(nb_g, nb_s), range=((g_min, g_max), (s_min, s_max)), weights=w)
		inside = (g >= g_min) & (g <= g_max) & (s >= s_min) & (s <= s_max)
		overflow = (~inside).sum() if w is None else w[~inside].sum()
		return counts, overflow

	parts = map_slices(one_slice, field.dims[0], threads)
	counts = np.zeros((nb_g, nb_s))
	overflow = 0
	for part, extra in parts:
		counts += part
		overflow += extra

	if weights is None:
		counts = counts.astype(np.int64)
		overflow = int(overflow)
	else:
		overflow = float(overflow)
	return PhasorHistogram(counts, (g_min, g_max, s_min, s_max), overflow, weights is not None)


def centroid_lifetimes(g, s, omega, eps_g=EPS_G):
	"""
	Phase and modulation lifetimes (ns) of one phasor point.

	The two agree for single-exponential species; NaN where undefined.
	"""
	tau_phase = s / (omega * g) / NS if abs(g) >= eps_g else math.nan
	m2 = g * g + s * s
	tau_mod = math.sqrt(1.0 / m2 - 1.0) / omega / NS if 0 < m2 <= 1 else math.nan
	return tau_phase, tau_mod
