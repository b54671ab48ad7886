# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
Ground-truth phantoms and the synthetic acquisitions built from them:
instant-FLIM mixer channels, TCSPC decay cubes and FD modulation / phase.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from phasor_forge.exceptions import RegionOutOfBounds, ValidationError
from phasor_forge.flim.core.core import NS, ImageStack, LifetimeMap, ValueKind
from phasor_forge.flim.simulate.rng import Channel, stream
from phasor_forge.utils import map_slices

logger = logging.getLogger(__name__)

MIXER_PHASES = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)
MIXER_CHANNELS = (Channel.V0, Channel.V_HALF_PI, Channel.V_PI, Channel.V_THREE_HALF_PI)


def _z_range(z, nz):
	return (0, nz) if z is None else (int(z[0]), int(z[1]))


@dataclass(frozen=True)
class Box:
	"""Half-open box [y0, y1) x [x0, x1), on slices [z0, z1) or on every slice."""

	y: tuple
	x: tuple
	z: tuple = None

	def check(self, dims):
		nz, ny, nx = dims
		z0, z1 = _z_range(self.z, nz)
		(y0, y1), (x0, x1) = self.y, self.x
		if not (0 <= z0 < z1 <= nz and 0 <= y0 < y1 <= ny and 0 <= x0 < x1 <= nx):
			raise RegionOutOfBounds(f"Box z={self.z} y={self.y} x={self.x} does not fit dims {dims}")

	def mask(self, dims):
		out = np.zeros(dims, dtype=bool)
		z0, z1 = _z_range(self.z, dims[0])
		out[z0:z1, self.y[0] : self.y[1], self.x[0] : self.x[1]] = True
		return out


@dataclass(frozen=True)
class Disc:
	center: tuple
	radius: float
	z: tuple = None

	def check(self, dims):
		nz, ny, nx = dims
		z0, z1 = _z_range(self.z, nz)
		cy, cx = self.center
		r = self.radius
		if not (0 <= z0 < z1 <= nz and r > 0):
			raise RegionOutOfBounds(f"Disc z={self.z} radius={r} does not fit dims {dims}")
		if cy - r < 0 or cx - r < 0 or cy + r > ny - 1 or cx + r > nx - 1:
			raise RegionOutOfBounds(f"Disc at {self.center} radius {r} leaves the {ny}x{nx} frame")

	def mask(self, dims):
		nz, ny, nx = dims
		yy, xx = np.mgrid[0:ny, 0:nx]
		disc = (yy - self.center[0]) ** 2 + (xx - self.center[1]) ** 2 <= self.radius**2
		out = np.zeros(dims, dtype=bool)
		z0, z1 = _z_range(self.z, nz)
		out[z0:z1] = disc
		return out


@dataclass(frozen=True)
class Region:
	shape: object
	tau_ns: float
	intensity: float = 1.0


@dataclass(frozen=True)
class Background:
	tau_ns: float = 0.0
	intensity: float = 0.0


@dataclass(frozen=True)
class Phantom:
	dims: tuple
	regions: list = field(default_factory=list)
	background: Background = field(default_factory=Background)

	def __post_init__(self):
		dims = tuple(int(d) for d in self.dims)
		if len(dims) != 3 or min(dims) < 1:
			raise ValidationError(f"Phantom dims must be three positive integers, got {self.dims}")
		object.__setattr__(self, "dims", dims)

		for item in [self.background, *self.regions]:
			if item.intensity < 0 or item.tau_ns < 0:
				raise ValidationError("Phantom intensities and lifetimes must be non-negative")


@dataclass(frozen=True)
class NoiseSpec:
	photon_scale: float = 100.0
	gaussian_sigma: float = 0.05
	seed: int = 0

	def __post_init__(self):
		if self.photon_scale < 0 or self.gaussian_sigma < 0:
			raise ValidationError("photon_scale and gaussian_sigma must be non-negative")
		if not 0 <= int(self.seed) < 2**64:
			raise ValidationError("seed must fit in an unsigned 64-bit integer")

	@classmethod
	def none(cls, seed=0):
		return cls(0.0, 0.0, seed)

	@property
	def is_silent(self):
		return self.photon_scale == 0 and self.gaussian_sigma == 0


@dataclass(frozen=True, eq=False)
class MixerOutputs:
	v0: ImageStack
	v_half_pi: ImageStack
	v_pi: ImageStack
	v_three_half_pi: ImageStack
	intensity: ImageStack
	omega: float
	gain: float = 1.0

	def __post_init__(self):
		dims = {c.dims for c in self.channels}
		if self.intensity is not None:
			dims.add(self.intensity.dims)
		if len(dims) != 1:
			raise ValidationError(f"Mixer channels do not share dims: {sorted(dims)}")

	@property
	def channels(self):
		return (self.v0, self.v_half_pi, self.v_pi, self.v_three_half_pi)

	@property
	def dims(self):
		return self.v0.dims


@dataclass(frozen=True, eq=False)
class DecayCube:
	"""Per-pixel decay histograms, shape (nz, ny, nx, n_bins), time innermost."""

	data: np.ndarray
	bin_width: float

	def __post_init__(self):
		data = np.array(self.data, dtype=np.float64, order="C", copy=True)
		if data.ndim != 4 or min(data.shape) < 1:
			raise ValidationError(f"DecayCube needs (nz, ny, nx, n_bins), got shape {data.shape}")
		if not self.bin_width > 0:
			raise ValidationError("bin_width must be positive")
		if np.any(data < 0) or not np.all(np.isfinite(data)):
			raise ValidationError("Decay counts must be finite and non-negative")
		data.setflags(write=False)
		object.__setattr__(self, "data", data)

	@property
	def dims(self):
		return self.data.shape[:3]

	@property
	def n_bins(self):
		return self.data.shape[3]

	@property
	def period(self):
		return self.n_bins * self.bin_width

	def scaled(self, factor):
		return DecayCube(self.data * factor, self.bin_width)


def _paint(phantom):
	"""Per-pixel (tau_ns, intensity, region index) with -1 for background."""
	tau = np.full(phantom.dims, float(phantom.background.tau_ns))
	intensity = np.full(phantom.dims, float(phantom.background.intensity))
	index = np.full(phantom.dims, -1, dtype=np.int32)

	for i, region in enumerate(phantom.regions):
		region.shape.check(phantom.dims)
		covered = region.shape.mask(phantom.dims)
		tau[covered] = region.tau_ns
		intensity[covered] = region.intensity
		index[covered] = i

	return tau, intensity, index


def render_phantom(phantom):
	tau, intensity, _ = _paint(phantom)
	return (
		LifetimeMap(ImageStack(tau, ValueKind.LIFETIME_NS)),
		ImageStack(intensity, ValueKind.INTENSITY),
	)


def truth_labels(phantom):
	"""
	Ground-truth class per pixel: 1..K over the distinct lifetimes of lit
	pixels, longest lifetime first; unlit pixels are 0.
	"""
	tau, intensity, _ = _paint(phantom)
	lit = intensity > 0
	labels = np.zeros(phantom.dims, dtype=np.int32)
	for label, value in enumerate(sorted(set(tau[lit].tolist()), reverse=True), start=1):
		labels[lit & (tau == value)] = label
	return labels


def _counting_noise(signal, noise, rng):
	"""
	Poisson(photon_scale * max(signal, 0)) / photon_scale - max(signal, 0).

	Zero mean, variance max(signal, 0) / photon_scale; negative samples carry no shot noise.
	"""
	if noise.photon_scale <= 0:
		return np.zeros_like(signal)
	lit = np.maximum(signal, 0.0)
	return rng.poisson(noise.photon_scale * lit) / noise.photon_scale - lit


def simulate_mixers(phantom, omega, gain=0.5, offset=0.1, noise=None, n_averages=1, threads=1):
	"""
	Instant-FLIM mixer channels for every pixel of the phantom.

	V(theta) = gain * I * m * sin(phi + theta) + offset, with m = 1/sqrt(1 + (omega tau)^2)
	and phi = atan(omega tau). Each of `n_averages` frames draws its own noise;
	the frames are averaged. The intensity channel only carries counting noise.
	"""
	if not omega > 0 or not gain > 0:
		raise ValidationError("omega and gain must be positive")
	if int(n_averages) < 1:
		raise ValidationError("n_averages must be at least 1")

	noise = noise or NoiseSpec.none()
	tau, intensity, _ = _paint(phantom)
	wt = omega * tau * NS
	m = 1.0 / np.sqrt(1.0 + wt * wt)
	phi = np.arctan(wt)
	amplitude = gain * intensity * m

	def one_slice(z):
		clean = [amplitude[z] * np.sin(phi[z] + theta) + offset for theta in MIXER_PHASES]
		if noise.is_silent:
			return [*clean, intensity[z]]

		out = []
		for signal, channel in zip(clean, MIXER_CHANNELS, strict=True):
			acc = np.zeros_like(signal)
			for frame in range(n_averages):
				rng = stream(noise.seed, channel, block=z, frame=frame)
				acc += signal + _counting_noise(signal, noise, rng)
				if noise.gaussian_sigma > 0:
					acc += rng.normal(0.0, noise.gaussian_sigma, signal.shape)
			out.append(acc / n_averages)

		lit = np.zeros_like(intensity[z])
		for frame in range(n_averages):
			rng = stream(noise.seed, Channel.INTENSITY, block=z, frame=frame)
			lit += intensity[z] + _counting_noise(intensity[z], noise, rng)
		out.append(lit / n_averages)
		return out

	slices = map_slices(one_slice, phantom.dims[0], threads)
	stacked = [np.stack([s[i] for s in slices]) for i in range(5)]

	logger.info(
		f"Simulated mixers dims={phantom.dims} gain={gain} offset={offset} "
		f"photon_scale={noise.photon_scale} sigma={noise.gaussian_sigma} frames={n_averages}"
	)
	return MixerOutputs(
		*(ImageStack(v) for v in stacked[:4]),
		intensity=ImageStack(stacked[4], ValueKind.INTENSITY),
		omega=omega,
		gain=gain,
	)


def _folded_bins(tau_s, intensity, edges, period):
	"""Bin integrals of the periodically folded decay I e^(-t/tau) / (1 - e^(-T/tau))."""
	n_bins = len(edges) - 1
	out = np.zeros(tau_s.shape + (n_bins,))
	impulse = tau_s <= 0
	out[impulse, 0] = intensity[impulse]

	live = ~impulse
	if np.any(live):
		t = tau_s[live][:, np.newaxis]
		width = edges[1] - edges[0]
		start = np.exp(-edges[np.newaxis, :-1] / t)
		fraction = -np.expm1(-width / t) / -np.expm1(-period / t)
		out[live] = intensity[live][:, np.newaxis] * start * fraction
	return out


def simulate_decay_cube(phantom, n_bins, period, photons_per_unit_intensity=0.0, seed=0, threads=1):
	"""
	TCSPC histograms over exactly one period of the pulse train.

	With photons_per_unit_intensity > 0 each bin is Poisson sampled and scaled
	back to intensity units.
	"""
	if int(n_bins) < 4 or not period > 0:
		raise ValidationError("simulate_decay_cube needs n_bins >= 4 and a positive period")
	if photons_per_unit_intensity < 0:
		raise ValidationError("photons_per_unit_intensity must be non-negative")

	n_bins = int(n_bins)
	tau, intensity, _ = _paint(phantom)
	edges = np.arange(n_bins + 1) * (period / n_bins)

	def one_slice(z):
		clean = _folded_bins(tau[z] * NS, intensity[z], edges, period)
		if photons_per_unit_intensity <= 0:
			return clean
		rng = stream(seed, Channel.DECAY, block=z)
		return rng.poisson(photons_per_unit_intensity * clean) / photons_per_unit_intensity

	cube = np.stack(map_slices(one_slice, phantom.dims[0], threads))
	logger.info(
		f"Simulated decay cube dims={phantom.dims} bins={n_bins} period={period:g}s"
	)
	return DecayCube(cube, period / n_bins)


def add_noise(stack, noise, channel=Channel.GENERIC, threads=1):
	"""
	Poisson(photon_scale * max(x, 0)) / photon_scale + N(0, sigma).

	photon_scale = 0 skips the Poisson stage. Intensity stacks are clipped
	at zero afterwards.
	"""

	def one_slice(z):
		x = stack.data[z]
		rng = stream(noise.seed, channel, block=z)
		if noise.photon_scale > 0:
			out = rng.poisson(noise.photon_scale * np.maximum(x, 0.0)) / noise.photon_scale
		else:
			out = x.copy()
		if noise.gaussian_sigma > 0:
			out = out + rng.normal(0.0, noise.gaussian_sigma, x.shape)
		return out

	if noise.is_silent:
		return stack
	data = np.stack(map_slices(one_slice, stack.dims[0], threads))
	if stack.value_kind == ValueKind.INTENSITY:
		data = np.maximum(data, 0.0)
	return stack.with_data(data)


def fd_from_phantom(phantom, omega):
	"""Closed-form modulation degree and phase (radians) of every phantom pixel."""
	tau, intensity, _ = _paint(phantom)
	wt = omega * tau * NS
	return (
		ImageStack(1.0 / np.sqrt(1.0 + wt * wt)),
		ImageStack(np.arctan(wt)),
		ImageStack(intensity, ValueKind.INTENSITY),
	)


def three_lifetime_phantom(dims=(8, 128, 128), lifetimes_ns=(0.5, 1.5, 2.5), intensity=1.0):
	"""Three nested rectangles on an unlit background, outermost first."""
	nz, ny, nx = dims
	regions = []
	for (lo, hi), tau_ns in zip(((0.1, 0.9), (0.28, 0.72), (0.42, 0.58)), lifetimes_ns, strict=True):
		box = Box(y=(int(ny * lo), int(math.ceil(ny * hi))), x=(int(nx * lo), int(math.ceil(nx * hi))))
		regions.append(Region(box, tau_ns, intensity))
	return Phantom(dims, regions, Background(0.0, 0.0))


def kidney_phantom(dims=(4, 96, 96), lifetimes_ns=(1.0, 2.0), intensities=(1.0, 0.8), grid=4):
	"""Tubule cross-sections: a grid of discs alternating between a short and a long lifetime."""
	nz, ny, nx = dims
	pitch_y, pitch_x = ny / grid, nx / grid
	radius = min(pitch_y, pitch_x) / 3.0
	regions = []
	for i in range(grid):
		for j in range(grid):
			k = (i + j) % 2
			center = (pitch_y * (i + 0.5), pitch_x * (j + 0.5))
			regions.append(Region(Disc(center, radius), lifetimes_ns[k], intensities[k]))
	return Phantom(dims, regions, Background(0.0, 0.0))


def random_phantom(dims, seed=0, index=0, n_regions=4, tau_range_ns=(0.3, 4.0)):
	"""Lit background with a few random boxes and discs; `index` picks an independent layout."""
	nz, ny, nx = dims
	if min(ny, nx) < 4:
		raise ValidationError("random_phantom needs slices of at least 4x4 pixels")
	rng = stream(seed, Channel.PHANTOM, block=index)
	regions = []
	for _ in range(n_regions):
		tau_ns = float(rng.uniform(*tau_range_ns))
		intensity = float(rng.uniform(0.5, 1.5))
		if rng.random() < 0.5:
			y0, x0 = int(rng.integers(0, ny - 1)), int(rng.integers(0, nx - 1))
			y1, x1 = int(rng.integers(y0 + 1, ny + 1)), int(rng.integers(x0 + 1, nx + 1))
			shape = Box(y=(y0, y1), x=(x0, x1))
		else:
			radius = float(rng.uniform(1.0, max(1.5, min(ny, nx) / 4)))
			radius = min(radius, (min(ny, nx) - 1) / 2)
			cy = float(rng.uniform(radius, ny - 1 - radius))
			cx = float(rng.uniform(radius, nx - 1 - radius))
			shape = Disc((cy, cx), radius)
		regions.append(Region(shape, tau_ns, intensity))
	background = Background(float(rng.uniform(*tau_range_ns)), float(rng.uniform(0.3, 0.8)))
	return Phantom(dims, regions, background)


PRESETS = {
	"three_lifetime": three_lifetime_phantom,
	"kidney": kidney_phantom,
}

REGION_KEYS = {"box", "disc", "tau_ns", "intensity"}
DISC_KEYS = {"center", "radius", "z"}
BACKGROUND_KEYS = {"tau_ns", "intensity"}


def _check_keys(doc, known, path):
	if not isinstance(doc, dict):
		raise ValidationError(f"{path} must be an object")
	unknown = set(doc) - known
	if unknown:
		raise ValidationError(f"Unknown key(s) {sorted(unknown)} in {path}")


def _is_number(value, kind=int | float):
	return isinstance(value, kind) and not isinstance(value, bool)


def _number(doc, key, path, default=None):
	value = doc.get(key, default)
	if not _is_number(value):
		raise ValidationError(f"{path}.{key} must be a number, got {value!r}")
	return float(value)


def _region_from_dict(doc, path):
	_check_keys(doc, REGION_KEYS, path)
	if ("box" in doc) == ("disc" in doc):
		raise ValidationError(f"{path} needs exactly one of 'box' or 'disc'")
	if "tau_ns" not in doc:
		raise ValidationError(f"{path}.tau_ns is required")

	if "box" in doc:
		box = doc["box"]
		if not isinstance(box, list | tuple) or not all(_is_number(v, int) for v in box):
			raise ValidationError(f"{path}.box must be a list of integers")
		if len(box) == 4:
			shape = Box(y=(box[0], box[1]), x=(box[2], box[3]))
		elif len(box) == 6:
			shape = Box(y=(box[2], box[3]), x=(box[4], box[5]), z=(box[0], box[1]))
		else:
			raise ValidationError(f"{path}.box must be [y0, y1, x0, x1] or [z0, z1, y0, y1, x0, x1]")
	else:
		disc = doc["disc"]
		_check_keys(disc, DISC_KEYS, f"{path}.disc")
		center = disc.get("center")
		if not isinstance(center, list | tuple) or len(center) != 2 or not all(map(_is_number, center)):
			raise ValidationError(f"{path}.disc.center must be [y, x]")
		z = disc.get("z")
		if z is not None and (
			not isinstance(z, list | tuple) or len(z) != 2 or not all(_is_number(v, int) for v in z)
		):
			raise ValidationError(f"{path}.disc.z must be [z0, z1]")
		radius = _number(disc, "radius", f"{path}.disc")
		shape = Disc((float(center[0]), float(center[1])), radius, tuple(z) if z else None)

	return Region(shape, _number(doc, "tau_ns", path), _number(doc, "intensity", path, 1.0))


def phantom_from_dict(doc):
	"""Build a Phantom from the `phantom` section of a pipeline config."""
	dims = tuple(doc.get("dims") or (8, 128, 128))
	preset = doc.get("preset")
	regions = []
	background_doc = doc.get("background") or {}
	_check_keys(background_doc, BACKGROUND_KEYS, "phantom.background")
	background = Background(
		_number(background_doc, "tau_ns", "phantom.background", 0.0),
		_number(background_doc, "intensity", "phantom.background", 0.0),
	)

	if preset:
		if preset not in PRESETS:
			raise ValidationError(f"Unknown phantom preset '{preset}', choose from {sorted(PRESETS)}")
		base = PRESETS[preset](dims)
		regions.extend(base.regions)
		if not doc.get("background"):
			background = base.background

	for i, region in enumerate(doc.get("regions") or []):
		regions.append(_region_from_dict(region, f"phantom.regions[{i}]"))

	phantom = Phantom(dims, regions, background)
	for region in phantom.regions:
		region.shape.check(phantom.dims)
	return phantom
