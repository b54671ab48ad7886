# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
Shared pixel containers and the closed-form phasor / lifetime relations.

Lifetimes travel in nanoseconds between modules and are converted to
seconds only where they meet omega.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from phasor_forge.exceptions import ConstantStack, DegeneratePhasor, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_F_MOD = 80e6
NS = 1e-9
EPS_G = 1e-12
CONSTANT_RANGE = 1e-20


def omega_from_frequency(f_mod=DEFAULT_F_MOD):
	return 2.0 * math.pi * float(f_mod)


DEFAULT_OMEGA = omega_from_frequency(DEFAULT_F_MOD)


class ValueKind(str, Enum):
	INTENSITY = "intensity"
	G = "g"
	S = "s"
	LIFETIME_NS = "lifetime_ns"
	GENERIC = "generic"


@dataclass(frozen=True, eq=False)
class ImageStack:
	"""
	(nz, ny, nx) scalar field, z outermost and x innermost.

	Values are held as float64 in memory and written as float32 by the
	FTS store. The array is read-only once the stack exists.
	"""

	data: np.ndarray
	value_kind: ValueKind = ValueKind.GENERIC

	def __post_init__(self):
		data = np.array(self.data, dtype=np.float64, order="C", copy=True)
		if data.ndim == 2:
			data = data[np.newaxis]
		if data.ndim != 3 or min(data.shape) < 1:
			raise ValidationError(f"ImageStack needs (nz, ny, nx) with positive dims, got shape {data.shape}")
		if not np.all(np.isfinite(data)):
			raise ValidationError("ImageStack values must be finite")

		kind = ValueKind(self.value_kind)
		if kind == ValueKind.INTENSITY and np.any(data < 0):
			raise ValidationError("Intensity stacks cannot hold negative values")

		data.setflags(write=False)
		object.__setattr__(self, "data", data)
		object.__setattr__(self, "value_kind", kind)

	@property
	def dims(self):
		return self.data.shape

	@property
	def size(self):
		return self.data.size

	def slice(self, z):
		return self.data[z]

	def with_data(self, data, value_kind=None):
		return ImageStack(data, value_kind or self.value_kind)


@dataclass(frozen=True, eq=False)
class PhasorField:
	g: ImageStack
	s: ImageStack
	omega: float = DEFAULT_OMEGA
	mask: np.ndarray = None

	def __post_init__(self):
		if self.g.dims != self.s.dims:
			raise ValidationError(f"G and S dims differ: {self.g.dims} vs {self.s.dims}")
		if not self.omega > 0:
			raise ValidationError("omega must be positive")

		mask = np.ones(self.g.dims, dtype=bool) if self.mask is None else np.array(self.mask, dtype=bool)
		if mask.shape != self.g.dims:
			raise ValidationError(f"Mask dims {mask.shape} do not match field dims {self.g.dims}")
		mask.setflags(write=False)
		object.__setattr__(self, "mask", mask)
		object.__setattr__(self, "omega", float(self.omega))

	@property
	def dims(self):
		return self.g.dims

	@property
	def f_mod(self):
		return self.omega / (2.0 * math.pi)

	@property
	def count(self):
		return int(self.mask.sum())

	def points(self, mask=None):
		"""(N, 2) array of masked-in (g, s) in row-major pixel order."""
		mask = self.mask if mask is None else (self.mask & mask)
		return np.column_stack([self.g.data[mask], self.s.data[mask]])

	def replace(self, g=None, s=None, mask=None):
		return PhasorField(
			self.g if g is None else g,
			self.s if s is None else s,
			self.omega,
			self.mask if mask is None else mask,
		)


@dataclass(frozen=True, eq=False)
class LifetimeMap:
	tau: ImageStack
	mask: np.ndarray = None

	def __post_init__(self):
		mask = np.ones(self.tau.dims, dtype=bool) if self.mask is None else np.array(self.mask, dtype=bool)
		if mask.shape != self.tau.dims:
			raise ValidationError("Lifetime mask dims do not match tau dims")
		if np.any(self.tau.data[mask] < 0):
			raise ValidationError("Masked-in lifetimes must be non-negative")
		mask.setflags(write=False)
		object.__setattr__(self, "mask", mask)

	@property
	def dims(self):
		return self.tau.dims


@dataclass(frozen=True)
class NormalizationRecord:
	lo: float
	hi: float
	constant: bool = field(default=False, compare=False)

	def __post_init__(self):
		if not self.hi > self.lo:
			raise ValidationError(f"Normalization range needs hi > lo, got ({self.lo}, {self.hi})")


def lifetime_from_phasor(g, s, omega, eps_g=EPS_G):
	"""tau in seconds from one phasor point, s / (omega g)."""
	if not omega > 0:
		raise ValidationError("omega must be positive")
	if abs(g) < eps_g:
		raise DegeneratePhasor(f"|g| = {abs(g):.3g} is below {eps_g:g}")
	return s / (omega * g)


def phasor_from_lifetime(tau, omega):
	"""
	Single-exponential phasor on the universal semicircle.

	`tau` is in seconds and may be a scalar or an array.
	"""
	if not omega > 0:
		raise ValidationError("omega must be positive")
	tau = np.asarray(tau, dtype=np.float64)
	if np.any(tau < 0):
		raise ValidationError("Lifetimes must be non-negative")

	wt = omega * tau
	d = 1.0 + wt * wt
	g, s = 1.0 / d, wt / d
	if g.ndim == 0:
		return float(g), float(s)
	return g, s


def normalize_stack(stack, mask=None, strict=False):
	"""
	Min-max map of a stack onto [0, 1] using the masked-in range.

	A constant stack maps to zeros with record (lo, lo + 1); with
	strict=True it raises ConstantStack instead.
	"""
	values = stack.data if mask is None else stack.data[np.asarray(mask, dtype=bool)]
	if values.size == 0:
		raise ValidationError("Cannot normalize a stack with no masked-in pixels")

	lo, hi = float(values.min()), float(values.max())
	if hi - lo < CONSTANT_RANGE:
		if strict:
			raise ConstantStack(f"Stack is constant at {lo:g}")
		logger.warning(f"Constant stack at {lo:g}, normalized to zeros")
		return stack.with_data(np.zeros(stack.dims)), NormalizationRecord(lo, lo + 1.0, constant=True)

	return stack.with_data((stack.data - lo) / (hi - lo)), NormalizationRecord(lo, hi)


def denormalize_stack(stack, rec):
	return stack.with_data(stack.data * (rec.hi - rec.lo) + rec.lo)
