# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from phasor_forge.exceptions import ModelShapeMismatch, ValidationError
from phasor_forge.flim.core.core import ImageStack, denormalize_stack, normalize_stack
from phasor_forge.flim.denoise.network import DenoiserModel, check_layers
from phasor_forge.utils import map_slices

logger = logging.getLogger(__name__)

FILTER_MODES = ("2d", "3d")


def _check_filter_args(passes, window, mode):
	if int(passes) < 1:
		raise ValidationError("passes must be at least 1")
	if int(window) < 3 or int(window) % 2 == 0:
		raise ValidationError(f"window must be an odd integer >= 3, got {window}")
	if mode not in FILTER_MODES:
		raise ValidationError(f"mode must be one of {FILTER_MODES}, got '{mode}'")


def _run_filter(flt, stack, passes, window, mode, threads):
	window = int(window)
	if mode == "3d":
		data = stack.data
		for _ in range(int(passes)):
			data = flt(data, size=window, mode="nearest")
		return stack.with_data(data)

	def one_slice(z):
		plane = stack.data[z]
		for _ in range(int(passes)):
			plane = flt(plane, size=window, mode="nearest")
		return plane

	return stack.with_data(np.stack(map_slices(one_slice, stack.dims[0], threads)))


def median_filter(stack, passes=1, window=3, mode="2d", threads=1):
	"""
	`passes` sequential window x window median filters on every slice, borders
	replicated. mode="3d" uses a window^3 neighbourhood across slices instead.
	"""
	_check_filter_args(passes, window, mode)
	started = time.perf_counter()
	out = _run_filter(ndimage.median_filter, stack, passes, window, mode, threads)
	logger.info(
		f"Median filter x{passes} ({window}, {mode}) on {stack.dims} in {time.perf_counter() - started:.3f}s"
	)
	return out


def mean_filter(stack, passes=1, window=3, mode="2d", threads=1):
	"""Box-filter baseline with the same pass and border rules as median_filter."""
	_check_filter_args(passes, window, mode)
	return _run_filter(ndimage.uniform_filter, stack, passes, window, mode, threads)


def cnn_denoise(stack, model, threads=1, mask=None):
	"""
	Normalize each slice to [0, 1] over its masked-in pixels, run the model and
	map back with that range. Masked-out pixels keep their input values; a
	slice with nothing masked in is normalized as a whole.
	"""
	check_layers(model.layers, ModelShapeMismatch)
	mask = None if mask is None else np.asarray(mask, dtype=bool)

	def one_slice(z):
		keep = None if mask is None or not mask[z].any() else mask[z]
		plane, rec = normalize_stack(ImageStack(stack.data[z]), None if keep is None else keep[np.newaxis])
		out = model.denoise(plane.data[np.newaxis])
		out = denormalize_stack(ImageStack(out[0]), rec).data[0]
		return out if keep is None else np.where(keep, out, stack.data[z])

	return stack.with_data(np.stack(map_slices(one_slice, stack.dims[0], threads)))


@dataclass(frozen=True)
class Median:
	passes: int = 2
	window: int = 3
	mode: str = "2d"

	# windows span masked-out pixels too, so the mask is not used
	def __call__(self, stack, threads=1, mask=None):
		return median_filter(stack, self.passes, self.window, self.mode, threads)


@dataclass(frozen=True)
class Mean:
	passes: int = 1
	window: int = 3
	mode: str = "2d"

	def __call__(self, stack, threads=1, mask=None):
		return mean_filter(stack, self.passes, self.window, self.mode, threads)


@dataclass(frozen=True, eq=False)
class Cnn:
	model: DenoiserModel

	def __call__(self, stack, threads=1, mask=None):
		return cnn_denoise(stack, self.model, threads, mask)


def denoise_phasor(field, method, threads=1):
	"""Denoise G and S independently; mask and omega carry over and the mask is offered to the method."""
	return field.replace(g=method(field.g, threads, field.mask), s=method(field.s, threads, field.mask))
