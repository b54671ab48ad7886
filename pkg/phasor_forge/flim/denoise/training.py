# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from phasor_forge.exceptions import DivergedLoss, ValidationError
from phasor_forge.flim.core.core import DEFAULT_OMEGA, ImageStack, normalize_stack
from phasor_forge.flim.denoise.network import forward, init_model, loss_and_grads, training_target
from phasor_forge.flim.phasor.phasor import phasor_from_mixers
from phasor_forge.flim.simulate.rng import Channel, stream
from phasor_forge.flim.simulate.simulate import NoiseSpec, random_phantom, simulate_mixers
from phasor_forge.utils import map_slices

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
	epochs: int = 20
	batch_size: int = 8
	patch_size: int = 40
	learning_rate: float = 1e-3
	momentum: float = 0.9
	seed: int = 0
	depth: int = 7
	channels: int = 32
	residual: bool = True
	# 0 picks enough steps to cover every training slice about once
	steps_per_epoch: int = 0
	validation_fraction: float = 0.25

	def validate(self, ny=None, nx=None):
		for name in ("epochs", "batch_size", "patch_size", "depth", "channels"):
			if int(getattr(self, name)) < 1:
				raise ValidationError(f"train.{name} must be a positive integer")
		if self.learning_rate < 0:
			raise ValidationError("train.learning_rate must be non-negative")
		if not 0 <= self.momentum < 1:
			raise ValidationError("train.momentum must lie in [0, 1)")
		if not 0 <= self.validation_fraction < 1:
			raise ValidationError("train.validation_fraction must lie in [0, 1)")
		if ny is not None and self.patch_size > min(ny, nx):
			raise ValidationError(f"train.patch_size {self.patch_size} exceeds the {ny}x{nx} training slices")


@dataclass
class FitResult:
	model: object
	best_epoch: int
	history: list = field(default_factory=list)


def _normalized_slices(pairs):
	"""Per-slice [0, 1] (noisy, clean) planes, both mapped with the noisy slice's range."""
	noisy, clean = [], []
	for n, (x, y) in enumerate(pairs):
		if x.dims != y.dims:
			raise ValidationError(f"Training pair {n} has mismatched dims {x.dims} vs {y.dims}")
		for z in range(x.dims[0]):
			xs, rec = normalize_stack(ImageStack(x.slice(z)))
			noisy.append(xs.data[0])
			clean.append((y.slice(z) - rec.lo) / (rec.hi - rec.lo))
	return noisy, clean


def _set_loss(model, noisy, clean, index, threads):
	def one(i):
		x = noisy[i][np.newaxis, np.newaxis]
		diff = forward(model, x) - training_target(model, x, clean[i][np.newaxis, np.newaxis])
		return float(np.sum(diff * diff)), diff.size

	parts = map_slices(lambda k: one(index[k]), len(index), threads)
	return sum(p[0] for p in parts) / sum(p[1] for p in parts)


def _batch_grads(model, x, y, threads):
	"""Batch loss and gradients, summed over fixed contiguous chunks in chunk order."""
	norm = x.size
	chunks = np.array_split(np.arange(len(x)), min(max(1, int(threads)), len(x)))

	def one(c):
		return loss_and_grads(model, x[chunks[c]], y[chunks[c]], norm)

	parts = map_slices(one, len(chunks), threads)
	loss = sum(p[0] for p in parts)
	grads = parts[0][1]
	for _, extra in parts[1:]:
		grads = [(dw + ew, db + eb) for (dw, db), (ew, eb) in zip(grads, extra)]
	return loss, grads


def fit_denoiser(pairs, cfg=None, threads=1):
	"""
	Train a residual denoiser on (noisy, clean) stack pairs with SGD and momentum
	over random patches. The model with the lowest validation loss is kept; with
	a single slice the training set doubles as validation.
	"""
	cfg = cfg or TrainConfig()
	if not pairs:
		raise ValidationError("train_denoiser needs at least one (noisy, clean) pair")
	noisy, clean = _normalized_slices(pairs)
	ny = min(p.shape[0] for p in noisy)
	nx = min(p.shape[1] for p in noisy)
	cfg.validate(ny, nx)

	order = stream(cfg.seed, Channel.TRAIN, block=1).permutation(len(noisy))
	n_val = min(int(round(cfg.validation_fraction * len(noisy))), len(noisy) - 1)
	val_idx, train_idx = order[:n_val], order[n_val:]
	if n_val == 0:
		val_idx = train_idx

	model = init_model(cfg.depth, cfg.channels, cfg.seed, cfg.residual).copy()
	velocity = [(np.zeros_like(layer.weights), np.zeros_like(layer.bias)) for layer in model.layers]
	steps = cfg.steps_per_epoch or max(
		1, math.ceil(len(train_idx) * max(1, (ny * nx) // cfg.patch_size**2) / cfg.batch_size)
	)
	rng = stream(cfg.seed, Channel.TRAIN, block=2)
	p = cfg.patch_size

	def evaluate(epoch, started):
		train_loss = _set_loss(model, noisy, clean, train_idx, threads)
		val_loss = _set_loss(model, noisy, clean, val_idx, threads)
		if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
			raise DivergedLoss(f"Loss became non-finite at epoch {epoch}")
		entry = {
			"epoch": epoch,
			"train_loss": train_loss,
			"val_loss": val_loss,
			"seconds": time.perf_counter() - started,
		}
		logger.debug(f"epoch {epoch} train={train_loss:.6g} val={val_loss:.6g}")
		return entry

	history = [evaluate(0, time.perf_counter())]
	best, best_epoch = model.copy(), 0

	for epoch in range(1, cfg.epochs + 1):
		started = time.perf_counter()
		for _ in range(steps):
			picks = train_idx[rng.integers(0, len(train_idx), cfg.batch_size)]
			x = np.empty((cfg.batch_size, 1, p, p))
			y = np.empty_like(x)
			for b, i in enumerate(picks):
				h, w = noisy[i].shape
				y0, x0 = int(rng.integers(0, h - p + 1)), int(rng.integers(0, w - p + 1))
				x[b, 0] = noisy[i][y0 : y0 + p, x0 : x0 + p]
				y[b, 0] = clean[i][y0 : y0 + p, x0 : x0 + p]

			loss, grads = _batch_grads(model, x, y, threads)
			if not math.isfinite(loss):
				raise DivergedLoss(f"Batch loss became non-finite at epoch {epoch}")
			for layer, (vw, vb), (dw, db) in zip(model.layers, velocity, grads):
				vw *= cfg.momentum
				vw -= cfg.learning_rate * dw
				vb *= cfg.momentum
				vb -= cfg.learning_rate * db
				layer.weights += vw
				layer.bias += vb

		history.append(evaluate(epoch, started))
		if history[-1]["val_loss"] < history[best_epoch]["val_loss"]:
			best, best_epoch = model.copy(), epoch

	logger.info(
		f"Trained {cfg.depth}x{cfg.channels} denoiser for {cfg.epochs} epochs, "
		f"best epoch {best_epoch} val_loss={history[best_epoch]['val_loss']:.6g}"
	)
	return FitResult(best.as_float32(), best_epoch, history)


def train_denoiser(pairs, cfg=None, threads=1):
	return fit_denoiser(pairs, cfg, threads).model


def synthetic_pairs(count, dims=(1, 64, 64), noise=None, omega=None, seed=0, gain=0.5, offset=0.1):
	"""
	(noisy, clean) G and S stacks from random phantoms pushed through the
	mixer path with and without noise; two pairs per phantom.
	"""
	noise = noise or NoiseSpec()
	omega = omega or DEFAULT_OMEGA
	pairs = []
	for i in range(count):
		phantom = random_phantom(dims, seed, index=i)
		clean = phasor_from_mixers(simulate_mixers(phantom, omega, gain, offset))
		spec = NoiseSpec(noise.photon_scale, noise.gaussian_sigma, (noise.seed + i) % 2**64)
		noisy = phasor_from_mixers(simulate_mixers(phantom, omega, gain, offset, noise=spec))
		pairs.append((noisy.g, clean.g))
		pairs.append((noisy.s, clean.s))
	return pairs
