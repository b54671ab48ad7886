# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
Residual plain-convolution denoiser in numpy.

Activations are (batch, channels, ny, nx). Every layer is a 3x3 convolution
over a replicate-padded input so spatial dims never change; ReLU follows all
but the last layer. A residual model outputs input - prediction.
"""

import math
from dataclasses import dataclass

import numpy as np

from phasor_forge.exceptions import ModelShapeMismatch
from phasor_forge.flim.simulate.rng import Channel, stream

KERNEL = 3
PAD = KERNEL // 2


def _f32(a):
	return a.astype(np.float32).astype(np.float64)


@dataclass(eq=False)
class ConvLayer:
	weights: np.ndarray
	bias: np.ndarray

	def __post_init__(self):
		self.weights = np.array(self.weights, dtype=np.float64)
		self.bias = np.array(self.bias, dtype=np.float64)

	@property
	def out_channels(self):
		return self.weights.shape[0]

	@property
	def in_channels(self):
		return self.weights.shape[1]

	def copy(self):
		return ConvLayer(self.weights.copy(), self.bias.copy())


@dataclass(eq=False)
class DenoiserModel:
	layers: list
	residual: bool = True

	def __post_init__(self):
		check_layers(self.layers, ModelShapeMismatch)

	@property
	def depth(self):
		return len(self.layers)

	def copy(self):
		return DenoiserModel([layer.copy() for layer in self.layers], self.residual)

	def as_float32(self):
		"""Copy with every parameter rounded to float32, the precision the weight file holds."""
		layers = [ConvLayer(_f32(layer.weights), _f32(layer.bias)) for layer in self.layers]
		return DenoiserModel(layers, self.residual)

	def parameters(self):
		return [p for layer in self.layers for p in (layer.weights, layer.bias)]

	def denoise(self, x):
		"""Denoised (batch, 1, ny, nx) array."""
		y = forward(self, x)
		return x - y if self.residual else y


def check_layers(layers, exc):
	if not layers:
		raise exc("A denoiser needs at least one layer")
	for n, layer in enumerate(layers):
		w, b = layer.weights, layer.bias
		if w.ndim != 4 or w.shape[2:] != (KERNEL, KERNEL):
			raise exc(f"Layer {n} weights must be (out, in, {KERNEL}, {KERNEL}), got {w.shape}")
		if b.shape != (w.shape[0],):
			raise exc(f"Layer {n} bias shape {b.shape} does not match {w.shape[0]} output channels")
		expected = 1 if n == 0 else layers[n - 1].out_channels
		if layer.in_channels != expected:
			raise exc(f"Layer {n} takes {layer.in_channels} channels, previous layer gives {expected}")
	if layers[-1].out_channels != 1:
		raise exc(f"Last layer must output 1 channel, got {layers[-1].out_channels}")


def init_model(depth=7, channels=32, seed=0, residual=True):
	"""He-uniform weights, zero biases, drawn from the training stream of `seed`."""
	if depth < 1 or channels < 1:
		raise ModelShapeMismatch("depth and channels must be positive")
	rng = stream(seed, Channel.TRAIN, block=0)
	sizes = [1] + [channels] * (depth - 1) + [1]
	layers = []
	for c_in, c_out in zip(sizes, sizes[1:]):
		limit = math.sqrt(6.0 / (c_in * KERNEL * KERNEL))
		w = rng.uniform(-limit, limit, (c_out, c_in, KERNEL, KERNEL))
		layers.append(ConvLayer(w, np.zeros(c_out)))
	return DenoiserModel(layers, residual).as_float32()


def pad(x):
	return np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)), mode="edge")


def pad_adjoint(gp):
	"""Fold the gradient of a replicate-padded array back onto the unpadded one."""
	g = gp.copy()
	g[:, :, PAD, :] += g[:, :, :PAD, :].sum(axis=2)
	g[:, :, -PAD - 1, :] += g[:, :, -PAD:, :].sum(axis=2)
	g[:, :, :, PAD] += g[:, :, :, :PAD].sum(axis=3)
	g[:, :, :, -PAD - 1] += g[:, :, :, -PAD:].sum(axis=3)
	return g[:, :, PAD:-PAD, PAD:-PAD]


def conv_forward(x, w, b):
	_, _, ny, nx = x.shape
	xp = pad(x)
	out = np.zeros((x.shape[0], ny, nx, w.shape[0]))
	for i in range(KERNEL):
		for j in range(KERNEL):
			out += np.tensordot(xp[:, :, i : i + ny, j : j + nx], w[:, :, i, j], axes=([1], [1]))
	out += b
	return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def conv_backward(dout, x, w):
	"""(dx, dw, db) of one convolution given the upstream gradient `dout`."""
	_, _, ny, nx = x.shape
	xp = pad(x)
	dxp = np.zeros_like(xp)
	dw = np.empty_like(w)
	for i in range(KERNEL):
		for j in range(KERNEL):
			window = xp[:, :, i : i + ny, j : j + nx]
			dw[:, :, i, j] = np.tensordot(dout, window, axes=([0, 2, 3], [0, 2, 3]))
			dxp[:, :, i : i + ny, j : j + nx] += np.moveaxis(
				np.tensordot(dout, w[:, :, i, j], axes=([1], [0])), -1, 1
			)
	return pad_adjoint(dxp), dw, dout.sum(axis=(0, 2, 3))


def forward(model, x, cache=None):
	"""Raw network output; `cache` collects each layer's input for backprop."""
	h = x
	last = model.depth - 1
	for n, layer in enumerate(model.layers):
		if cache is not None:
			cache.append(h)
		h = conv_forward(h, layer.weights, layer.bias)
		if n < last:
			h = np.maximum(h, 0.0)
	return h


def training_target(model, noisy, clean):
	return noisy - clean if model.residual else clean


def loss_and_grads(model, noisy, clean, norm=None):
	"""
	Squared error of the denoised output against `clean`, divided by `norm`
	(the element count by default), and its gradient per layer as (dw, db).
	"""
	cache = []
	diff = forward(model, noisy, cache) - training_target(model, noisy, clean)
	norm = diff.size if norm is None else norm
	loss = float(np.sum(diff * diff)) / norm

	grad = 2.0 * diff / norm
	grads = [None] * model.depth
	for n in range(model.depth - 1, -1, -1):
		dx, dw, db = conv_backward(grad, cache[n], model.layers[n].weights)
		grads[n] = (dw, db)
		if n > 0:
			grad = dx * (cache[n] > 0)
	return loss, grads
