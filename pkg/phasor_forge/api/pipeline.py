# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
simulate -> phasor -> denoise -> segment -> render, driven by one config.

Stages are listed in hooks.pipeline_stages and share a PipelineContext.
Every output lands in a staging directory first and is moved into
outputs.directory only once all stages and the report have succeeded.
"""

import logging
import math
import os
import pkgutil
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from phasor_forge import hooks
from phasor_forge.config import PipelineConfig, build_config, load_config
from phasor_forge.exceptions import ValidationError
from phasor_forge.flim.core.core import NS, ImageStack, LifetimeMap, PhasorField, ValueKind, omega_from_frequency
from phasor_forge.flim.denoise.denoise import Cnn, Mean, Median, denoise_phasor
from phasor_forge.flim.denoise.network import DenoiserModel
from phasor_forge.flim.denoise.training import TrainConfig, fit_denoiser, synthetic_pairs
from phasor_forge.flim.denoise.weights import load_model, save_model
from phasor_forge.flim.phasor.phasor import (
	CalibrationRef,
	intensity_mask,
	lifetime_map,
	measure_reference,
	phasor_from_decay,
	phasor_from_fd,
	phasor_from_mixers,
	phasor_histogram,
)
from phasor_forge.flim.render.render import (
	composite_hsv,
	render_intensity,
	render_phasor_plot,
	render_segmentation,
)
from phasor_forge.flim.report.pipeline_report import pipeline_report
from phasor_forge.flim.segment.segment import (
	MAX_MATCHING_K,
	ClusterResult,
	SegmentationMap,
	misassignment_rate,
	segment_phasor,
)
from phasor_forge.flim.simulate.simulate import (
	Background,
	DecayCube,
	MixerOutputs,
	NoiseSpec,
	Phantom,
	fd_from_phantom,
	phantom_from_dict,
	render_phantom,
	simulate_decay_cube,
	simulate_mixers,
	truth_labels,
)
from phasor_forge.flim.storage.fts import write_array, write_fts
from phasor_forge.flim.storage.ppm import write_ppm
from phasor_forge.utils import write_json_atomic

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"


@dataclass(eq=False)
class PipelineContext:
	"""State handed from stage to stage; each stage fills in its own fields."""

	cfg: PipelineConfig
	threads: int = 1
	staging: str | None = None
	timings: dict = field(default_factory=dict)
	outputs: dict = field(default_factory=dict)

	# simulate
	omega: float | None = None
	phantom: Phantom | None = None
	truth: np.ndarray | None = None
	truth_lifetimes_ns: list = field(default_factory=list)
	intensity: ImageStack | None = None
	mixers: MixerOutputs | None = None
	cube: DecayCube | None = None
	fd: tuple | None = None
	calibration: CalibrationRef | None = None

	# phasor, denoise
	raw: PhasorField | None = None
	denoised: PhasorField | None = None
	model: DenoiserModel | None = None
	train_history: list | None = None

	# segment, render
	cluster: ClusterResult | None = None
	seg: SegmentationMap | None = None
	misassignment_raw: float | None = None
	misassignment_denoised: float | None = None
	lifetimes: LifetimeMap | None = None
	renders: dict = field(default_factory=dict)


def noise_spec(cfg):
	return NoiseSpec(**asdict(cfg.noise))


def median_method(ctx):
	d = ctx.cfg.denoise
	return Median(d.passes, d.window, d.mode)


def mean_method(ctx):
	d = ctx.cfg.denoise
	return Mean(d.passes, d.window, d.mode)


def cnn_method(ctx):
	"""Load denoise.model_path, or train on synthetic pairs when no path is set."""
	d = ctx.cfg.denoise
	if d.model_path:
		return Cnn(load_model(d.model_path))

	train = asdict(d.train)
	count, dims = train.pop("pairs"), tuple(train.pop("dims"))
	pairs = synthetic_pairs(
		count,
		dims,
		noise_spec(ctx.cfg),
		ctx.omega,
		seed=train["seed"],
		gain=ctx.cfg.acquisition.gain,
		offset=ctx.cfg.acquisition.offset,
	)
	fit = fit_denoiser(pairs, TrainConfig(**train), ctx.threads)
	ctx.model = fit.model
	ctx.train_history = fit.history
	return Cnn(fit.model)


def reference_calibration(phantom, omega, acq, threads=1):
	"""
	Measure a uniform phantom of lifetime acq.reference_tau_ns through the same
	mixers and return the CalibrationRef that maps it onto the semicircle.
	"""
	reference = Phantom(phantom.dims, [], Background(acq.reference_tau_ns, 1.0))
	mixers = simulate_mixers(reference, omega, acq.gain, acq.offset, NoiseSpec.none(), threads=threads)
	measured = phasor_from_mixers(mixers, threshold=acq.intensity_threshold)
	return measure_reference(measured, acq.reference_tau_ns * NS)


def stage_simulate(ctx):
	cfg = ctx.cfg
	acq = cfg.acquisition
	phantom = phantom_from_dict(asdict(cfg.phantom))
	ctx.phantom = phantom
	ctx.omega = omega_from_frequency(acq.f_mod_hz)
	ctx.truth = truth_labels(phantom)

	tau, intensity = render_phantom(phantom)
	lit = intensity.data > 0
	ctx.truth_lifetimes_ns = sorted(set(tau.tau.data[lit].tolist()), reverse=True)

	if acq.reference_tau_ns is not None and acq.mode != "mixers":
		raise ValidationError("acquisition.reference_tau_ns only applies to mixers mode")

	if acq.mode == "mixers":
		ctx.mixers = simulate_mixers(
			phantom,
			ctx.omega,
			acq.gain,
			acq.offset,
			noise_spec(cfg),
			acq.n_averages,
			ctx.threads,
		)
		ctx.intensity = ctx.mixers.intensity
		if acq.reference_tau_ns is not None:
			ctx.calibration = reference_calibration(phantom, ctx.omega, acq, ctx.threads)
	elif acq.mode == "decay":
		ctx.cube = simulate_decay_cube(
			phantom,
			acq.n_bins,
			2.0 * math.pi / ctx.omega,
			acq.photons_per_unit_intensity,
			cfg.noise.seed,
			ctx.threads,
		)
		ctx.intensity = ImageStack(ctx.cube.data.sum(axis=-1), ValueKind.INTENSITY)
	else:
		mod, phase, ctx.intensity = fd_from_phantom(phantom, ctx.omega)
		ctx.fd = (mod, phase)


def stage_phasor(ctx):
	acq = ctx.cfg.acquisition
	if acq.mode == "mixers":
		ctx.raw = phasor_from_mixers(ctx.mixers, cal=ctx.calibration, threshold=acq.intensity_threshold)
		return

	if acq.mode == "decay":
		measured = phasor_from_decay(ctx.cube, ctx.omega, threads=ctx.threads)
	else:
		measured = phasor_from_fd(*ctx.fd, ctx.omega)
	mask = measured.mask & intensity_mask(ctx.intensity, acq.intensity_threshold)
	ctx.raw = measured.replace(
		g=measured.g.with_data(np.where(mask, measured.g.data, 0.0)),
		s=measured.s.with_data(np.where(mask, measured.s.data, 0.0)),
		mask=mask,
	)


def stage_denoise(ctx):
	method = ctx.cfg.denoise.method
	if method == "none":
		ctx.denoised = ctx.raw
		return
	fn = pkgutil.resolve_name(hooks.denoise_methods[method])(ctx)
	ctx.denoised = denoise_phasor(ctx.raw, fn, ctx.threads)


def _misassignment(seg, truth):
	if max(seg.k, int(truth.max())) > MAX_MATCHING_K:
		logger.warning(f"Skipping misassignment: exact matching covers up to {MAX_MATCHING_K} labels")
		return None
	return misassignment_rate(seg, truth)


def stage_segment(ctx):
	s = ctx.cfg.segment
	kwargs = dict(
		radius=s.radius,
		seed=s.seed,
		restarts=s.restarts,
		max_iter=s.max_iter,
		tol=s.tol,
		threads=ctx.threads,
	)
	ctx.cluster, ctx.seg = segment_phasor(ctx.denoised, s.k, **kwargs)
	raw_seg = ctx.seg if ctx.denoised is ctx.raw else segment_phasor(ctx.raw, s.k, **kwargs)[1]

	ctx.misassignment_denoised = _misassignment(ctx.seg, ctx.truth)
	ctx.misassignment_raw = _misassignment(raw_seg, ctx.truth)


def stage_render(ctx):
	r = ctx.cfg.render
	if not 0 <= r.z < ctx.raw.dims[0]:
		raise ValidationError(f"render.z {r.z} is outside the {ctx.raw.dims[0]} slices")

	ctx.lifetimes = lifetime_map(ctx.denoised)
	hist_raw = phasor_histogram(ctx.raw, bins=r.bins, threads=ctx.threads)
	hist_denoised = phasor_histogram(ctx.denoised, bins=r.bins, threads=ctx.threads)
	ctx.renders = {
		"composite": composite_hsv(ctx.intensity, ctx.lifetimes, tuple(r.tau_range_ns), r.z),
		"phasor_raw": render_phasor_plot(hist_raw, gamma=r.gamma),
		"phasor_denoised": render_phasor_plot(
			hist_denoised, overlay_centroids=ctx.cluster.centroids, gamma=r.gamma
		),
		"intensity": render_intensity(ctx.intensity, r.z),
		"segmentation": render_segmentation(ctx.seg, r.z, intensity=ctx.intensity),
	}


def stage_write(ctx):
	stacks = {
		"g_raw": ctx.raw.g,
		"s_raw": ctx.raw.s,
		"g_denoised": ctx.denoised.g,
		"s_denoised": ctx.denoised.s,
		"lifetime_ns": ctx.lifetimes.tau,
	}
	for name, stack in stacks.items():
		write_fts(stack, os.path.join(ctx.staging, f"{name}.fts"))
		ctx.outputs[name] = f"{name}.fts"
	write_array(ctx.seg.labels.astype(np.float64), os.path.join(ctx.staging, "labels.fts"))
	ctx.outputs["labels"] = "labels.fts"

	for name, img in ctx.renders.items():
		write_ppm(img, os.path.join(ctx.staging, f"{name}.ppm"))
		ctx.outputs[name] = f"{name}.ppm"

	if ctx.model is not None:
		save_model(ctx.model, os.path.join(ctx.staging, "denoiser.fwt"))
		ctx.outputs["denoiser"] = "denoiser.fwt"
	ctx.outputs["report"] = REPORT_FILE


def _commit(staging, directory):
	os.makedirs(directory, exist_ok=True)
	for name in sorted(os.listdir(staging)):
		os.replace(os.path.join(staging, name), os.path.join(directory, name))


def run_pipeline(config, threads=1):
	"""
	Run every configured stage and write the outputs plus report.json.

	`config` is a config file path, a partial config dict (relative paths
	resolve against the working directory) or an already built config.
	Returns the report document.
	"""
	if isinstance(config, str | os.PathLike):
		cfg = load_config(config)
	elif isinstance(config, PipelineConfig):
		cfg = config
	else:
		cfg = build_config(config)

	directory = cfg.outputs.directory
	parent = os.path.dirname(os.path.abspath(directory))
	os.makedirs(parent, exist_ok=True)
	staging = tempfile.mkdtemp(prefix=".staging-", dir=parent)

	ctx = PipelineContext(cfg, threads, staging)
	try:
		for path in hooks.pipeline_stages:
			stage = pkgutil.resolve_name(path)
			name = stage.__name__.removeprefix("stage_")
			started = time.perf_counter()
			stage(ctx)
			ctx.timings[name] = time.perf_counter() - started
			logger.info(f"Stage {name} took {ctx.timings[name]:.3f}s")
		ctx.timings["total"] = sum(ctx.timings.values())

		report = pipeline_report.build(ctx)
		pipeline_report.validate_report(report)
		write_json_atomic(os.path.join(staging, REPORT_FILE), report)
		_commit(staging, directory)
	finally:
		shutil.rmtree(staging, ignore_errors=True)

	logger.info(f"Pipeline finished in {ctx.timings['total']:.3f}s, outputs in {directory}")
	return report
