# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
phasor-forge command line.

Every stage reads and writes files, so stages compose:

    phasor-forge simulate --out raw
    phasor-forge phasor --input raw --out field
    phasor-forge denoise --input field --out clean --method median --passes 2
    phasor-forge segment --input clean --out seg --k 3 --truth raw/truth.fts
    phasor-forge render --input clean --segment seg --intensity raw/intensity.fts --out img
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from phasor_forge.config import build_config, get_threads, load_config
from phasor_forge.exceptions import PhasorForgeError, ValidationError
from phasor_forge.flim.core.core import NS, ValueKind
from phasor_forge.utils import write_json_atomic

logger = logging.getLogger(__name__)

STAGE_FILES = {
	"mixers": ("v0", "v_half_pi", "v_pi", "v_three_half_pi"),
	"fd": ("modulation", "phase"),
	"decay": ("decay",),
}


def _config(args):
	return load_config(args.config) if args.config else build_config()


def _parse_radius(value):
	if value in ("inf", "auto"):
		return value
	parts = [float(p) for p in value.split(",")]
	return parts[0] if len(parts) == 1 else parts


def _read_json(path):
	with open(path, encoding="utf-8") as f:
		return json.load(f)


def cmd_simulate(args, threads):
	from phasor_forge.api.pipeline import PipelineContext, stage_simulate
	from phasor_forge.flim.storage.fts import write_array, write_fts

	cfg = _config(args)
	ctx = PipelineContext(cfg, threads)
	stage_simulate(ctx)

	mode = cfg.acquisition.mode
	out = args.out
	meta = {"mode": mode, "omega": ctx.omega, "gain": cfg.acquisition.gain, "offset": cfg.acquisition.offset}
	if mode == "mixers":
		for name, stack in zip(STAGE_FILES[mode], ctx.mixers.channels, strict=True):
			write_fts(stack, os.path.join(out, f"{name}.fts"))
	elif mode == "decay":
		write_array(ctx.cube.data, os.path.join(out, "decay.fts"))
		meta["bin_width"] = ctx.cube.bin_width
	else:
		for name, stack in zip(STAGE_FILES[mode], ctx.fd, strict=True):
			write_fts(stack, os.path.join(out, f"{name}.fts"))
	write_fts(ctx.intensity, os.path.join(out, "intensity.fts"))
	write_array(ctx.truth.astype(np.float64), os.path.join(out, "truth.fts"))
	write_json_atomic(os.path.join(out, "acquisition.json"), meta)


def _load_acquisition(directory, threshold, threads):
	"""PipelineContext holding the raw stacks a `simulate` run wrote to `directory`."""
	from phasor_forge.api.pipeline import PipelineContext
	from phasor_forge.flim.simulate.simulate import DecayCube, MixerOutputs
	from phasor_forge.flim.storage.fts import read_array, read_fts

	meta = _read_json(os.path.join(directory, "acquisition.json"))
	mode = meta["mode"]
	ctx = PipelineContext(
		build_config({"acquisition": {"mode": mode, "intensity_threshold": threshold}}),
		threads,
		omega=float(meta["omega"]),
		intensity=read_fts(os.path.join(directory, "intensity.fts"), ValueKind.INTENSITY),
	)
	stacks = {}
	if mode != "decay":
		stacks = {name: read_fts(os.path.join(directory, f"{name}.fts")) for name in STAGE_FILES[mode]}

	if mode == "mixers":
		ctx.mixers = MixerOutputs(*stacks.values(), ctx.intensity, ctx.omega, float(meta["gain"]))
	elif mode == "decay":
		ctx.cube = DecayCube(read_array(os.path.join(directory, "decay.fts")), float(meta["bin_width"]))
	else:
		ctx.fd = (stacks["modulation"], stacks["phase"])
	return ctx


def cmd_phasor(args, threads):
	from phasor_forge.api.pipeline import stage_phasor
	from phasor_forge.flim.phasor.phasor import lifetime_map, measure_reference, phasor_from_mixers
	from phasor_forge.flim.storage.fields import write_field
	from phasor_forge.flim.storage.fts import write_fts

	ctx = _load_acquisition(args.input, args.threshold, threads)
	if args.reference:
		if args.reference_tau_ns is None:
			raise ValidationError("--reference needs --reference-tau-ns")
		ref = _load_acquisition(args.reference, args.threshold, threads)
		if ctx.mixers is None or ref.mixers is None:
			raise ValidationError("Reference calibration needs mixer acquisitions")
		measured = phasor_from_mixers(ref.mixers, threshold=args.threshold)
		ctx.calibration = measure_reference(measured, args.reference_tau_ns * NS)

	stage_phasor(ctx)
	write_field(ctx.raw, args.out)
	write_fts(lifetime_map(ctx.raw).tau, os.path.join(args.out, "lifetime_ns.fts"))


def cmd_denoise(args, threads):
	from phasor_forge.flim.denoise.denoise import Cnn, Mean, Median, denoise_phasor
	from phasor_forge.flim.denoise.weights import load_model
	from phasor_forge.flim.storage.fields import read_field, write_field

	if args.method == "cnn":
		if not args.model:
			raise ValidationError("--model is required for --method cnn")
		method = Cnn(load_model(args.model))
	elif args.method == "mean":
		method = Mean(args.passes, args.window, args.mode)
	else:
		method = Median(args.passes, args.window, args.mode)
	write_field(denoise_phasor(read_field(args.input), method, threads), args.out)


def cmd_train_denoiser(args, threads):
	from phasor_forge.flim.denoise.training import TrainConfig, fit_denoiser, synthetic_pairs
	from phasor_forge.flim.denoise.weights import save_model
	from phasor_forge.flim.simulate.simulate import NoiseSpec

	cfg = TrainConfig(
		epochs=args.epochs,
		batch_size=args.batch_size,
		patch_size=args.patch_size,
		learning_rate=args.learning_rate,
		seed=args.seed,
		depth=args.depth,
		channels=args.channels,
	)
	pairs = synthetic_pairs(args.pairs, tuple(args.dims), NoiseSpec(seed=args.seed), seed=args.seed)
	fit = fit_denoiser(pairs, cfg, threads)
	save_model(fit.model, args.out)
	if args.history:
		write_json_atomic(args.history, {"best_epoch": fit.best_epoch, "history": fit.history})


def cmd_segment(args, threads):
	from phasor_forge.flim.segment.segment import misassignment_rate, segment_phasor
	from phasor_forge.flim.storage.fields import read_field
	from phasor_forge.flim.storage.fts import read_array, write_array

	field = read_field(args.input)
	cluster, seg = segment_phasor(
		field, args.k, _parse_radius(args.radius), args.seed, restarts=args.restarts, threads=threads
	)
	write_array(seg.labels.astype(np.float64), os.path.join(args.out, "labels.fts"))
	doc = {
		"k": cluster.k,
		"objective": cluster.objective,
		"iterations": cluster.iterations,
		"centroids": cluster.centroids.tolist(),
		"radii": [r if np.isfinite(r) else None for r in cluster.radii],
		"counts": cluster.counts,
		"lifetimes_ns": seg.cluster_lifetimes_ns,
		"mod_lifetimes_ns": seg.cluster_mod_lifetimes_ns,
	}
	if args.truth:
		doc["misassignment"] = misassignment_rate(seg, read_array(args.truth).astype(np.int64))
	write_json_atomic(os.path.join(args.out, "clusters.json"), doc)


def cmd_render(args, threads):
	from phasor_forge.flim.phasor.phasor import lifetime_map, phasor_histogram
	from phasor_forge.flim.render.render import composite_hsv, render_phasor_plot, render_segmentation
	from phasor_forge.flim.segment.segment import SegmentationMap, default_palette
	from phasor_forge.flim.storage.fields import read_field
	from phasor_forge.flim.storage.fts import read_array, read_fts
	from phasor_forge.flim.storage.ppm import write_ppm

	field = read_field(args.input)
	intensity = read_fts(args.intensity, ValueKind.INTENSITY) if args.intensity else None
	centroids = None
	if args.segment:
		clusters = _read_json(os.path.join(args.segment, "clusters.json"))
		centroids = clusters["centroids"]
		labels = read_array(os.path.join(args.segment, "labels.fts")).astype(np.uint8)
		seg = SegmentationMap(
			labels, clusters["lifetimes_ns"], default_palette(clusters["k"]), clusters["mod_lifetimes_ns"]
		)
		write_ppm(render_segmentation(seg, args.z, intensity), os.path.join(args.out, "segmentation.ppm"))

	hist = phasor_histogram(field, bins=tuple(args.bins), threads=threads)
	write_ppm(render_phasor_plot(hist, centroids, args.gamma), os.path.join(args.out, "phasor.ppm"))
	if intensity is not None:
		img = composite_hsv(intensity, lifetime_map(field), tuple(args.tau_range), args.z)
		write_ppm(img, os.path.join(args.out, "composite.ppm"))


def cmd_pipeline(args, threads):
	from phasor_forge.api.pipeline import run_pipeline
	from phasor_forge.flim.report.pipeline_report.pipeline_report import execute

	report = run_pipeline(_config(args), threads)
	columns, data = execute(report)
	print("\t".join(c["label"] for c in columns))
	for row in data:
		print("\t".join("" if row[c["fieldname"]] is None else f"{row[c['fieldname']]:.6g}" for c in columns))


def build_parser():
	parser = argparse.ArgumentParser(prog="phasor-forge", description="Phasor FLIM analysis on synthetic phantoms")
	parser.add_argument("--threads", type=int, help="worker cap (default $PHASOR_FORGE_THREADS or 1)")
	parser.add_argument("--verbose", action="store_true", help="debug logging")
	sub = parser.add_subparsers(dest="command", required=True)

	p = sub.add_parser("simulate", help="phantom to raw acquisition stacks")
	p.add_argument("--config", help="JSON config; phantom, noise and acquisition sections are used")
	p.add_argument("--out", required=True)
	p.set_defaults(func=cmd_simulate)

	p = sub.add_parser("phasor", help="raw acquisition to a G/S field")
	p.add_argument("--input", required=True)
	p.add_argument("--out", required=True)
	p.add_argument("--threshold", type=float, default=0.01, help="intensity mask, fraction of the peak")
	p.add_argument("--reference", help="simulate output of a reference fluorophore, mixers only")
	p.add_argument("--reference-tau-ns", type=float, help="known lifetime of the reference")
	p.set_defaults(func=cmd_phasor)

	p = sub.add_parser("denoise", help="filter a G/S field")
	p.add_argument("--input", required=True)
	p.add_argument("--out", required=True)
	p.add_argument("--method", choices=("median", "mean", "cnn"), default="median")
	p.add_argument("--passes", type=int, default=2)
	p.add_argument("--window", type=int, default=3)
	p.add_argument("--mode", choices=("2d", "3d"), default="2d")
	p.add_argument("--model", help="FWT1 weights for --method cnn")
	p.set_defaults(func=cmd_denoise)

	p = sub.add_parser("train-denoiser", help="train the residual CNN on synthetic pairs")
	p.add_argument("--out", required=True, help="FWT1 weights file")
	p.add_argument("--history", help="write the loss history JSON here")
	p.add_argument("--pairs", type=int, default=64)
	p.add_argument("--dims", type=int, nargs=3, default=[1, 64, 64], metavar=("NZ", "NY", "NX"))
	p.add_argument("--epochs", type=int, default=20)
	p.add_argument("--batch-size", type=int, default=8)
	p.add_argument("--patch-size", type=int, default=40)
	p.add_argument("--learning-rate", type=float, default=1e-3)
	p.add_argument("--depth", type=int, default=7)
	p.add_argument("--channels", type=int, default=32)
	p.add_argument("--seed", type=int, default=0)
	p.set_defaults(func=cmd_train_denoiser)

	p = sub.add_parser("segment", help="k-means segmentation of a G/S field")
	p.add_argument("--input", required=True)
	p.add_argument("--out", required=True)
	p.add_argument("--k", type=int, default=3)
	p.add_argument("--radius", default="inf", help="inf, auto, a number or comma separated numbers")
	p.add_argument("--seed", type=int, default=0)
	p.add_argument("--restarts", type=int, default=10)
	p.add_argument("--truth", help="truth label FTS for the misassignment rate")
	p.set_defaults(func=cmd_segment)

	p = sub.add_parser("render", help="phasor plot, lifetime composite and segmentation images")
	p.add_argument("--input", required=True, help="G/S field directory")
	p.add_argument("--out", required=True)
	p.add_argument("--segment", help="directory written by the segment command")
	p.add_argument("--intensity", help="intensity FTS for the composite")
	p.add_argument("--tau-range", type=float, nargs=2, default=[0.0, 3.0], metavar=("LO", "HI"))
	p.add_argument("--bins", type=int, nargs=2, default=[256, 154], metavar=("NG", "NS"))
	p.add_argument("--gamma", type=float, default=0.5)
	p.add_argument("--z", type=int, default=0)
	p.set_defaults(func=cmd_render)

	p = sub.add_parser("pipeline", help="run every stage from one config")
	p.add_argument("--config", help="JSON config (defaults when omitted)")
	p.set_defaults(func=cmd_pipeline)
	return parser


def main(argv=None):
	args = build_parser().parse_args(argv)
	logging.basicConfig(
		level=logging.DEBUG if args.verbose else logging.INFO,
		format="%(levelname)s %(name)s: %(message)s",
		stream=sys.stderr,
	)
	try:
		threads = get_threads(args.threads)
		if getattr(args, "out", None) and args.command != "train-denoiser":
			os.makedirs(args.out, exist_ok=True)
		args.func(args, threads)
	except PhasorForgeError as e:
		logger.error(f"{type(e).__name__}: {e}")
		return e.exit_code
	except Exception as e:
		logger.exception(f"Unexpected failure: {e}")
		return 1
	return 0


if __name__ == "__main__":
	sys.exit(main())
