# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
Pipeline configuration.

A config file is a JSON document whose sections override DEFAULT_CONFIG.
Unknown keys are rejected with their dotted path, JSON syntax errors carry
line and column, and file paths resolve against the config's directory.
"""

import copy
import json
import os
from dataclasses import asdict, dataclass

from phasor_forge.exceptions import ValidationError

THREADS_ENV = "PHASOR_FORGE_THREADS"

DEFAULT_CONFIG = {
	"phantom": {
		"preset": "three_lifetime",
		"dims": [8, 128, 128],
		"regions": [],
		"background": None,
	},
	"noise": {
		"photon_scale": 100.0,
		"gaussian_sigma": 0.05,
		"seed": 0,
	},
	"acquisition": {
		"mode": "mixers",
		"f_mod_hz": 8e7,
		"gain": 0.5,
		"offset": 0.1,
		"n_averages": 1,
		"intensity_threshold": 0.01,
		# mixers only: simulated reference fluorophore for phasor calibration
		"reference_tau_ns": None,
		# decay mode only
		"n_bins": 256,
		"photons_per_unit_intensity": 100.0,
	},
	"denoise": {
		"method": "median",
		"passes": 2,
		"window": 3,
		"mode": "2d",
		"model_path": None,
		"train": {
			"pairs": 16,
			"dims": [1, 64, 64],
			"epochs": 20,
			"batch_size": 8,
			"patch_size": 40,
			"learning_rate": 1e-3,
			"momentum": 0.9,
			"seed": 0,
			"depth": 7,
			"channels": 32,
		},
	},
	"segment": {
		"k": 3,
		"radius": "inf",
		"seed": 0,
		"restarts": 10,
		"max_iter": 100,
		"tol": 1e-6,
	},
	"render": {
		"tau_range_ns": [0.0, 3.0],
		"gamma": 0.5,
		"z": 0,
		"bins": [256, 154],
	},
	"outputs": {
		"directory": "out",
	},
}

NUMBER = (int, float)
NONE = type(None)

# leaf types; nested dicts are sections
SCHEMA = {
	"phantom": {"preset": (str, NONE), "dims": list, "regions": list, "background": (dict, NONE)},
	"noise": {"photon_scale": NUMBER, "gaussian_sigma": NUMBER, "seed": int},
	"acquisition": {
		"mode": str,
		"f_mod_hz": NUMBER,
		"gain": NUMBER,
		"offset": NUMBER,
		"n_averages": int,
		"intensity_threshold": NUMBER,
		"reference_tau_ns": (*NUMBER, NONE),
		"n_bins": int,
		"photons_per_unit_intensity": NUMBER,
	},
	"denoise": {
		"method": str,
		"passes": int,
		"window": int,
		"mode": str,
		"model_path": (str, NONE),
		"train": {
			"pairs": int,
			"dims": list,
			"epochs": int,
			"batch_size": int,
			"patch_size": int,
			"learning_rate": NUMBER,
			"momentum": NUMBER,
			"seed": int,
			"depth": int,
			"channels": int,
		},
	},
	"segment": {
		"k": int,
		"radius": (*NUMBER, str, list),
		"seed": int,
		"restarts": int,
		"max_iter": int,
		"tol": NUMBER,
	},
	"render": {"tau_range_ns": list, "gamma": NUMBER, "z": int, "bins": list},
	"outputs": {"directory": str},
}

# schemas for the objects inside list or object leaves
ITEM_SCHEMAS = {
	"phantom.background": {"tau_ns": NUMBER, "intensity": NUMBER},
	"phantom.regions": {
		"box": list,
		"disc": {"center": list, "radius": NUMBER, "z": (list, NONE)},
		"tau_ns": NUMBER,
		"intensity": NUMBER,
	},
}

CHOICES = {
	"acquisition.mode": ("mixers", "decay", "fd"),
	"denoise.method": ("none", "median", "mean", "cnn"),
	"denoise.mode": ("2d", "3d"),
}

LIST_LENGTHS = {
	"phantom.dims": 3,
	"denoise.train.dims": 3,
	"render.tau_range_ns": 2,
	"render.bins": 2,
}

PATH_KEYS = (("outputs", "directory"), ("denoise", "model_path"))


def _type_names(types):
	types = types if isinstance(types, tuple) else (types,)
	names = {int: "integer", float: "number", str: "string", list: "list", dict: "object", NONE: "null"}
	return " or ".join(dict.fromkeys(names[t] for t in types))


def _check_leaf(value, types, path):
	types = types if isinstance(types, tuple) else (types,)
	# JSON true/false must not pass as numbers
	if isinstance(value, bool) or not isinstance(value, types):
		raise ValidationError(f"Config field {path} must be {_type_names(types)}, got {json.dumps(value)}")
	if path in CHOICES and value not in CHOICES[path]:
		raise ValidationError(f"Config field {path} must be one of {list(CHOICES[path])}, got '{value}'")
	if path in LIST_LENGTHS and len(value) != LIST_LENGTHS[path]:
		raise ValidationError(f"Config field {path} needs {LIST_LENGTHS[path]} entries, got {len(value)}")
	if path in ITEM_SCHEMAS and isinstance(value, dict):
		validate(value, ITEM_SCHEMAS[path], f"{path}.")
	elif path in ITEM_SCHEMAS and isinstance(value, list):
		for i, item in enumerate(value):
			validate(item, ITEM_SCHEMAS[path], f"{path}[{i}].")


def validate(doc, schema=SCHEMA, prefix=""):
	"""Reject unknown keys and mistyped values, naming the dotted path."""
	if not isinstance(doc, dict):
		raise ValidationError(f"Config section {prefix.rstrip('.') or '(root)'} must be an object")
	for key, value in doc.items():
		path = f"{prefix}{key}"
		if key not in schema:
			raise ValidationError(f"Unknown config key {path}")
		if isinstance(schema[key], dict):
			validate(value, schema[key], f"{path}.")
		else:
			_check_leaf(value, schema[key], path)


def merge(base, override):
	"""Deep-merge `override` into a copy of `base`; lists and scalars replace."""
	out = copy.deepcopy(base)
	for key, value in override.items():
		if isinstance(value, dict) and isinstance(out.get(key), dict):
			out[key] = merge(out[key], value)
		else:
			out[key] = copy.deepcopy(value)
	return out


@dataclass(frozen=True)
class PhantomConfig:
	preset: str | None
	dims: list
	regions: list
	background: dict | None


@dataclass(frozen=True)
class NoiseConfig:
	photon_scale: float
	gaussian_sigma: float
	seed: int


@dataclass(frozen=True)
class AcquisitionConfig:
	mode: str
	f_mod_hz: float
	gain: float
	offset: float
	n_averages: int
	intensity_threshold: float
	reference_tau_ns: float | None
	n_bins: int
	photons_per_unit_intensity: float


@dataclass(frozen=True)
class TrainSettings:
	pairs: int
	dims: list
	epochs: int
	batch_size: int
	patch_size: int
	learning_rate: float
	momentum: float
	seed: int
	depth: int
	channels: int


@dataclass(frozen=True)
class DenoiseConfig:
	method: str
	passes: int
	window: int
	mode: str
	model_path: str | None
	train: TrainSettings


@dataclass(frozen=True)
class SegmentConfig:
	k: int
	radius: float | str | list
	seed: int
	restarts: int
	max_iter: int
	tol: float


@dataclass(frozen=True)
class RenderConfig:
	tau_range_ns: list
	gamma: float
	z: int
	bins: list


@dataclass(frozen=True)
class OutputsConfig:
	directory: str


@dataclass(frozen=True)
class PipelineConfig:
	"""A validated, fully merged config; one frozen dataclass per section."""

	phantom: PhantomConfig
	noise: NoiseConfig
	acquisition: AcquisitionConfig
	denoise: DenoiseConfig
	segment: SegmentConfig
	render: RenderConfig
	outputs: OutputsConfig

	@classmethod
	def from_dict(cls, doc):
		denoise = dict(doc["denoise"], train=TrainSettings(**doc["denoise"]["train"]))
		return cls(
			phantom=PhantomConfig(**doc["phantom"]),
			noise=NoiseConfig(**doc["noise"]),
			acquisition=AcquisitionConfig(**doc["acquisition"]),
			denoise=DenoiseConfig(**denoise),
			segment=SegmentConfig(**doc["segment"]),
			render=RenderConfig(**doc["render"]),
			outputs=OutputsConfig(**doc["outputs"]),
		)

	def to_dict(self):
		return asdict(self)


def build_config(doc=None, base_dir=None):
	"""Validated, merged config with absolute paths; `doc` may be partial."""
	doc = doc or {}
	validate(doc)
	cfg = merge(DEFAULT_CONFIG, doc)
	base_dir = os.path.abspath(base_dir or os.getcwd())
	for section, key in PATH_KEYS:
		if cfg[section][key]:
			cfg[section][key] = os.path.normpath(os.path.join(base_dir, cfg[section][key]))
	return PipelineConfig.from_dict(cfg)


def load_config(path):
	with open(path, encoding="utf-8") as f:
		text = f.read()
	try:
		doc = json.loads(text)
	except json.JSONDecodeError as e:
		raise ValidationError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")

	try:
		return build_config(doc, os.path.dirname(os.path.abspath(path)))
	except ValidationError as e:
		raise type(e)(f"{path}: {e}")


def get_threads(cli_value=None):
	"""Worker cap: the --threads flag, else $PHASOR_FORGE_THREADS, else 1."""
	value = cli_value if cli_value is not None else os.environ.get(THREADS_ENV)
	if value in (None, ""):
		return 1
	try:
		threads = int(value)
	except (TypeError, ValueError):
		threads = 0
	if threads < 1:
		raise ValidationError(f"Thread count must be a positive integer, got '{value}'")
	return threads
