# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

import functools
import json
import math
import os

import numpy as np

from phasor_forge import __version__
from phasor_forge.exceptions import ValidationError
from phasor_forge.flim.render.compare import fingerprint, similarity

FIELDTYPES = {
	"Data": (str,),
	"Select": (str,),
	"Int": (int,),
	"Float": (int, float),
	"JSON": (dict, list),
	"Table": (list,),
}


@functools.cache
def load_schema():
	path = os.path.join(os.path.dirname(__file__), "pipeline_report.json")
	with open(path, encoding="utf-8") as f:
		return json.load(f)


def _plain(value):
	"""numpy scalars to Python, non-finite floats to None, recursively."""
	if isinstance(value, dict):
		return {str(k): _plain(v) for k, v in value.items()}
	if isinstance(value, list | tuple | np.ndarray):
		return [_plain(v) for v in value]
	if isinstance(value, np.bool_ | bool):
		return bool(value)
	if isinstance(value, np.integer):
		return int(value)
	if isinstance(value, np.floating | float):
		value = float(value)
		return value if math.isfinite(value) else None
	return value


def build(ctx):
	"""Report document for a finished pipeline context."""
	cluster, seg = ctx.cluster, ctx.seg
	clusters = [
		{
			"label": i + 1,
			"lifetime_ns": seg.cluster_lifetimes_ns[i],
			"mod_lifetime_ns": seg.cluster_mod_lifetimes_ns[i],
			"g": cluster.centroids[i][0],
			"s": cluster.centroids[i][1],
			"radius": cluster.radii[i],
			"pixels": cluster.counts[i],
		}
		for i in range(cluster.k)
	]
	report = {
		"app_version": __version__,
		"dims": list(ctx.raw.dims),
		"acquisition_mode": ctx.cfg.acquisition.mode,
		"f_mod_hz": ctx.raw.f_mod,
		"pixels_masked_in": ctx.raw.count,
		"denoise_method": ctx.cfg.denoise.method,
		"k": cluster.k,
		"objective": cluster.objective,
		"iterations": cluster.iterations,
		"clusters": clusters,
		"truth_lifetimes_ns": ctx.truth_lifetimes_ns,
		"misassignment_raw": ctx.misassignment_raw,
		"misassignment_denoised": ctx.misassignment_denoised,
		"timings_s": ctx.timings,
		"fingerprints": {name: fingerprint(img) for name, img in sorted(ctx.renders.items())},
		"phasor_plot_similarity": similarity(ctx.renders["phasor_raw"], ctx.renders["phasor_denoised"]),
		"train_history": ctx.train_history,
		"outputs": ctx.outputs,
		"config": ctx.cfg.to_dict(),
	}
	return _plain(report)


def _check_fields(doc, fields, path):
	known = {f["fieldname"]: f for f in fields}
	unknown = set(doc) - set(known)
	if unknown:
		raise ValidationError(f"Unknown report field(s) {sorted(unknown)} in {path}")

	for name, df in known.items():
		value = doc.get(name)
		where = f"{path}.{name}"
		if value is None:
			if df.get("reqd"):
				raise ValidationError(f"Report field {where} is required")
			continue
		if isinstance(value, bool) or not isinstance(value, FIELDTYPES[df["fieldtype"]]):
			raise ValidationError(f"Report field {where} must be {df['fieldtype']}, got {type(value).__name__}")
		if df["fieldtype"] == "Select" and value not in df["options"].split("\n"):
			raise ValidationError(f"Report field {where} has unexpected value '{value}'")
		if df["fieldtype"] == "Table":
			child = load_schema()["child_tables"][df["options"]]
			for i, row in enumerate(value):
				if not isinstance(row, dict):
					raise ValidationError(f"Report row {where}[{i}] must be an object")
				_check_fields(row, child["fields"], f"{where}[{i}]")


def validate_report(doc):
	"""Check a report document against pipeline_report.json."""
	if not isinstance(doc, dict):
		raise ValidationError("Report must be a JSON object")
	_check_fields(doc, load_schema()["fields"], "report")


def get_columns():
	child = load_schema()["child_tables"]["Pipeline Cluster"]
	return [
		{"fieldname": f["fieldname"], "label": f["label"], "fieldtype": f["fieldtype"]} for f in child["fields"]
	]


def execute(report):
	"""(columns, data) of the cluster table, one row per cluster."""
	columns = get_columns()
	data = [{c["fieldname"]: row.get(c["fieldname"]) for c in columns} for row in report["clusters"]]
	return columns, data
