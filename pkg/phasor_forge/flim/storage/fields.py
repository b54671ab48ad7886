# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""Phasor fields on disk: g.fts, s.fts, mask.fts and field.json in one directory."""

import json
import os

from phasor_forge.exceptions import FormatError
from phasor_forge.flim.core.core import ImageStack, PhasorField, ValueKind
from phasor_forge.flim.storage.fts import read_fts, write_fts
from phasor_forge.utils import write_json_atomic

FIELD_FILES = ("g.fts", "s.fts", "mask.fts", "field.json")


def write_field(field, directory):
	os.makedirs(directory, exist_ok=True)
	write_fts(field.g, os.path.join(directory, "g.fts"))
	write_fts(field.s, os.path.join(directory, "s.fts"))
	write_fts(ImageStack(field.mask.astype(float), ValueKind.GENERIC), os.path.join(directory, "mask.fts"))
	write_json_atomic(os.path.join(directory, "field.json"), {"omega": field.omega, "f_mod_hz": field.f_mod})


def read_field(directory):
	missing = [name for name in FIELD_FILES if not os.path.exists(os.path.join(directory, name))]
	if missing:
		raise FormatError(f"{directory} is not a phasor field directory, missing {missing}")

	with open(os.path.join(directory, "field.json"), encoding="utf-8") as f:
		meta = json.load(f)
	mask = read_fts(os.path.join(directory, "mask.fts"), ValueKind.GENERIC)
	return PhasorField(
		read_fts(os.path.join(directory, "g.fts"), ValueKind.G),
		read_fts(os.path.join(directory, "s.fts"), ValueKind.S),
		float(meta["omega"]),
		mask.data > 0.5,
	)
