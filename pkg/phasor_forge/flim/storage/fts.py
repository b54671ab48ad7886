# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
FTS1 tensor files.

"FTS1", u8 version (1), u8 dtype (0 = float32), u8 ndim, ndim u64 dims,
then the payload as little-endian row-major float32.
"""

import struct

import numpy as np

from phasor_forge.exceptions import BadMagic, DtypeUnsupported, FormatError, LengthMismatch
from phasor_forge.flim.core.core import ImageStack, ValueKind
from phasor_forge.utils import write_bytes_atomic

MAGIC = b"FTS1"
VERSION = 1
DTYPES = {0: np.dtype("<f4")}
PREFIX = struct.Struct("<4sBBB")


def dump_array(data):
	data = np.asarray(data)
	if data.ndim < 1 or data.ndim > 255:
		raise FormatError(f"FTS files hold 1 to 255 dims, got {data.ndim}")
	header = PREFIX.pack(MAGIC, VERSION, 0, data.ndim) + struct.pack(f"<{data.ndim}Q", *data.shape)
	return header + np.ascontiguousarray(data, dtype=DTYPES[0]).tobytes()


def parse_array(buf):
	if len(buf) < PREFIX.size:
		raise LengthMismatch(f"FTS header needs {PREFIX.size} bytes, file has {len(buf)}")
	magic, version, dtype, ndim = PREFIX.unpack_from(buf)
	if magic != MAGIC:
		raise BadMagic(f"Expected magic {MAGIC!r}, found {magic!r}")
	if version != VERSION:
		raise FormatError(f"Unsupported FTS version {version}")
	if dtype not in DTYPES:
		raise DtypeUnsupported(f"FTS dtype code {dtype} is not supported")

	offset = PREFIX.size + 8 * ndim
	if len(buf) < offset:
		raise LengthMismatch(f"FTS header declares {ndim} dims but the file ends at byte {len(buf)}")
	dims = struct.unpack_from(f"<{ndim}Q", buf, PREFIX.size)
	expected = int(np.prod(dims, dtype=np.int64)) * DTYPES[dtype].itemsize
	if len(buf) - offset != expected:
		raise LengthMismatch(f"FTS payload holds {len(buf) - offset} bytes, dims {dims} need {expected}")
	return np.frombuffer(buf, dtype=DTYPES[dtype], offset=offset).reshape(dims).astype(np.float64)


def write_array(data, path):
	write_bytes_atomic(path, dump_array(data))


def read_array(path):
	with open(path, "rb") as f:
		return parse_array(f.read())


def write_fts(stack, path):
	write_array(stack.data, path)


def read_fts(path, value_kind=ValueKind.GENERIC):
	data = read_array(path)
	if data.ndim != 3:
		raise FormatError(f"{path} holds a {data.ndim}-d tensor, an image stack needs 3 dims")
	return ImageStack(data, value_kind)
