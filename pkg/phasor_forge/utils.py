import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager


def map_slices(fn, count, threads=1):
	"""Call fn(i) for i in range(count), results kept in index order."""
	threads = max(1, int(threads or 1))
	if threads == 1 or count <= 1:
		return [fn(i) for i in range(count)]

	with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
		return list(pool.map(fn, range(count)))


@contextmanager
def atomic_path(path):
	"""Yield a temp path next to `path`; it replaces `path` only if the block succeeds."""
	path = os.fspath(path)
	directory = os.path.dirname(os.path.abspath(path))
	os.makedirs(directory, exist_ok=True)
	fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=os.path.splitext(path)[1], dir=directory)
	os.close(fd)
	try:
		yield tmp
		os.replace(tmp, path)
	except BaseException:
		if os.path.exists(tmp):
			os.remove(tmp)
		raise


def write_bytes_atomic(path, data):
	with atomic_path(path) as tmp:
		with open(tmp, "wb") as f:
			f.write(data)


def write_json_atomic(path, doc):
	write_bytes_atomic(path, (json.dumps(doc, indent=1, sort_keys=False) + "\n").encode("utf-8"))
