# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
Perceptual fingerprints of rendered images.

Used by the pipeline report to record what each render looked like and how
far the denoised phasor plot moved from the raw one.
"""

import logging

import imagehash

logger = logging.getLogger(__name__)

HASH_SIZE = 16
# weights of the average / perceptual / difference / wavelet hash similarities
WEIGHTS = {"ahash": 0.30, "phash": 0.35, "dhash": 0.25, "whash": 0.10}


def _hashes(img):
	pil = img.to_pil()
	hashes = {
		"ahash": imagehash.average_hash(pil, hash_size=HASH_SIZE),
		"phash": imagehash.phash(pil, hash_size=HASH_SIZE),
		"dhash": imagehash.dhash(pil, hash_size=HASH_SIZE),
	}
	# wavelet hashing needs at least an 8x8 image
	if min(img.width, img.height) >= 8:
		hashes["whash"] = imagehash.whash(pil)
	return hashes


def fingerprint(img):
	"""Hex strings of each hash, stable for equal pixels."""
	return {name: str(value) for name, value in _hashes(img).items()}


def similarity(img1, img2):
	"""Weighted hash similarity in percent; 100 for identical renders."""
	a, b = _hashes(img1), _hashes(img2)
	used = {name: w for name, w in WEIGHTS.items() if name in a and name in b}
	scores = {}
	for name in used:
		bits = a[name].hash.size
		scores[name] = max(0.0, 100.0 - (a[name] - b[name]) * 100.0 / bits)

	total = sum(scores[name] * w for name, w in used.items()) / sum(used.values())
	logger.debug(f"Render similarity {total:.1f}% from {scores}")
	return round(total, 2)
