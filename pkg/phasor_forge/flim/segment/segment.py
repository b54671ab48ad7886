# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.colors import hsv_to_rgb
from scipy.spatial.distance import cdist

from phasor_forge.exceptions import (
	KTooLargeForExactMatching,
	NumericError,
	TooFewDistinctPoints,
	ValidationError,
)
from phasor_forge.flim.phasor.phasor import centroid_lifetimes
from phasor_forge.flim.simulate.rng import Channel, stream
from phasor_forge.utils import map_slices

logger = logging.getLogger(__name__)

MAX_K = 255
MAX_MATCHING_K = 6
# fixed summation blocks keep centroid sums identical for any worker count
CHUNK = 1 << 16


@dataclass
class KMeansResult:
	centroids: np.ndarray
	assignments: np.ndarray
	objective: float
	iterations: int
	history: list = field(default_factory=list)


@dataclass
class ClusterResult:
	centroids: np.ndarray
	radii: list
	labels: np.ndarray
	objective: float
	iterations: int
	counts: list = field(default_factory=list)

	@property
	def k(self):
		return len(self.centroids)


@dataclass
class SegmentationMap:
	labels: np.ndarray
	cluster_lifetimes_ns: list
	palette: np.ndarray
	cluster_mod_lifetimes_ns: list = field(default_factory=list)

	@property
	def k(self):
		return len(self.cluster_lifetimes_ns)

	@property
	def dims(self):
		return self.labels.shape

	def slice(self, z):
		return SegmentationMap(
			self.labels[z][np.newaxis], self.cluster_lifetimes_ns, self.palette, self.cluster_mod_lifetimes_ns
		)


def default_palette(k):
	"""Hue 240 deg (blue) for cluster 1, the longest lifetime, down to 0 deg (red) for cluster k."""
	hues = np.array([240.0]) if k == 1 else np.linspace(240.0, 0.0, k)
	hsv = np.column_stack([hues / 360.0, np.ones(k), np.ones(k)])
	return np.round(hsv_to_rgb(hsv) * 255).astype(np.uint8)


def _chunks(n):
	return [(start, min(start + CHUNK, n)) for start in range(0, n, CHUNK)]


def _assign(points, centroids, threads):
	"""Nearest centroid per point, ties to the lowest index, and the squared distance."""
	blocks = _chunks(len(points))

	def one(b):
		lo, hi = blocks[b]
		d = cdist(points[lo:hi], centroids, "sqeuclidean")
		idx = np.argmin(d, axis=1)
		return idx, d[np.arange(hi - lo), idx]

	parts = map_slices(one, len(blocks), threads)
	return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _cluster_sums(points, labels, k):
	sums = np.zeros((k, 2))
	counts = np.zeros(k, dtype=np.int64)
	for lo, hi in _chunks(len(points)):
		lab = labels[lo:hi]
		counts += np.bincount(lab, minlength=k)
		for axis in range(2):
			sums[:, axis] += np.bincount(lab, weights=points[lo:hi, axis], minlength=k)
	return sums, counts


def _seed_plus_plus(points, k, rng):
	"""Greedy k-means++: each new centroid is the best of a few D^2-weighted draws."""
	trials = 2 + int(math.log(k))
	chosen = [int(rng.integers(len(points)))]
	d2 = cdist(points, points[chosen], "sqeuclidean")[:, 0]
	for _ in range(1, k):
		candidates = rng.choice(len(points), size=trials, p=d2 / d2.sum())
		pot = np.minimum(d2, cdist(points[candidates], points, "sqeuclidean"))
		best = int(np.argmin(pot.sum(axis=1)))
		chosen.append(int(candidates[best]))
		d2 = pot[best]
	return points[chosen].copy()


def _transfer_points(points, labels, centroids, max_rounds=100):
	"""
	Hartigan single-point transfers after Lloyd has settled.

	Moving x from cluster a to b changes the objective by
	n_b / (n_b + 1) |x - c_b|^2 - n_a / (n_a - 1) |x - c_a|^2 with both means
	updated, so any move with a negative change is taken. Returns the new
	labels and the number of moves.
	"""
	k = len(centroids)
	labels = labels.copy()
	sums, counts = _cluster_sums(points, labels, k)
	centroids = centroids.copy()
	filled = counts > 0
	centroids[filled] = sums[filled] / counts[filled, np.newaxis]
	rows = np.arange(len(points))
	moves = 0

	for _ in range(max_rounds):
		d2 = cdist(points, centroids, "sqeuclidean")
		n = counts.astype(np.float64)
		n_own = n[labels]
		leave = np.where(n_own > 1, n_own / np.maximum(n_own - 1, 1) * d2[rows, labels], 0.0)
		join = d2 * (n / (n + 1))
		join[rows, labels] = np.inf
		gain = leave - join.min(axis=1)
		floor = 1e-12 * max(1.0, float(d2[rows, labels].sum()))
		candidates = np.flatnonzero((gain > floor) & (n_own > 1))
		if len(candidates) == 0:
			break

		for i in candidates[np.argsort(-gain[candidates], kind="stable")]:
			a, x = labels[i], points[i]
			if counts[a] <= 1:
				continue
			cost = counts / (counts + 1.0) * np.sum((centroids - x) ** 2, axis=1)
			cost[a] = np.inf
			b = int(np.argmin(cost))
			if cost[b] >= counts[a] / (counts[a] - 1.0) * np.sum((centroids[a] - x) ** 2) - floor:
				continue
			centroids[a] = (centroids[a] * counts[a] - x) / (counts[a] - 1)
			centroids[b] = (centroids[b] * counts[b] + x) / (counts[b] + 1)
			counts[a] -= 1
			counts[b] += 1
			labels[i] = b
			moves += 1
	return labels, moves


def kmeans(points, k, seed=0, max_iter=100, tol=1e-6, restart=0, threads=1):
	"""
	Lloyd iterations from greedy k-means++ seeding, finished with single-point transfers.

	Stops once no assignment changes, the largest centroid move drops below
	`tol`, or after `max_iter` rounds. Empty clusters are re-seeded at the
	point farthest from its centroid.
	"""
	points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
	k = int(k)
	if not 1 <= k <= MAX_K:
		raise ValidationError(f"k must lie in 1..{MAX_K}, got {k}")
	distinct = len(np.unique(points, axis=0))
	if distinct < k:
		raise TooFewDistinctPoints(f"{distinct} distinct points cannot form {k} clusters")
	rng = stream(seed, Channel.KMEANS, block=restart)
	centroids = _seed_plus_plus(points, k, rng)
	labels, d2 = _assign(points, centroids, threads)
	history = [float(d2.sum())]
	iterations = 0

	while iterations < max_iter:
		iterations += 1
		sums, counts = _cluster_sums(points, labels, k)
		new = centroids.copy()
		filled = counts > 0
		new[filled] = sums[filled] / counts[filled, np.newaxis]
		for c in np.flatnonzero(~filled):
			far = int(np.argmax(d2))
			new[c] = points[far]
			labels[far], d2[far] = c, 0.0

		move = float(np.max(np.abs(new - centroids)))
		centroids = new
		prev_labels = labels
		labels, d2 = _assign(points, centroids, threads)
		objective = float(d2.sum())
		if objective > history[-1] + 1e-12 * max(1.0, history[-1]):
			raise NumericError(f"k-means objective rose from {history[-1]} to {objective}")
		history.append(objective)
		logger.debug(f"k-means iteration {iterations} objective={objective:.9g} move={move:.3g}")

		if np.array_equal(labels, prev_labels) or move < tol:
			break

	labels, moves = _transfer_points(points, labels, centroids)

	# settle centroids onto the means of the final assignment
	sums, counts = _cluster_sums(points, labels, k)
	filled = counts > 0
	centroids[filled] = sums[filled] / counts[filled, np.newaxis]
	objective = float(np.sum((points - centroids[labels]) ** 2))
	if moves:
		logger.debug(f"k-means point transfers moved {moves} points, objective={objective:.9g}")
		history.append(objective)
	return KMeansResult(centroids, labels, objective, iterations, history)


def kmeans_restarts(points, k, seed=0, restarts=10, max_iter=100, tol=1e-6, threads=1):
	"""Best of `restarts` independently seeded runs; the earliest wins ties."""
	best = None
	for r in range(max(1, int(restarts))):
		run = kmeans(points, k, seed, max_iter, tol, restart=r, threads=threads)
		if best is None or run.objective < best.objective:
			best = run
	return best


def default_radius(points, centroid):
	"""Twice the RMS distance of a cluster's points from its centroid."""
	if len(points) == 0:
		return 0.0
	return 2.0 * math.sqrt(float(np.mean(np.sum((points - centroid) ** 2, axis=1))))


def _lifetime_order(centroids, omega):
	taus = [centroid_lifetimes(g, s, omega)[0] for g, s in centroids]
	# undefined lifetimes sort last
	return sorted(range(len(taus)), key=lambda i: math.inf if math.isnan(taus[i]) else -taus[i])


def _resolve_radii(radius, k, points, labels, centroids):
	if radius is None or radius == "inf":
		return [math.inf] * k
	if radius == "auto":
		return [default_radius(points[labels == c], centroids[c]) for c in range(k)]
	if isinstance(radius, list | tuple):
		if len(radius) != k:
			raise ValidationError(f"Got {len(radius)} radii for {k} clusters")
		radii = [float(r) for r in radius]
	else:
		radii = [float(radius)] * k
	if any(r < 0 for r in radii):
		raise ValidationError("Cluster radii must be non-negative")
	return radii


def segment_phasor(
	field, k, radius=math.inf, seed=0, intensity_mask=None, restarts=10, max_iter=100, tol=1e-6, threads=1
):
	"""
	Cluster the masked-in phasor points and map the clusters back to pixels.

	Clusters are numbered 1..k by descending centroid lifetime. A pixel is
	labeled only when it lies strictly inside its cluster's radius; `radius`
	is a number, one number per cluster (in that order), inf or "auto".
	"""
	mask = field.mask if intensity_mask is None else (field.mask & np.asarray(intensity_mask, dtype=bool))
	points = field.points(mask)
	if len(points) < int(k):
		raise ValidationError(f"{len(points)} masked-in pixels cannot form {k} clusters")

	run = kmeans_restarts(points, k, seed, restarts, max_iter, tol, threads)
	order = _lifetime_order(run.centroids, field.omega)
	rank = np.empty(len(order), dtype=np.int64)
	rank[order] = np.arange(len(order))
	centroids = run.centroids[order]
	assigned = rank[run.assignments]

	radii = _resolve_radii(radius, len(order), points, assigned, centroids)
	dist = np.sqrt(np.sum((points - centroids[assigned]) ** 2, axis=1))
	inside = dist < np.asarray(radii)[assigned]

	labels = np.zeros(field.dims, dtype=np.uint8)
	labels[mask] = np.where(inside, assigned + 1, 0)

	lifetimes = [centroid_lifetimes(g, s, field.omega) for g, s in centroids]
	result = ClusterResult(
		centroids,
		radii,
		labels,
		run.objective,
		run.iterations,
		[int(np.sum(labels == c + 1)) for c in range(len(order))],
	)
	seg = SegmentationMap(
		labels,
		[tau for tau, _ in lifetimes],
		default_palette(len(order)),
		[tau for _, tau in lifetimes],
	)
	logger.info(
		f"Segmented {len(points)} points into {len(order)} clusters, objective={run.objective:.6g}, "
		f"lifetimes_ns={[round(t, 4) for t in seg.cluster_lifetimes_ns]}"
	)
	return result, seg


def misassignment_rate(seg, truth, mask=None):
	"""
	Fraction of truth-labeled pixels whose label differs from the truth under
	the best one-to-one relabeling. Unlabeled pixels always count as wrong.
	"""
	labels = seg.labels if isinstance(seg, SegmentationMap) else np.asarray(seg)
	truth = np.asarray(truth)
	if labels.shape != truth.shape:
		raise ValidationError(f"Label dims {labels.shape} differ from truth dims {truth.shape}")
	scored = truth > 0
	if mask is not None:
		scored &= np.asarray(mask, dtype=bool)
	total = int(scored.sum())
	if total == 0:
		raise ValidationError("Truth holds no labeled pixels")

	k = max(int(labels.max()), int(truth.max()))
	if k > MAX_MATCHING_K:
		raise KTooLargeForExactMatching(f"Exact matching covers up to {MAX_MATCHING_K} labels, got {k}")

	confusion = np.zeros((k + 1, k + 1), dtype=np.int64)
	np.add.at(confusion, (labels[scored].astype(np.int64), truth[scored].astype(np.int64)), 1)
	best = max(
		sum(confusion[i + 1, perm[i] + 1] for i in range(k)) for perm in itertools.permutations(range(k))
	)
	return 1.0 - best / total
