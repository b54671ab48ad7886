# Copyright (c) 2026, phasor_forge contributors
# See license.txt

import itertools
import math
import unittest
from unittest.mock import patch

import numpy as np

from phasor_forge.exceptions import KTooLargeForExactMatching, TooFewDistinctPoints, ValidationError
from phasor_forge.flim.core.core import DEFAULT_OMEGA, ImageStack, PhasorField, ValueKind
from phasor_forge.flim.denoise.denoise import Median, denoise_phasor
from phasor_forge.flim.phasor.phasor import phasor_from_mixers
from phasor_forge.flim.segment import segment
from phasor_forge.flim.segment.segment import (
	SegmentationMap,
	default_palette,
	kmeans,
	kmeans_restarts,
	misassignment_rate,
	segment_phasor,
)
from phasor_forge.flim.simulate.simulate import (
	NoiseSpec,
	kidney_phantom,
	simulate_mixers,
	three_lifetime_phantom,
	truth_labels,
)


def brute_force_objective(points):
	best = math.inf
	for bits in itertools.product((0, 1), repeat=len(points)):
		bits = np.array(bits)
		if bits.all() or not bits.any():
			continue
		total = 0.0
		for side in (0, 1):
			group = points[bits == side]
			total += np.sum((group - group.mean(axis=0)) ** 2)
		best = min(best, total)
	return best


class TestKMeans(unittest.TestCase):
	def test_separated_point_masses(self):
		points = np.array([(0.2, 0.1)] * 5 + [(0.8, 0.4)] * 5)
		run = kmeans(points, 2, seed=3)
		centroids = run.centroids[np.argsort(run.centroids[:, 0])]
		np.testing.assert_allclose(centroids, [(0.2, 0.1), (0.8, 0.4)], atol=1e-15)
		self.assertLess(run.objective, 1e-28)

	def test_single_cluster_is_the_mean(self):
		points = np.random.default_rng(1).random((50, 2))
		run = kmeans(points, 1)
		np.testing.assert_allclose(run.centroids[0], points.mean(axis=0), atol=1e-12)

	def test_matches_brute_force_optimum(self):
		for trial in range(3):
			points = np.random.default_rng(100 + trial).random((12, 2))
			best = kmeans_restarts(points, 2, seed=trial, restarts=10)
			self.assertAlmostEqual(best.objective, brute_force_objective(points), delta=1e-9)

	def test_point_transfer_leaves_a_lloyd_fixed_point(self):
		# {0, 3} | {5} is stable under Lloyd, {0} | {3, 5} is cheaper
		points = np.array([(0.0, 0.0), (3.0, 0.0), (5.0, 0.0)])
		centroids = np.array([(1.5, 0.0), (5.0, 0.0)])
		labels, moves = segment._transfer_points(points, np.array([0, 0, 1]), centroids)
		self.assertEqual(moves, 1)
		np.testing.assert_array_equal(labels, [0, 1, 1])
		np.testing.assert_array_equal(centroids, [(1.5, 0.0), (5.0, 0.0)])

	def test_objective_never_rises_and_centroids_are_means(self):
		rng = np.random.default_rng(2)
		points = np.concatenate([rng.normal(c, 0.08, (200, 2)) for c in ((0.2, 0.2), (0.5, 0.4), (0.8, 0.3))])
		run = kmeans(points, 3, seed=5)
		for before, after in zip(run.history, run.history[1:]):
			self.assertLessEqual(after, before + 1e-12)
		for c in range(3):
			np.testing.assert_allclose(run.centroids[c], points[run.assignments == c].mean(axis=0), atol=1e-9)

	def test_too_few_distinct_points(self):
		with self.assertRaises(TooFewDistinctPoints):
			kmeans(np.array([(0.5, 0.5)] * 10), 2)
		with self.assertRaises(ValidationError):
			kmeans(np.random.default_rng(0).random((5, 2)), 0)

	def test_deterministic_for_any_worker_count(self):
		points = np.random.default_rng(7).random((500, 2))
		a = kmeans(points, 4, seed=9)
		b = kmeans(points, 4, seed=9)
		np.testing.assert_array_equal(a.centroids, b.centroids)
		with patch.object(segment, "CHUNK", 37):
			c = kmeans(points, 4, seed=9, threads=1)
			d = kmeans(points, 4, seed=9, threads=4)
		np.testing.assert_array_equal(c.centroids, d.centroids)
		np.testing.assert_array_equal(c.assignments, d.assignments)


class TestSegmentPhasor(unittest.TestCase):
	def test_noise_free_three_lifetimes(self):
		phantom = three_lifetime_phantom((2, 64, 64))
		field = phasor_from_mixers(simulate_mixers(phantom, DEFAULT_OMEGA))
		result, seg = segment_phasor(field, 3, seed=1)
		np.testing.assert_array_equal(seg.labels, truth_labels(phantom))
		np.testing.assert_allclose(seg.cluster_lifetimes_ns, [2.5, 1.5, 0.5], atol=1e-6)
		np.testing.assert_allclose(seg.cluster_mod_lifetimes_ns, [2.5, 1.5, 0.5], atol=1e-6)
		self.assertEqual(result.k, 3)
		self.assertLess(result.objective, 1e-20)
		self.assertEqual(seg.labels.dtype, np.uint8)

	def test_zero_radius_labels_nothing(self):
		field = phasor_from_mixers(simulate_mixers(three_lifetime_phantom((1, 32, 32)), DEFAULT_OMEGA))
		_, seg = segment_phasor(field, 3, radius=0.0)
		self.assertEqual(int(seg.labels.max()), 0)

	def test_finite_radius_bound(self):
		field = phasor_from_mixers(
			simulate_mixers(three_lifetime_phantom((1, 48, 48)), DEFAULT_OMEGA, noise=NoiseSpec(seed=3))
		)
		result, seg = segment_phasor(field, 3, radius="auto", seed=2)
		points = field.points()
		labels = seg.labels[field.mask]
		self.assertTrue(set(np.unique(seg.labels)) <= {0, 1, 2, 3})
		for c in range(3):
			mine = points[labels == c + 1]
			dist = np.linalg.norm(mine - result.centroids[c], axis=1)
			self.assertTrue(np.all(dist < result.radii[c]))
		self.assertGreater(int(np.sum(labels == 0)), 0)

	def test_per_cluster_radii_length(self):
		field = phasor_from_mixers(simulate_mixers(three_lifetime_phantom((1, 16, 16)), DEFAULT_OMEGA))
		with self.assertRaises(ValidationError):
			segment_phasor(field, 3, radius=[0.1, 0.1])

	def test_too_few_pixels(self):
		field = PhasorField(
			ImageStack(np.full((1, 2, 2), 0.5), ValueKind.G),
			ImageStack(np.full((1, 2, 2), 0.3), ValueKind.S),
			mask=np.zeros((1, 2, 2), dtype=bool),
		)
		with self.assertRaises(ValidationError):
			segment_phasor(field, 2)

	def test_denoising_reduces_kidney_misassignment(self):
		phantom = kidney_phantom()
		truth = truth_labels(phantom)
		field = phasor_from_mixers(simulate_mixers(phantom, DEFAULT_OMEGA, noise=NoiseSpec(seed=21)))
		_, raw = segment_phasor(field, 2, seed=4)
		_, clean = segment_phasor(denoise_phasor(field, Median(passes=2)), 2, seed=4)
		self.assertLess(misassignment_rate(clean, truth), misassignment_rate(raw, truth))

	def test_palette_runs_from_blue_to_red(self):
		np.testing.assert_array_equal(default_palette(2), [[0, 0, 255], [255, 0, 0]])
		self.assertEqual(default_palette(5).shape, (5, 3))


def label_map(labels, k):
	labels = np.asarray(labels, dtype=np.uint8)
	return SegmentationMap(labels, [1.0] * k, default_palette(k))


class TestMisassignment(unittest.TestCase):
	def setUp(self):
		self.truth = np.repeat([1, 2, 3, 4], 25).reshape(1, 10, 10)

	def test_identical(self):
		self.assertEqual(misassignment_rate(label_map(self.truth, 4), self.truth), 0.0)

	def test_permutation_invariant(self):
		swapped = np.array([0, 3, 1, 4, 2])[self.truth]
		self.assertEqual(misassignment_rate(label_map(swapped, 4), self.truth), 0.0)

	def test_one_wrong_pixel(self):
		labels = self.truth.copy()
		labels[0, 0, 0] = 2
		self.assertAlmostEqual(misassignment_rate(label_map(labels, 4), self.truth), 0.01)

	def test_unlabeled_pixels_count_as_errors(self):
		labels = self.truth.copy()
		labels[0, :2] = 0
		self.assertAlmostEqual(misassignment_rate(label_map(labels, 4), self.truth), 0.2)

	def test_k_too_large(self):
		truth = np.arange(1, 8).reshape(1, 1, 7)
		with self.assertRaises(KTooLargeForExactMatching):
			misassignment_rate(label_map(truth, 7), truth)
