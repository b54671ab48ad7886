# Copyright (c) 2026, phasor_forge contributors
# See license.txt

import unittest

import numpy as np

from phasor_forge.exceptions import PaletteTooSmall, ValidationError
from phasor_forge.flim.core.core import ImageStack, LifetimeMap, PhasorField, ValueKind
from phasor_forge.flim.phasor.phasor import PhasorHistogram, phasor_histogram
from phasor_forge.flim.render.compare import fingerprint, similarity
from phasor_forge.flim.render.render import (
	ARC_COLOR,
	CENTROID_COLOR,
	RgbImage,
	composite_hsv,
	render_intensity,
	render_phasor_plot,
	render_segmentation,
	semicircle_bins,
)
from phasor_forge.flim.segment.segment import SegmentationMap, default_palette


def lifetimes(values, mask=None):
	return LifetimeMap(ImageStack(np.asarray(values, dtype=float), ValueKind.LIFETIME_NS), mask)


def intensities(values):
	return ImageStack(np.asarray(values, dtype=float), ValueKind.INTENSITY)


def empty_hist(bins=(40, 24)):
	return PhasorHistogram(np.zeros(bins, dtype=np.int64), (0.0, 1.0, 0.0, 0.6))


class TestCompositeHsv(unittest.TestCase):
	def test_dark_pixel_is_black(self):
		img = composite_hsv(intensities([[[0.0, 1.0]]]), lifetimes([[[2.0, 2.0]]]), (0.0, 4.0))
		self.assertEqual(tuple(img.pixels[0, 0]), (0, 0, 0))

	def test_hue_endpoints_and_midpoint(self):
		img = composite_hsv(intensities([[[1.0, 1.0, 1.0]]]), lifetimes([[[0.5, 1.5, 2.5]]]), (0.5, 2.5))
		self.assertEqual(tuple(img.pixels[0, 0]), (255, 0, 0))
		self.assertEqual(tuple(img.pixels[0, 1]), (0, 255, 0))
		self.assertEqual(tuple(img.pixels[0, 2]), (0, 0, 255))

	def test_out_of_range_lifetimes_clamp(self):
		img = composite_hsv(intensities([[[1.0, 1.0]]]), lifetimes([[[0.0, 9.0]]]), (1.0, 2.0))
		self.assertEqual(tuple(img.pixels[0, 0]), (255, 0, 0))
		self.assertEqual(tuple(img.pixels[0, 1]), (0, 0, 255))

	def test_hue_is_monotone(self):
		taus = np.linspace(1.0, 3.0, 50)[np.newaxis, np.newaxis]
		img = composite_hsv(intensities(np.ones_like(taus)), lifetimes(taus), (1.0, 3.0))
		red, blue = img.pixels[0, :, 0].astype(int), img.pixels[0, :, 2].astype(int)
		self.assertTrue(np.all(np.diff(blue - red) >= 0))

	def test_rejects_empty_range(self):
		with self.assertRaises(ValidationError):
			composite_hsv(intensities([[[1.0]]]), lifetimes([[[1.0]]]), (2.0, 2.0))


class TestPhasorPlot(unittest.TestCase):
	def test_empty_histogram_shows_only_the_arc(self):
		hist = empty_hist()
		img = render_phasor_plot(hist)
		arc = {(hist.bins[1] - 1 - i_s, i_g) for i_g, i_s in semicircle_bins(hist)}
		lit = {tuple(p) for p in np.argwhere(img.pixels.any(axis=-1))}
		self.assertEqual(lit, arc)
		for row, col in arc:
			self.assertEqual(tuple(img.pixels[row, col]), ARC_COLOR)

	def test_single_bin_position(self):
		field = PhasorField(
			ImageStack(np.full((1, 1, 1), 0.55), ValueKind.G), ImageStack(np.full((1, 1, 1), 0.05), ValueKind.S)
		)
		hist = phasor_histogram(field, bins=(10, 6))
		img = render_phasor_plot(hist)
		self.assertEqual(hist.bin_of(0.55, 0.05), (5, 0))
		# s grows upwards, so the lowest s bin sits on the bottom row
		self.assertEqual(tuple(img.pixels[5, 5]), (255, 255, 255))
		arc = {(5 - s, g) for g, s in semicircle_bins(hist)}
		colored = {tuple(p) for p in np.argwhere(img.pixels.any(axis=-1))} - arc
		self.assertEqual(colored, {(5, 5)})

	def test_arc_follows_the_circle(self):
		hist = empty_hist((256, 154))
		dg, ds = hist.bin_size
		diagonal = np.hypot(dg, ds)
		for i_g, i_s in semicircle_bins(hist):
			g, s = (i_g + 0.5) * dg, (i_s + 0.5) * ds
			self.assertLess(abs((g - 0.5) ** 2 + s**2 - 0.25), diagonal)

	def test_centroid_cross(self):
		hist = empty_hist()
		img = render_phasor_plot(hist, overlay_centroids=[(0.5, 0.3)])
		i_g, i_s = hist.bin_of(0.5, 0.3)
		row = hist.bins[1] - 1 - i_s
		self.assertEqual(tuple(img.pixels[row, i_g]), CENTROID_COLOR)
		self.assertEqual(tuple(img.pixels[row, i_g + 2]), CENTROID_COLOR)
		self.assertEqual(tuple(img.pixels[row - 2, i_g]), CENTROID_COLOR)

	def test_deterministic(self):
		rng = np.random.default_rng(0)
		hist = PhasorHistogram(rng.integers(0, 50, (30, 20)), (0.0, 1.0, 0.0, 0.6))
		a, b = render_phasor_plot(hist), render_phasor_plot(hist)
		self.assertEqual(a.pixels.tobytes(), b.pixels.tobytes())
		self.assertEqual((a.width, a.height), (30, 20))


class TestSegmentationRender(unittest.TestCase):
	def seg(self, labels, k=2):
		return SegmentationMap(np.asarray(labels, dtype=np.uint8), [2.0, 1.0][:k], default_palette(k))

	def test_all_zero_is_black(self):
		img = render_segmentation(self.seg(np.zeros((1, 3, 4))))
		self.assertFalse(img.pixels.any())

	def test_two_labels_are_blue_and_red(self):
		img = render_segmentation(self.seg([[[1, 2, 0]]]))
		self.assertEqual(tuple(img.pixels[0, 0]), (0, 0, 255))
		self.assertEqual(tuple(img.pixels[0, 1]), (255, 0, 0))
		self.assertEqual(tuple(img.pixels[0, 2]), (0, 0, 0))

	def test_intensity_modulation(self):
		img = render_segmentation(self.seg([[[1, 2]]]), intensity=intensities([[[0.0, 2.0]]]))
		self.assertEqual(tuple(img.pixels[0, 0]), (0, 0, 0))
		self.assertEqual(tuple(img.pixels[0, 1]), (255, 0, 0))

	def test_palette_too_small(self):
		with self.assertRaises(PaletteTooSmall):
			render_segmentation(SegmentationMap(np.array([[[3]]], dtype=np.uint8), [1.0], default_palette(2)))


class TestIntensityAndImages(unittest.TestCase):
	def test_grayscale(self):
		img = render_intensity(intensities([[[0.0, 1.0, 2.0]]]))
		self.assertEqual([tuple(p) for p in img.pixels[0]], [(0, 0, 0), (128, 128, 128), (255, 255, 255)])

	def test_channel_range_checked(self):
		with self.assertRaises(ValidationError):
			RgbImage(np.full((2, 2, 3), 300))
		with self.assertRaises(ValidationError):
			RgbImage(np.zeros((2, 2)))

	def test_fingerprints(self):
		rng = np.random.default_rng(1)
		img = RgbImage(rng.integers(0, 256, (64, 64, 3), dtype=np.uint8))
		other = RgbImage(255 - img.pixels)
		self.assertEqual(fingerprint(img), fingerprint(RgbImage(img.pixels.copy())))
		self.assertEqual(similarity(img, img), 100.0)
		self.assertLess(similarity(img, other), 100.0)
		self.assertEqual(set(fingerprint(img)), {"ahash", "phash", "dhash", "whash"})
