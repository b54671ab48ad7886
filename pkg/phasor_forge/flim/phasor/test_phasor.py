# Copyright (c) 2026, phasor_forge contributors
# See license.txt

import math
import time
import unittest

import numpy as np

from phasor_forge.exceptions import ValidationError, ZeroReference
from phasor_forge.flim.core.core import DEFAULT_OMEGA, ImageStack, PhasorField, ValueKind, phasor_from_lifetime
from phasor_forge.flim.phasor.phasor import (
	CalibrationRef,
	centroid_lifetimes,
	lifetime_map,
	measure_reference,
	phasor_from_decay,
	phasor_from_fd,
	phasor_from_mixers,
	phasor_histogram,
)
from phasor_forge.flim.simulate.simulate import (
	Background,
	Box,
	MixerOutputs,
	Phantom,
	Region,
	fd_from_phantom,
	simulate_decay_cube,
	simulate_mixers,
	three_lifetime_phantom,
)

PERIOD = 12.5e-9
TAU_UNIT_NS = 1e9 / DEFAULT_OMEGA


def uniform_field(g, s, dims=(1, 4, 4), mask=None):
	return PhasorField(
		ImageStack(np.full(dims, g), ValueKind.G), ImageStack(np.full(dims, s), ValueKind.S), DEFAULT_OMEGA, mask
	)


def single_pixel(tau_ns, intensity=1.0):
	return Phantom((1, 1, 1), [], Background(tau_ns, intensity))


class TestMixerPhasor(unittest.TestCase):
	def test_unit_phase_point(self):
		mixers = simulate_mixers(single_pixel(TAU_UNIT_NS), DEFAULT_OMEGA, gain=0.5, offset=0.1)
		self.assertAlmostEqual(mixers.v0.data.item() - mixers.v_pi.data.item(), 0.5, places=12)
		field = phasor_from_mixers(mixers)
		self.assertAlmostEqual(field.g.data.item(), 0.5, places=12)
		self.assertAlmostEqual(field.s.data.item(), 0.5, places=12)

	def test_zero_lifetime(self):
		field = phasor_from_mixers(simulate_mixers(single_pixel(0.0, 3.0), DEFAULT_OMEGA, gain=0.5))
		self.assertAlmostEqual(field.g.data.item(), 1.0, places=12)
		self.assertAlmostEqual(field.s.data.item(), 0.0, places=12)

	def test_offset_cancels(self):
		phantom = three_lifetime_phantom((1, 20, 20))
		a = phasor_from_mixers(simulate_mixers(phantom, DEFAULT_OMEGA, offset=0.1))
		b = phasor_from_mixers(simulate_mixers(phantom, DEFAULT_OMEGA, offset=7.3))
		np.testing.assert_allclose(a.g.data, b.g.data, atol=1e-12)
		np.testing.assert_allclose(a.s.data, b.s.data, atol=1e-12)

	def test_unlit_pixels_are_masked(self):
		field = phasor_from_mixers(simulate_mixers(three_lifetime_phantom((1, 20, 20)), DEFAULT_OMEGA))
		self.assertFalse(field.mask[0, 0, 0])
		self.assertTrue(field.mask[0, 10, 10])
		self.assertEqual(field.g.data[0, 0, 0], 0.0)

	def test_lifetime_recovery(self):
		phantom = three_lifetime_phantom((8, 128, 128))
		truth, intensity = phantom_truth(phantom)
		start = time.perf_counter()
		field = phasor_from_mixers(simulate_mixers(phantom, DEFAULT_OMEGA))
		tau = lifetime_map(field)
		elapsed = time.perf_counter() - start

		lit = intensity > 0
		np.testing.assert_array_equal(tau.mask, lit)
		rel = np.abs(tau.tau.data[lit] - truth[lit]) / truth[lit]
		self.assertLess(rel.max(), 1e-6)
		self.assertLess(elapsed, 1.0)

	def test_noise_free_points_sit_on_the_semicircle(self):
		field = phasor_from_mixers(simulate_mixers(three_lifetime_phantom((2, 40, 40)), DEFAULT_OMEGA))
		g, s = field.points().T
		self.assertLess(np.max(np.abs((g - 0.5) ** 2 + s**2 - 0.25)), 1e-9)

	def test_intensity_scale_invariance(self):
		base = three_lifetime_phantom((1, 30, 30))
		scaled = Phantom(
			base.dims, [Region(r.shape, r.tau_ns, r.intensity * 3.7) for r in base.regions], base.background
		)
		a = phasor_from_mixers(simulate_mixers(base, DEFAULT_OMEGA))
		b = phasor_from_mixers(simulate_mixers(scaled, DEFAULT_OMEGA))
		np.testing.assert_array_equal(a.mask, b.mask)
		np.testing.assert_allclose(a.g.data, b.g.data, atol=1e-9)
		np.testing.assert_allclose(a.s.data, b.s.data, atol=1e-9)

	def test_mixer_and_fd_paths_agree(self):
		phantom = three_lifetime_phantom((2, 32, 32))
		mixer = phasor_from_mixers(simulate_mixers(phantom, DEFAULT_OMEGA))
		mod, phase, _ = fd_from_phantom(phantom, DEFAULT_OMEGA)
		fd = phasor_from_fd(mod, phase, DEFAULT_OMEGA)
		lit = mixer.mask
		np.testing.assert_allclose(mixer.g.data[lit], fd.g.data[lit], atol=1e-9)
		np.testing.assert_allclose(mixer.s.data[lit], fd.s.data[lit], atol=1e-9)

	def test_calibration_from_reference(self):
		phantom = Phantom(
			(1, 10, 10),
			[Region(Box(y=(0, 10), x=(0, 5)), 1.5, 2.0), Region(Box(y=(0, 10), x=(5, 10)), 3.0, 2.0)],
		)
		clean = simulate_mixers(phantom, DEFAULT_OMEGA, gain=0.5)
		raw = phasor_from_mixers(MixerOutputs(*clean.channels, intensity=None, omega=DEFAULT_OMEGA, gain=0.5))
		self.assertAlmostEqual(raw.g.data[0, 0, 0], 2.0 * phasor_from_lifetime(1.5e-9, DEFAULT_OMEGA)[0])

		reference = np.zeros(raw.dims, dtype=bool)
		reference[:, :, :5] = True
		cal = measure_reference(raw, 1.5e-9, reference)
		field = phasor_from_mixers(
			MixerOutputs(*clean.channels, intensity=None, omega=DEFAULT_OMEGA, gain=0.5), cal=cal
		)
		g, s = phasor_from_lifetime(3.0e-9, DEFAULT_OMEGA)
		self.assertAlmostEqual(field.g.data[0, 0, 9], g, places=12)
		self.assertAlmostEqual(field.s.data[0, 0, 9], s, places=12)

	def test_zero_reference(self):
		mixers = simulate_mixers(single_pixel(1.0), DEFAULT_OMEGA)
		with self.assertRaises(ZeroReference):
			phasor_from_mixers(mixers, cal=CalibrationRef(1e-9, 0.0, 0.0))


def phantom_truth(phantom):
	from phasor_forge.flim.simulate.simulate import render_phantom

	tau, intensity = render_phantom(phantom)
	return tau.tau.data, intensity.data


class TestDecayPhasor(unittest.TestCase):
	def test_impulse(self):
		cube = simulate_decay_cube(single_pixel(0.0), 256, PERIOD)
		field = phasor_from_decay(cube, DEFAULT_OMEGA)
		half_bin = DEFAULT_OMEGA * cube.bin_width / 2
		self.assertAlmostEqual(field.g.data.item(), math.cos(half_bin), places=12)
		self.assertAlmostEqual(field.s.data.item(), math.sin(half_bin), places=12)
		self.assertLess(1.0 - field.g.data.item(), 1e-3)

	def test_uniform_decay_has_zero_phasor(self):
		from phasor_forge.flim.simulate.simulate import DecayCube

		cube = DecayCube(np.ones((1, 1, 1, 100)), PERIOD / 100)
		field = phasor_from_decay(cube, DEFAULT_OMEGA)
		self.assertLess(abs(field.g.data.item()), 1e-12)
		self.assertLess(abs(field.s.data.item()), 1e-12)

	def test_folded_exponential(self):
		cube = simulate_decay_cube(single_pixel(2.5), 1024, PERIOD)
		field = phasor_from_decay(cube, DEFAULT_OMEGA)
		self.assertAlmostEqual(field.g.data.item(), 0.387727, delta=1e-4)
		self.assertAlmostEqual(field.s.data.item(), 0.487227, delta=1e-4)

	def test_converges_to_closed_form(self):
		for tau_ns in np.linspace(0.1, 5.0 / DEFAULT_OMEGA * 1e9, 12):
			g, s = phasor_from_lifetime(tau_ns * 1e-9, DEFAULT_OMEGA)
			errors = []
			for n_bins in (256, 1024):
				field = phasor_from_decay(simulate_decay_cube(single_pixel(tau_ns), n_bins, PERIOD), DEFAULT_OMEGA)
				errors.append(math.hypot(field.g.data.item() - g, field.s.data.item() - s))
			self.assertLess(errors[0], 1e-3)
			self.assertLess(errors[1], 1e-4)
			self.assertLess(errors[1], errors[0] / 4 * 1.5)

	def test_intensity_scale_invariance(self):
		cube = simulate_decay_cube(three_lifetime_phantom((1, 12, 12)), 64, PERIOD)
		a = phasor_from_decay(cube, DEFAULT_OMEGA)
		b = phasor_from_decay(cube.scaled(13.0), DEFAULT_OMEGA)
		np.testing.assert_allclose(a.g.data, b.g.data, atol=1e-12)
		np.testing.assert_allclose(a.s.data, b.s.data, atol=1e-12)
		np.testing.assert_array_equal(a.mask, b.mask)
		self.assertFalse(a.mask[0, 0, 0])

	def test_harmonic_must_fit_the_period(self):
		cube = simulate_decay_cube(single_pixel(1.0), 16, PERIOD)
		with self.assertRaises(ValidationError):
			phasor_from_decay(cube, DEFAULT_OMEGA * 1.5)
		phasor_from_decay(cube, DEFAULT_OMEGA, harmonic=2)


class TestFrequencyDomainPhasor(unittest.TestCase):
	def fd(self, m, phi):
		field = phasor_from_fd(ImageStack(np.full((1, 1, 1), m)), ImageStack(np.full((1, 1, 1), phi)), DEFAULT_OMEGA)
		return field.g.data.item(), field.s.data.item()

	def test_examples(self):
		self.assertEqual(self.fd(1.0, 0.0), (1.0, 0.0))
		g, s = self.fd(1 / math.sqrt(2), math.pi / 4)
		self.assertAlmostEqual(g, 0.5, places=12)
		self.assertAlmostEqual(s, 0.5, places=12)
		self.assertEqual(self.fd(0.0, 1.3), (0.0, 0.0))

	def test_negative_modulation_rejected(self):
		with self.assertRaises(ValidationError):
			self.fd(-0.1, 0.0)


class TestLifetimeMap(unittest.TestCase):
	def test_unit_phase_field(self):
		tau = lifetime_map(uniform_field(0.5, 0.5))
		np.testing.assert_allclose(tau.tau.data, 1.98944, atol=1e-5)
		self.assertTrue(tau.mask.all())

	def test_zero_lifetime(self):
		np.testing.assert_array_equal(lifetime_map(uniform_field(1.0, 0.0)).tau.data, 0.0)

	def test_zero_g_is_masked(self):
		tau = lifetime_map(uniform_field(0.0, 0.3))
		self.assertFalse(tau.mask.any())
		self.assertTrue(np.all(np.isfinite(tau.tau.data)))

	def test_centroid_lifetimes_agree_on_the_semicircle(self):
		g, s = phasor_from_lifetime(1.5e-9, DEFAULT_OMEGA)
		tau_phase, tau_mod = centroid_lifetimes(g, s, DEFAULT_OMEGA)
		self.assertAlmostEqual(tau_phase, 1.5, places=9)
		self.assertAlmostEqual(tau_mod, 1.5, places=9)
		self.assertTrue(math.isnan(centroid_lifetimes(0.0, 0.0, DEFAULT_OMEGA)[0]))


class TestHistogram(unittest.TestCase):
	def test_single_point(self):
		mask = np.zeros((1, 4, 4), dtype=bool)
		mask[0, 1, 2] = True
		hist = phasor_histogram(uniform_field(0.5, 0.5, mask=mask), bins=(100, 60), bounds=(0, 1, 0, 0.6))
		self.assertEqual(np.count_nonzero(hist.counts), 1)
		self.assertEqual(hist.counts.sum(), 1)
		self.assertEqual(hist.bins, (100, 60))

	def test_conservation(self):
		rng = np.random.default_rng(1)
		g = ImageStack(rng.uniform(-0.5, 1.5, (3, 10, 10)), ValueKind.G)
		s = ImageStack(rng.uniform(-0.2, 0.8, (3, 10, 10)), ValueKind.S)
		mask = rng.random((3, 10, 10)) > 0.3
		field = PhasorField(g, s, DEFAULT_OMEGA, mask)
		hist = phasor_histogram(field)
		self.assertEqual(hist.counts.sum() + hist.overflow, mask.sum())
		self.assertGreater(hist.overflow, 0)
		threaded = phasor_histogram(field, threads=3)
		np.testing.assert_array_equal(hist.counts, threaded.counts)

	def test_three_lifetime_phantom(self):
		field = phasor_from_mixers(simulate_mixers(three_lifetime_phantom((2, 40, 40)), DEFAULT_OMEGA))
		hist = phasor_histogram(field)
		self.assertEqual(np.count_nonzero(hist.counts), 3)
		for tau in (0.5e-9, 1.5e-9, 2.5e-9):
			i, j = hist.bin_of(*phasor_from_lifetime(tau, DEFAULT_OMEGA))
			self.assertGreater(hist.counts[i, j], 0)

	def test_weighted(self):
		field = uniform_field(0.5, 0.2, dims=(1, 2, 2))
		weights = ImageStack(np.full((1, 2, 2), 0.25), ValueKind.INTENSITY)
		hist = phasor_histogram(field, weights=weights)
		self.assertTrue(hist.weighted)
		self.assertAlmostEqual(hist.counts.sum(), 1.0)

	def test_bad_bounds(self):
		with self.assertRaises(ValidationError):
			phasor_histogram(uniform_field(0.5, 0.5), bounds=(1, 1, 0, 0.6))
