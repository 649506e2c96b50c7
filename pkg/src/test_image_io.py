#!/usr/bin/env python3
"""
Unit tests for image_io module.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np
from PIL import Image as PILImage

from image_core import FeatureTypeError, Image
from image_io import load_image, normalise_map, save_image, save_map_pgm


class TestImageFiles(unittest.TestCase):
    """Test loading and saving images."""

    def setUp(self):
        """Create a scratch directory."""
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_png_rgb_is_normalised(self):
        """Test 8-bit RGB values are divided by 255."""
        path = os.path.join(self.tmpdir, "rgb.png")
        arr = np.zeros((2, 3, 3), dtype=np.uint8)
        arr[0, 0] = (255, 0, 51)
        PILImage.fromarray(arr).save(path)
        img = load_image(path)
        self.assertEqual(img.channels, 3)
        np.testing.assert_allclose(img.data[0, 0], (1.0, 0.0, 0.2))

    def test_pgm_grayscale(self):
        """Test 8-bit PGM loads as one channel."""
        path = os.path.join(self.tmpdir, "gray.pgm")
        PILImage.fromarray(np.full((4, 4), 128, dtype=np.uint8)).save(path)
        img = load_image(path)
        self.assertEqual(img.channels, 1)
        self.assertAlmostEqual(img.data[0, 0, 0], 128 / 255.0)

    def test_save_load_quantised(self):
        """Test saving then loading keeps 8-bit values."""
        path = os.path.join(self.tmpdir, "out.png")
        data = np.round(np.linspace(0, 1, 12).reshape(3, 4) * 255) / 255
        save_image(path, Image(data))
        np.testing.assert_allclose(load_image(path).data[:, :, 0], data)

    def test_unsupported_suffix(self):
        """Test unknown formats are rejected."""
        with self.assertRaises(FeatureTypeError):
            load_image(os.path.join(self.tmpdir, "image.jpg"))

    def test_missing_file(self):
        """Test a missing file raises FileNotFoundError."""
        with self.assertRaises(FileNotFoundError):
            load_image(os.path.join(self.tmpdir, "absent.png"))

    def test_pgm_needs_one_channel(self):
        """Test RGB images cannot be written as PGM."""
        with self.assertRaises(FeatureTypeError):
            save_image(os.path.join(self.tmpdir, "x.pgm"),
                       Image(np.zeros((2, 2, 3))))

    def test_map_pgm(self):
        """Test float maps are written min-max normalised."""
        path = os.path.join(self.tmpdir, "map.pgm")
        save_map_pgm(path, np.array([[1.0, 3.0], [np.nan, 2.0]]))
        with PILImage.open(path) as pil:
            arr = np.asarray(pil)
        np.testing.assert_array_equal(arr, [[0, 255], [0, 128]])


class TestNormaliseMap(unittest.TestCase):
    """Test normalise_map."""

    def test_constant_map(self):
        """Test a constant map becomes zeros."""
        np.testing.assert_array_equal(normalise_map(np.ones((2, 2))),
                                      np.zeros((2, 2)))

    def test_non_finite_cells(self):
        """Test non-finite cells map to zero."""
        out = normalise_map(np.array([0.0, np.inf, 4.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0, 1.0])


if __name__ == '__main__':
    unittest.main()
