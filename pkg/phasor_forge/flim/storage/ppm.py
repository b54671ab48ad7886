# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

import io

from PIL import Image

from phasor_forge.flim.render.render import RgbImage
from phasor_forge.utils import atomic_path


def dump_ppm(img):
	"""Binary P6 bytes: "P6\\n<width> <height>\\n255\\n" then RGB rows top to bottom."""
	out = io.BytesIO()
	img.to_pil().save(out, format="PPM")
	return out.getvalue()


def write_ppm(img, path):
	with atomic_path(path) as tmp:
		img.to_pil().save(tmp, format="PPM")


def read_ppm(path):
	with Image.open(path) as img:
		return RgbImage.from_pil(img)
