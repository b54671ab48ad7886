# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt


class PhasorForgeError(Exception):
	exit_code = 1


class ValidationError(PhasorForgeError):
	exit_code = 2


class FormatError(PhasorForgeError):
	exit_code = 3


class NumericError(PhasorForgeError):
	exit_code = 4


# validation
class RegionOutOfBounds(ValidationError):
	pass


class KTooLargeForExactMatching(ValidationError):
	pass


class PaletteTooSmall(ValidationError):
	pass


# file formats and model shapes
class BadMagic(FormatError):
	pass


class TruncatedFile(FormatError):
	pass


class ShapeChainBroken(FormatError):
	pass


class DtypeUnsupported(FormatError):
	pass


class LengthMismatch(FormatError):
	pass


class ModelShapeMismatch(FormatError):
	pass


# numerics
class DegeneratePhasor(NumericError):
	pass


class ConstantStack(NumericError):
	pass


class ZeroReference(NumericError):
	pass


class DivergedLoss(NumericError):
	pass


class TooFewDistinctPoints(NumericError):
	pass
