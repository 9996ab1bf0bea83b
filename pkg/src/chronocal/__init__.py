"""chronocal: fact-duration prediction and misalignment-aware confidence calibration."""

__version__ = "0.1.0"
