"""Single-carrier sub-THz waveform learning under phase noise."""

__version__ = "0.1.0"
