"""starq: star-product coefficient engine and CP^1 quantization harness."""

__version__ = "0.1.0"
