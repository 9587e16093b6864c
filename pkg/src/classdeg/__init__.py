"""Class degree, relative joinings, and splicing for 1-block factor codes on SFTs."""

__version__ = "0.1.0"
