"""Squeezed-light generation in Kerr ring resonators: rates, noise spectra and waveguide modes."""

__version__ = "0.1.0"
