"""Time-domain fluorescence diffuse optical tomography: forward solver and accelerated Landweber inversion."""

__version__ = "0.1.0"
