"""Domain services: special functions, spectral kernels, samplers and verification checks."""
