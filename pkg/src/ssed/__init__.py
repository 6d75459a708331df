"""Mask-conditional 3D semantic scene generation.

Two-stage pipeline: a triplane scene autoencoder compresses labeled voxel
grids into three orthogonal feature planes, and a conditional diffusion model
generates those latents from per-class trimask conditioning.  Ships with a
trimask asset system, evaluation metrics, an HTTP service and a CLI.
"""

__version__ = "0.1.0"
