"""Audio super-resolution toolkit: GAN training on a self-contained autodiff engine."""

__version__ = "0.1.0"
