"""Speech separation with perceptual embedding losses, on a small numpy autograd."""

__version__ = "0.1.0"
