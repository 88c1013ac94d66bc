"""No-U-Turn sampling with latent Hamiltonian neural network gradients."""

__version__ = "0.1.0"
