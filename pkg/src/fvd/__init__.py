"""Fleming-Viot diffusion sampling over analytic priors."""

__version__ = "0.1.0"
