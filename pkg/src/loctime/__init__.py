"""Monte Carlo laboratory for simple random walk local time: excursion and
branching identities, the Gaussian limit process, Skorokhod-type couplings
and statistical verification."""

__version__ = "0.1.0"

from .rng import RngStream  # noqa: E402

__all__ = ["RngStream", "__version__"]
