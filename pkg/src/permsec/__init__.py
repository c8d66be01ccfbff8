"""Permutation-keyed physical layer security for semantic communication.

Alice shuffles the rows and columns of her semantic features with a key
shared with Bob; Eve, holding the same decoder architecture but no key,
sees an (approximately) uniformly permuted observation.
"""

from .channel import ChannelModel, bsc_capacity
from .kernels import BACKEND
from .secrecy import SecrecyReport, eve_rate_bound, secrecy_capacity
from .shuffle import PermKey, key_rate, sample_key

__version__ = "0.1.0"

__all__ = ["BACKEND", "ChannelModel", "PermKey", "SecrecyReport", "bsc_capacity", "eve_rate_bound",
           "key_rate", "sample_key", "secrecy_capacity", "__version__"]
