"""Decentralized sequential multihypothesis testing with maximin quantizers."""
__version__ = "0.1.0"
