"""Recurrent spiking networks, dual-autoencoder layer extraction and
topological comparison of learned spike representations."""

__version__ = "0.1.0"
