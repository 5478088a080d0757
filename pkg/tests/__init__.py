"""Test suite for the spin bath decoherence toolkit."""
