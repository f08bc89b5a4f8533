"""Executable model of DNSSEC: signed zones, authenticated denial,
a validating resolver with a concurrent cache, and an active network
adversary, exercised by a seeded property harness."""

__version__ = "0.1.0"
