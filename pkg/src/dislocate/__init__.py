"""Core-radius and renormalized energies of screw dislocations in convex planar domains."""

__version__ = "0.1.0"
