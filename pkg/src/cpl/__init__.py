"""Simulation lab for privacy-preserving continuous-time average consensus."""
