"""Quasi-random discrete ordinates solver for 2D radiative transfer."""
