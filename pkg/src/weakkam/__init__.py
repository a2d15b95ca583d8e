"""Numerical Aubry-Mather and weak KAM theory on the flat torus."""
