"""Koopman-LQR force regulation for a deformable swab tool, on a surrogate plant."""
