"""Virtual fringe projection profilometry: rendering, phase retrieval, temporal
unwrapping with a refined reference phase, triangulation, and a small
two-branch fusion network trained with phase-aware losses.

Submodules are imported explicitly (``from fringephase import unwrap``) so
that the command-line tool can configure threading before numpy loads.
"""

__version__ = "0.1.0"
