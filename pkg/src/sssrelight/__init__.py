"""Real-time relighting and live material editing for translucent objects.

Pipeline: the dipole diffuse-scattering response is factored by PCA into
material-independent radial bases; per-basis scattering-transfer matrices
are precomputed over a quadtree-flattened surface and compressed twice
(Haar over transport, CDF 9/7 over space); relighting then reduces to a few
sparse products, and material edits touch only the basis weights.
"""

__version__ = "0.1.0"

from . import _accel

__all__ = ["__version__", "_accel"]
