"""Variable-density node generation for meshless discretizations."""
from __future__ import annotations

from .geometry import (BoundaryDiscretization, Domain, difference, discretize_boundary,
                       from_predicate, make_ball, make_box, parse_domain, shrinking_domain)
from .spacing import (GrayImage, SpacingField, analytic_spacing, constant_spacing,
                      estimate_count, image_spacing, read_pgm, write_pgm)
from .spatial import BackgroundGrid, KDTree, SpatialIndex
from .pnp import CandidateStrategy, FillResult, pnp_fill

__version__ = "0.1.0"
