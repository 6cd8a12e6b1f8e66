"""Finite linear quotients, equivariant lifting and orbifold atlases."""
from .atlas import (DIFFEOLOGICAL, HAEFLIGER, SATAKE, Chart, Identification, OrbifoldPresentation,
                    Transition, ValidationReport, atlases_equivalent, compare_atlases,
                    haefliger_compatible, image_is_component, injection_unique_factor, reglue,
                    restrict_family, selection_from, structure_group_at,
                    structure_group_consistency, validate, validate_defining_family,
                    validate_injection, validate_lus)
from .atlas_io import atlas_from_dict, atlas_to_dict, dump_atlas, parse_atlas, presentations_equal
from .counterexamples import (SignSequence, atlas_fixture, bump, example1_map, example2_map,
                              football, halfangle_map, mirror, teardrop)
from .errors import *  # noqa: F401,F403
from .expr import Annulus, Ball, FullSpace, MapExpr, parse_expr, parse_map
from .group import (FiniteMatrixGroup, close_generators, conjugate_in_gl, cyclic_rotations,
                    invariant_gram, is_reflection, minus_identity_group, orbit, stabilizer,
                    trivial_group)
from .lifting import (LiftReport, QuotientMap, induced_homomorphism, monodromy, path_lift,
                      radial_lift_extension, stabilizer_transport, unique_group_element)
from .numeric import APPROX, EXACT, Mode
from .quotient import LinearQuotient, canonical_rep, same_orbit, slice_chart

__version__ = "0.1.0"
