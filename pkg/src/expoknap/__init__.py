"""Solution sets of knapsack and exponent equations in free groups, in free
groups relative to finitely generated subgroups, and in HNN-extensions whose
stable letters centralize the associated subgroups."""

from .words import Alphabet, KnapsackExpr, Word, expr, free_reduce
from .presburger import (
    EffortExceeded,
    Formula,
    LinearSet,
    PresAutomaton,
    SemilinearRep,
    SolutionSet,
    UNAVAILABLE,
    extract_semilinear,
    formula_to_set,
    from_linear,
)
from .automata import Nfa, Transducer, parikh, transducer_to_pair_nfa, trim
from .freegroup import StallingsGraph, centralizer, stallings_build, subgroup_language
from .wordeq import two_power_eq
from .relknap import RelKnapConfig, SideSpec, ball_transducer, divide_coords, pair_parikh, polygon_set, rel_sol
from .hnn import (
    GuessRecord,
    HnnGroup,
    britton_reduce,
    equals_one,
    exponent_sol,
    in_base,
    lemma2dim_set,
    mult_reduce,
    remark1dim_set,
    sol,
    well_behaved_decompose,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
