"""Linear-programming engine and the LP-relaxation decoders."""

from .programs import (DEFAULT_EPS0, LP_TIE_TOL, KktReport, LpDecodeResult, build_lp0a,
                       build_lp1, build_lp2, decode_colpal, decode_lp, decode_rolpal,
                       decode_rolpalpp, default_psi_lp, kkt_check)
from .simplex import (LpProblem, LpSolution, NumericalFailure, dump_lp, load_lp, solve_lp,
                      solve_lp_rowgen)

__all__ = [
    "DEFAULT_EPS0", "LP_TIE_TOL", "KktReport", "LpDecodeResult", "LpProblem", "LpSolution",
    "NumericalFailure", "build_lp0a", "build_lp1", "build_lp2", "decode_colpal", "decode_lp",
    "decode_rolpal", "decode_rolpalpp", "default_psi_lp", "dump_lp", "kkt_check", "load_lp",
    "solve_lp", "solve_lp_rowgen",
]
