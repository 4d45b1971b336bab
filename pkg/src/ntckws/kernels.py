"""Kernel dispatch: the compiled extension when importable, else pure Python.

``use_backend("python")`` / ``use_backend("compiled")`` switches at runtime
(tests and the benchmark compare both).
"""

from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_impl: ModuleType = _ckernels if _ckernels is not None else _pykernels

(HI_STATE, HI_START, HI_NREAL, HI_NWILD, HI_NCLOSED, HI_CUR, HI_COUNTED,
 HI_PARENT, HI_COL) = range(9)
HF_SCORE, HF_SUM, HF_BEST, HF_LP = range(4)
N_HI, N_HF = _pykernels.N_HI, _pykernels.N_HF
COL_BLANK, COL_REAL, COL_SELF_LOOP, COL_BYPASS = range(4)


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _ckernels is not None else [])


def backend() -> str:
    return _impl.BACKEND


def use_backend(name: str) -> None:
    global _impl
    if name == "python":
        _impl = _pykernels
    elif name == "compiled":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        _impl = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def get_module(name: str) -> ModuleType:
    if name == "compiled" and _ckernels is None:
        raise ImportError("compiled kernels are not built")
    return _pykernels if name == "python" else _ckernels


def log_sum(values) -> float:
    return _impl.log_sum(values)


def lattice_forward(num_states, start, arc_src, arc_dst, arc_weight):
    return _impl.lattice_forward(num_states, start, arc_src, arc_dst, arc_weight)


def lattice_backward(num_states, arc_src, arc_dst, arc_weight, final_weight):
    return _impl.lattice_backward(num_states, arc_src, arc_dst, arc_weight, final_weight)


def lattice_viterbi(num_states, start, arc_src, arc_dst, arc_weight):
    return _impl.lattice_viterbi(num_states, start, arc_src, arc_dst, arc_weight)


def token_pass_step(frame_lp, t, hi, hf, arc_start, arc_col, arc_w, arc_next, arc_tag,
                    col_kind, region, slot):
    return _impl.token_pass_step(frame_lp, t, hi, hf, arc_start, arc_col, arc_w, arc_next,
                                 arc_tag, col_kind, region, slot)
