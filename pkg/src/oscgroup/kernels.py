"""Backend selection for the network integrator.

The compiled extension ``oscgroup._kernels`` is used when importable.
Setting ``OSCGROUP_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from oscgroup import _kernels_py

_compiled = None
if not os.environ.get("OSCGROUP_PURE_PYTHON"):
    try:
        from oscgroup import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = {"python": _kernels_py.integrate}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.integrate

BACKEND = "cython" if "cython" in BACKENDS else "python"

_EMPTY_PTR = np.zeros(1, dtype=np.int32)
_EMPTY_IDX = np.zeros(0, dtype=np.int32)
_EMPTY_VAL = np.zeros(0, dtype=np.float64)


def _csr_parts(mat):
    return (
        np.ascontiguousarray(mat.indptr, dtype=np.int32),
        np.ascontiguousarray(mat.indices, dtype=np.int32),
        np.ascontiguousarray(mat.data, dtype=np.float64),
    )


def integrate(v0, w0, drive, adjacency, params, dt, n_steps, sample_every=1,
              projection=None, knode=None, record_w=False, backend=None):
    """Integrate the coupled network with fixed-step RK4.

    Parameters
    ----------
    v0, w0, drive : (n,) arrays
    adjacency : scipy.sparse matrix
        Symmetric gain matrix with zero diagonal; coupling on node ``i`` is
        ``sum_j K_ij (x_j - x_i)``.
    projection : scipy.sparse matrix, optional
        ``(m, n)`` matrix ``P``; adds ``-knode_i (P^T P x)_i`` to node ``i``.
    sample_every : int
        Record one sample every this many steps (plus the initial state).

    Returns
    -------
    v, w, out_v, out_w, failure
        ``failure`` is ``None`` or ``(step, index)`` of the first non-finite value.
    """
    fn = BACKENDS[backend or BACKEND]
    v = np.array(v0, dtype=np.float64, copy=True)
    w = np.array(w0, dtype=np.float64, copy=True)
    drive = np.ascontiguousarray(drive, dtype=np.float64)
    n = v.shape[0]
    indptr, indices, gains = _csr_parts(adjacency.tocsr())
    if projection is not None and projection.shape[0] > 0:
        proj = projection.tocsr()
        p_parts = _csr_parts(proj)
        pt_parts = _csr_parts(proj.T.tocsr())
        knode = np.ascontiguousarray(knode, dtype=np.float64)
    else:
        p_parts = (_EMPTY_PTR, _EMPTY_IDX, _EMPTY_VAL)
        pt_parts = (np.zeros(n + 1, dtype=np.int32), _EMPTY_IDX, _EMPTY_VAL)
        knode = np.zeros(n)
    n_samples = n_steps // sample_every + 1
    out_v = np.empty((n_samples, n))
    out_w = np.empty((n_samples, n)) if record_w else None
    bad_step, bad_index = fn(
        v, w, drive, indptr, indices, gains, *p_parts, *pt_parts, knode,
        float(params.alpha), float(params.c), float(params.beta_s), float(dt),
        int(n_steps), int(sample_every), out_v, out_w,
    )
    failure = None if bad_step < 0 else (int(bad_step), int(bad_index))
    return v, w, out_v, out_w, failure
