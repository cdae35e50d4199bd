"""Pure numpy RK4 integrator, used when the compiled extension is missing.

Same signature and in-place semantics as the Cython ``integrate``.
"""
import numpy as np


class _Rhs:
    def __init__(self, drive, indptr, indices, gains, p_indptr, p_indices, p_data,
                 pt_indptr, pt_indices, pt_data, knode, alpha, c, beta):
        n = drive.shape[0]
        self.n = n
        self.drive = drive
        self.alpha, self.c, self.beta = alpha, c, beta
        self.rows = np.repeat(np.arange(n), np.diff(indptr))
        self.cols = np.asarray(indices, dtype=np.intp)
        self.gains = gains
        n_proj = max(p_indptr.shape[0] - 1, 0)
        self.n_proj = n_proj
        if n_proj:
            self.p_rows = np.repeat(np.arange(n_proj), np.diff(p_indptr))
            self.p_cols = np.asarray(p_indices, dtype=np.intp)
            self.p_data = p_data
            self.pt_rows = np.repeat(np.arange(n), np.diff(pt_indptr))
            self.pt_cols = np.asarray(pt_indices, dtype=np.intp)
            self.pt_data = pt_data
            self.knode = knode

    def __call__(self, v, w):
        n = self.n
        v2 = v * v
        v3 = v2 * v
        v7 = v3 * v3 * v
        vi = v[self.rows]
        wi = w[self.rows]
        cv = np.bincount(self.rows, weights=self.gains * (v[self.cols] - vi), minlength=n)
        cw = np.bincount(self.rows, weights=self.gains * (w[self.cols] - wi), minlength=n)
        dv = 3.0 * v - v3 - v7 + 2.0 - w + self.drive + cv
        dw = self.c * (self.alpha * (1.0 + np.tanh(self.beta * v)) - w) + cw
        if self.n_proj:
            rv = np.bincount(self.p_rows, weights=self.p_data * v[self.p_cols], minlength=self.n_proj)
            rw = np.bincount(self.p_rows, weights=self.p_data * w[self.p_cols], minlength=self.n_proj)
            sv = np.bincount(self.pt_rows, weights=self.pt_data * rv[self.pt_cols], minlength=n)
            sw = np.bincount(self.pt_rows, weights=self.pt_data * rw[self.pt_cols], minlength=n)
            dv = dv - self.knode * sv
            dw = dw - self.knode * sw
        return dv, dw


def integrate(v, w, drive, indptr, indices, gains, p_indptr, p_indices, p_data,
              pt_indptr, pt_indices, pt_data, knode, alpha, c, beta, dt,
              n_steps, sample_every, out_v, out_w=None):
    rhs = _Rhs(drive, indptr, indices, gains, p_indptr, p_indices, p_data,
               pt_indptr, pt_indices, pt_data, knode, alpha, c, beta)
    h2 = 0.5 * dt
    h6 = dt / 6.0
    x, y = v.copy(), w.copy()
    out_v[0] = x
    if out_w is not None:
        out_w[0] = y
    with np.errstate(over="ignore", invalid="ignore"):
        return _loop(rhs, x, y, v, w, dt, h2, h6, n_steps, sample_every, out_v, out_w)


def _loop(rhs, x, y, v, w, dt, h2, h6, n_steps, sample_every, out_v, out_w):
    row = 0
    for s in range(n_steps):
        k1v, k1w = rhs(x, y)
        k2v, k2w = rhs(x + h2 * k1v, y + h2 * k1w)
        k3v, k3w = rhs(x + h2 * k2v, y + h2 * k2w)
        k4v, k4w = rhs(x + dt * k3v, y + dt * k3w)
        x = x + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        y = y + h6 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        bad = ~(np.isfinite(x) & np.isfinite(y))
        if bad.any():
            v[:] = x
            w[:] = y
            return s, int(np.argmax(bad))
        if (s + 1) % sample_every == 0:
            row += 1
            out_v[row] = x
            if out_w is not None:
                out_w[row] = y
    v[:] = x
    w[:] = y
    return -1, -1
