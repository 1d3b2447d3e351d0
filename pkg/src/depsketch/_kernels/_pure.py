"""Pure-numpy versions of the sequential kernels.

Each function mirrors ``_core.pyx`` operation for operation (same
accumulation order, no transcendental calls), so the two backends agree
bit for bit.
"""
import numpy as np


def squash(f):
    """Odd map onto (-1, 1) built from exactly rounded operations only."""
    return f / (1.0 + np.abs(f))


def ar1_filter(innov, rho, f0):
    """f[:, 0] = f0, f[:, k] = rho * f[:, k-1] + innov[:, k-1]."""
    innov = np.ascontiguousarray(innov, dtype=np.float64)
    b, k = innov.shape
    out = np.empty((b, k + 1))
    out[:, 0] = f0
    for j in range(k):
        out[:, j + 1] = rho * out[:, j] + innov[:, j]
    return out


def modulated_sequence(z, eta, f0, rho, amp, adaptive):
    """Sequential entries ``x_k = sqrt(1 + amp * squash(f_k)) * z_k``.

    The latent state advances after each entry: from the sign of the entry
    just produced when ``adaptive``, else from the exogenous ``eta``.
    Returns ``(x, f)`` with ``f[:, k]`` the state that modulated entry k.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    b, k = z.shape
    c = np.sqrt(1.0 - rho * rho)
    x = np.empty((b, k))
    f = np.empty((b, k))
    state = np.array(np.broadcast_to(f0, (b,)), dtype=np.float64)
    for j in range(k):
        f[:, j] = state
        v = 1.0 + amp * squash(state)
        x[:, j] = np.sqrt(v) * z[:, j]
        if adaptive:
            drive = np.sign(z[:, j])
        else:
            drive = eta[:, j]
        state = rho * state + c * drive
    return x, f


def weighted_subset_rows(u, n, beta):
    """Pick ``d`` distinct rows per column, tilted against busy rows.

    ``u`` has shape (S, P, d) of uniforms in [0, 1). Column j of sketch s
    draws rows without replacement with weight ``1 / (1 + beta * occ[r])``,
    where ``occ`` counts picks made by columns < j.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    s, p, d = u.shape
    rows = np.empty((s, p, d), dtype=np.int64)
    occ = np.zeros((s, n))
    idx = np.arange(s)
    for j in range(p):
        w = 1.0 / (1.0 + beta * occ)
        for l in range(d):
            total = np.cumsum(w, axis=1)
            target = u[:, j, l] * total[:, -1]
            r = np.sum(total <= target[:, None], axis=1)
            # zero-weight tail can push r past the last live row
            r = np.minimum(r, n - 1)
            while True:
                dead = w[idx, r] == 0.0
                if not dead.any():
                    break
                r = np.where(dead, r - 1, r)
            rows[:, j, l] = r
            w[idx, r] = 0.0
        for l in range(d):
            occ[idx, rows[:, j, l]] += 1.0
    return rows


def countsketch_apply_batch(rows, signs, u, n, scale):
    """out[s, rows[s, j, l]] += signs[s, j, l] * u[j] * scale."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    signs = np.ascontiguousarray(signs, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    s, p, d = rows.shape
    out = np.zeros((s, n))
    idx = np.arange(s)
    for j in range(p):
        uj = u[j] * scale
        for l in range(d):
            out[idx, rows[:, j, l]] += signs[:, j, l] * uj
    return out
