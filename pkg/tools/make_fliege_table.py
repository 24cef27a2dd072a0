"""Regenerate the packaged Fliege-type node tables.

Nodes are obtained by minimising the Coulomb energy of (N+1)^2 points on the
unit sphere; weights are the interpolatory cubature weights that integrate
every spherical harmonic up to order N exactly (the Fliege-Maier
construction). Run once; the output file is versioned together with its
SHA-256 digest in ``mcainterp.grids``.

    python tools/make_fliege_table.py src/mcainterp/data/fliege.npz
"""

import hashlib
import sys

import numpy as np
from scipy.optimize import minimize

sys.path.insert(0, "src")
from mcainterp.sh import real_sh_matrix  # noqa: E402

MAX_ORDER = 29


def spiral_start(num):
    k = np.arange(num) + 0.5
    z = 1.0 - 2.0 * k / num
    phi = np.pi * (1.0 + 5.0 ** 0.5) * k
    r = np.sqrt(1.0 - z**2)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def energy_and_grad(flat, num):
    x = flat.reshape(num, 3)
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    u = x / norm
    diff = u[:, None, :] - u[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    energy = 0.5 * np.sum(1.0 / dist)
    g_u = -np.sum(diff / dist[..., None] ** 3, axis=1)
    # chain rule through the projection u = x / |x|
    g_x = (g_u - np.sum(g_u * u, axis=1, keepdims=True) * u) / norm
    return energy, g_x.ravel()


def _relax(start, num):
    res = minimize(energy_and_grad, start.ravel(), args=(num,),
                   jac=True, method="L-BFGS-B",
                   options={"maxiter": 4000, "gtol": 1e-7, "ftol": 1e-15})
    x = res.x.reshape(num, 3)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def fliege_nodes(order, restarts=6):
    """Relaxed node set whose interpolatory weights are positive.

    The spiral start is tried first; jittered restarts only run when it fails.
    """
    num = (order + 1) ** 2
    rhs = np.zeros(num)
    rhs[0] = 1.0 / np.sqrt(4.0 * np.pi)
    best = None
    for seed in range(restarts):
        start = spiral_start(num)
        if seed:
            start = start + np.random.default_rng(seed).normal(0.0, 0.05, start.shape)
        x = _relax(start, num)
        az = np.degrees(np.arctan2(x[:, 1], x[:, 0])) % 360.0
        el = np.degrees(np.arcsin(np.clip(x[:, 2], -1.0, 1.0)))
        y = real_sh_matrix(order, np.radians(az), np.radians(el))
        w = np.linalg.solve(y.T, rhs)
        cond = np.linalg.cond(y)
        if np.all(w > 0) and (best is None or cond < best[0]):
            best = (cond, az, el, w)
            break
    if best is None:
        raise RuntimeError(f"no positive-weight node set found for order {order}")
    cond, az, el, w = best
    return az, el, w / w.sum(), cond


def main(path):
    tables = {}
    for order in range(1, MAX_ORDER + 1):
        az, el, w, cond = fliege_nodes(order)
        tables[f"n{(order + 1) ** 2}"] = np.column_stack([az, el, w])
        print(f"order {order:2d}: {az.size:4d} points, "
              f"weight ratio {w.max() / w.min():.3f}, cond {cond:.1f}", flush=True)
    np.savez_compressed(path, **tables)
    with open(path, "rb") as fh:
        print("sha256", hashlib.sha256(fh.read()).hexdigest())


if __name__ == "__main__":
    main(sys.argv[1])
