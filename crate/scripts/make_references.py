"""Reference grids for the Allen-Cahn and Schrodinger problems.

Allen-Cahn is solved with its Dirichlet boundary values by Strang
splitting on a fine uniform grid (exact reaction step, Crank-Nicolson
diffusion). The periodic Schrodinger problem uses Fourier split-step
integration. Output uses the `nt,nx,tmin,tmax,...` grid
CSV read by `rang --reference`.

    python3 scripts/make_references.py data/
"""

import sys
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded


def write_grid(path, t, x, values):
    """values: array (nt, nx, components)."""
    nt, nx, comps = values.shape
    with open(path, "w") as f:
        f.write("nt,nx,tmin,tmax,xmin,xmax,components\n")
        f.write(f"{nt},{nx},{float(t[0])!r},{float(t[-1])!r},{float(x[0])!r},{float(x[-1])!r},{comps}\n")
        for row in values.reshape(nt, nx * comps):
            f.write(",".join(f"{v:.12e}" for v in row) + "\n")


def periodic_grid(lo, hi, n):
    x = lo + (hi - lo) * np.arange(n) / n
    k = 2 * np.pi / (hi - lo) * np.fft.fftfreq(n, d=1.0 / n)
    return x, k


def close_period(u):
    """Append the x = xmax column, equal to x = xmin by periodicity."""
    return np.concatenate([u, u[:, :1]], axis=1)


def allen_cahn(n=8192, nt=201, dt=2e-5, eps=1e-4, stride=16):
    """Dirichlet problem u(t, +-1) = -1 by Strang splitting: the reaction
    u' = 5u - 5u^3 is integrated exactly, diffusion by Crank-Nicolson on a
    uniform grid of n + 1 nodes."""
    x = np.linspace(-1.0, 1.0, n + 1)
    h = x[1] - x[0]
    u = x**2 * np.cos(np.pi * x)
    u[0] = u[-1] = -1.0
    m = n - 1
    lam = eps * dt / h**2
    ab = np.zeros((3, m))
    ab[0, 1:] = -lam / 2
    ab[1, :] = 1 + lam
    ab[2, :-1] = -lam / 2

    def react(v, tau):
        g = np.exp(5.0 * tau)
        return v * g / np.sqrt(1.0 + v * v * (g * g - 1.0))

    def diffuse(v):
        inner = v[1:-1]
        rhs = (1 - lam) * inner + lam / 2 * (v[:-2] + v[2:])
        rhs[0] += lam / 2 * v[0]
        rhs[-1] += lam / 2 * v[-1]
        out = v.copy()
        out[1:-1] = solve_banded((1, 1), ab, rhs)
        return out

    t_out = np.linspace(0.0, 1.0, nt)
    steps_per = int(round((t_out[1] - t_out[0]) / dt))
    out = [u.copy()]
    for _ in range(nt - 1):
        for _ in range(steps_per):
            u = react(diffuse(react(u, dt / 2)), dt / 2)
        out.append(u.copy())
    u = np.array(out)[:, ::stride]
    return t_out, x[::stride], u[:, :, None]


def schrodinger(n=256, nt=201, dt=1e-5):
    x, k = periodic_grid(-5.0, 5.0, n)
    u = (2.0 / np.cosh(x)).astype(complex)
    t_out = np.linspace(0.0, np.pi / 2, nt)
    steps_per = int(round((t_out[1] - t_out[0]) / dt))
    h = (t_out[1] - t_out[0]) / steps_per
    half = np.exp(-0.5j * k**2 * h / 2)
    out = [u.copy()]
    for _ in range(nt - 1):
        for _ in range(steps_per):
            u = np.fft.ifft(half * np.fft.fft(u))
            u = u * np.exp(1j * np.abs(u) ** 2 * h)
            u = np.fft.ifft(half * np.fft.fft(u))
        out.append(u.copy())
    u = close_period(np.array(out))
    return t_out, np.append(x, 5.0), np.stack([u.real, u.imag], axis=2)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    out.mkdir(parents=True, exist_ok=True)
    write_grid(out / "allen-cahn_reference.csv", *allen_cahn())
    write_grid(out / "schrodinger_reference.csv", *schrodinger())


if __name__ == "__main__":
    main()
