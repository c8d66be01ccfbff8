"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations are called directly, so the comparison works whichever
backend ``permsec.kernels`` selected at import. Outputs are checked for
bit-for-bit agreement before timing.
"""

import argparse
import timeit

import numpy as np

from permsec import kernels


def _orbit_cases():
    return [(2, 16, 1), (2, 20, 1), (3, 12, 2), (2, 18, 3)]


def _affine_cases():
    return [(1024, 32, 32), (1024, 32, 16), (2048, 64, 64), (2048, 64, 1)]


def _time(fn, repeat):
    number = 1
    while min(timeit.repeat(fn, number=number, repeat=1)) < 0.05:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled extension not available (built with PERMSEC_NO_EXT=1 or PERMSEC_PURE=1 set);"
              " nothing to compare")
        return 1
    from permsec import _dense, _orbits

    print(f"{'kernel':<10} {'case':<18} {'cython ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for a, n, g in _orbit_cases():
        c_canon, c_logo = _orbits.orbit_table(a, n, g)
        f_canon, f_logo = kernels.orbit_table_fallback(a, n, g)
        assert np.array_equal(c_canon, f_canon) and np.allclose(c_logo, f_logo, rtol=0, atol=1e-12)
        tc = _time(lambda: _orbits.orbit_table(a, n, g), args.repeat)
        tf = _time(lambda: kernels.orbit_table_fallback(a, n, g), args.repeat)
        print(f"{'orbits':<10} {f'|X|={a} n={n} g={g}':<18} {tc * 1e3:>10.2f} {tf * 1e3:>10.2f} {tf / tc:>7.1f}x")
    rng = np.random.default_rng(0)
    for R, K, J in _affine_cases():
        x = rng.normal(size=(R, K))
        wt = rng.normal(size=(K, J))
        b = rng.normal(size=J)
        assert np.array_equal(_dense.affine(x, wt, b), kernels.affine_fallback(x, wt, b))
        tc = _time(lambda: _dense.affine(x, wt, b), args.repeat)
        tf = _time(lambda: kernels.affine_fallback(x, wt, b), args.repeat)
        print(f"{'affine':<10} {f'{R}x{K} -> {J}':<18} {tc * 1e3:>10.3f} {tf * 1e3:>10.3f} {tf / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
