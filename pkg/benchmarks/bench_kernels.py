"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--level 7] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from lodgfem import _kernels
from lodgfem.assembly import assemble
from lodgfem.coeff import random_field
from lodgfem.mesh import build_mesh


def _pcg_case(fem):
    A = fem.mass + 0.01 * fem.stiffness
    inv_diag = 1.0 / A.diagonal()
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    return A, inv_diag, b


def bench(level, repeat):
    mesh = build_mesh(level)
    fem = assemble(mesh, random_field(min(4, level), 0.1, 1e5, 1))
    nodes = np.ascontiguousarray(mesh.nodes, dtype=np.float64)
    elements = np.ascontiguousarray(mesh.elements, dtype=np.int64)
    coeff = fem.element_coeff
    A, inv_diag, b = _pcg_case(fem)

    backends = [("python", _kernels.python_backend)]
    if _kernels.compiled_backend is not None:
        backends.append(("cython", _kernels.compiled_backend))

    results = {}
    for name, mod in backends:
        def local():
            mod.p1_local_matrices(nodes, elements, coeff)

        def pcg():
            x = np.zeros_like(b)
            mod.pcg_csr(A.indptr, A.indices, A.data, inv_diag, b, x, 1e-10, 10 * len(b))

        results[name] = (min(timeit.repeat(local, number=1, repeat=repeat)),
                         min(timeit.repeat(pcg, number=1, repeat=repeat)))

    print(f"level {level}: {mesh.n_elements} elements, {A.shape[0]} interior nodes")
    print(f"{'backend':<8} {'local matrices [ms]':>20} {'pcg [ms]':>10}")
    for name, (t_loc, t_pcg) in results.items():
        print(f"{name:<8} {1e3 * t_loc:>20.2f} {1e3 * t_pcg:>10.2f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup  {py[0] / cy[0]:>20.1f}x {py[1] / cy[1]:>9.1f}x")
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    bench(args.level, args.repeat)


if __name__ == "__main__":
    main()
