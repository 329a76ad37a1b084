"""Minimal SDPA-compatible command: ``python -m csls.sdp.sdpa_runner in.dat-s out [maxiter]``.

Solves the file with the ``sdpap`` package and writes the result in the
standard SDPA output layout (``phase.value``, ``objValPrimal``, ``xVec``).
"""

from __future__ import annotations

import sys


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2:
        print("usage: sdpa_runner INPUT OUTPUT [MAXITER]", file=sys.stderr)
        return 4
    inp, out = argv[0], argv[1]
    maxiter = int(argv[2]) if len(argv) > 2 else 500
    try:
        import sdpap
    except ImportError:
        print("sdpa-python (module sdpap) is not installed", file=sys.stderr)
        return 5
    A, b, c, K, J = sdpap.importsdpa(inp)
    opts = {"print": "no", "maxIteration": maxiter, "epsilonStar": 1e-9, "epsilonDash": 1e-9}
    x, y, info, _, _ = sdpap.solve(A, b, c, K, J, opts)
    # with the sign flip on import, the SDPA primal vector is returned as y
    vec = [float(v) for v in y.toarray().ravel()] if hasattr(y, "toarray") else [float(v) for v in y]
    phase = str(info.get("phasevalue", "noINFO"))
    with open(out, "w") as fh:
        fh.write(f"phase.value = {phase}\n")
        fh.write(f"   Iteration = {int(info.get('iteration', 0) or 0)}\n")
        fh.write(f"objValPrimal = {float(-info.get('primalObj', 0.0))!r}\n")
        fh.write(f"objValDual   = {float(-info.get('dualObj', 0.0))!r}\n")
        fh.write("xVec = \n{" + ",".join(repr(v) for v in vec) + "}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
