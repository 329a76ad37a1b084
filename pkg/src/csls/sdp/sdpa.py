"""SDPA sparse-format (.dat-s) exchange.

Problem files follow the SDPA primal convention
``min c^T x  s.t.  sum_k x_k F_k - F_0 >= 0``, so a cone
``G0 + sum_k x_k G_k >= 0`` is written with ``F_0 = -G0`` and ``F_k = G_k``.
Variables are the packed coordinates used internally: symmetric matrix
variables in column-major lower-triangular order with off-diagonal
coordinates scaled by sqrt(2).  A solution vector ``x`` maps back to matrices
through :meth:`MatrixVariable.unpack`.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from ..errors import ModelError, SolverError
from .program import ConicProgram, SolveResult

ENV_COMMAND = "CSLS_SDPA_COMMAND"


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_sdpa(prog: ConicProgram, path) -> Path:
    cones = [c for c in prog.cones if c.size]
    if not cones:
        raise ModelError("empty constraint list")
    N = prog.num_scalars
    lines = [
        str(N),
        str(len(cones)),
        " ".join(str(c.size) for c in cones),
        " ".join(_fmt(v) for v in prog.c) if N else "",
    ]
    for b, c in enumerate(cones, start=1):
        mats = [(0, -c.F0)] + [(k + 1, c.F[:, :, k]) for k in range(N)]
        for k, M in mats:
            ii, jj = np.nonzero(np.triu(M))
            for i, j in zip(ii, jj):
                lines.append(f"{k} {b} {i + 1} {j + 1} {_fmt(M[i, j])}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_sdpa_problem(path) -> tuple[np.ndarray, list[int], list[np.ndarray]]:
    """Parse a .dat-s file into ``(c, block sizes, [F_0, F_1, ...] per block)``."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line[0] in "*\"":
            continue
        tokens.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(tokens[0].split()[0])
    nb = int(tokens[1].split()[0])
    sizes = [int(s) for s in tokens[2].split()[:nb]]
    c = np.array([float(s) for s in tokens[3].split()[:m]]) if m else np.zeros(0)
    mats = [np.zeros((m + 1, abs(s), abs(s))) for s in sizes]
    for t in tokens[4:]:
        k, b, i, j, v = t.split()[:5]
        k, b, i, j = int(k), int(b) - 1, int(i) - 1, int(j) - 1
        mats[b][k, i, j] = mats[b][k, j, i] = float(v)
    return c, sizes, mats


def read_sdpa_solution(path, prog: ConicProgram | None = None) -> SolveResult:
    """Read an SDPA-style result (``phase.value``/``xVec``) or a CSDP solution file."""
    text = Path(path).read_text()
    if not text.strip():
        raise SolverError(f"solution file {path} is empty")
    if "xVec" in text:
        phase = re.search(r"phase\.value\s*=\s*(\S+)", text)
        phase = phase.group(1) if phase else "unknown"
        m = re.search(r"xVec\s*=\s*\{([^}]*)\}", text, re.S)
        if not m:
            raise SolverError("malformed solution file: xVec is not a brace list")
        try:
            x = np.array([float(v) for v in m.group(1).replace("\n", " ").split(",") if v.strip()])
        except ValueError as exc:
            raise SolverError(f"malformed solution file: {exc}") from None
        it = re.search(r"Iteration\s*=\s*(\d+)", text)
        iters = int(it.group(1)) if it else 0
    else:
        first = text.strip().splitlines()[0]
        try:
            x = np.array([float(v) for v in first.split()])
        except ValueError:
            raise SolverError("malformed solution file: unrecognized layout") from None
        phase, iters = "pdOPT", 0
    status = _phase_status(phase)
    if prog is not None and x.size != prog.num_scalars:
        raise SolverError(f"solution has {x.size} entries, program has {prog.num_scalars} variables")
    if status != "optimal":
        return SolveResult(status, iterations=iters, solver="sdpa", message=phase)
    values = prog.unpack(x) if prog is not None else None
    obj = prog.objective(x) if prog is not None else None
    return SolveResult("optimal", values, x, obj, None, iters, "sdpa", phase)


def _phase_status(phase: str) -> str:
    if phase in ("pdOPT", "pFEAS", "pdFEAS", "pFEAS_dINF"):
        return "optimal"
    if phase in ("pINF_dFEAS", "pINF", "pdINF", "pINF_dINF"):
        return "infeasible"
    return "numerical-failure"


def run_external(prog: ConicProgram, max_iters: int = 500) -> dict:
    """Emit, run an external SDPA-family solver, and read the solution back.

    The command comes from ``CSLS_SDPA_COMMAND`` (a template with ``{input}``
    and ``{output}`` placeholders); the default runs the bundled runner.
    """
    template = os.environ.get(ENV_COMMAND)
    with tempfile.TemporaryDirectory(prefix="csls-sdpa-") as tmp:
        inp, out = Path(tmp) / "problem.dat-s", Path(tmp) / "problem.out"
        emit_sdpa(prog, inp)
        if template:
            cmd = shlex.split(template.format(input=str(inp), output=str(out)))
        else:
            cmd = [sys.executable, "-m", "csls.sdp.sdpa_runner", str(inp), str(out), str(max_iters)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if not out.exists():
            raise SolverError(f"external solver produced no output: {proc.stderr.strip()[-400:]}")
        res = read_sdpa_solution(out, prog)
    if res.status == "optimal":
        return {"x": res.x, "status": "optimal", "iterations": res.iterations}
    return {"x": None, "status": res.status, "iterations": res.iterations}
