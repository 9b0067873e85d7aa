"""Plain-text problem instances.

Layout (blank lines and ``#`` comments ignored)::

    L U
    re im        # L*U lines, H[0,0], H[0,1], ..., H[L-1,U-1]
    P_1 ... P_U
    sigma2_1 ... sigma2_L
    mu_1 ... mu_U
    C
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import VmacError
from .rates import ChannelState


class InstanceParseError(VmacError, ValueError):
    def __init__(self, line: int, column: int, message: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True)
class Instance:
    cs: ChannelState
    weights: np.ndarray
    C: float


def _tokens(text: str):
    """Yield (line_no, [(column, token), ...]) for each non-empty line."""
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        toks = []
        col = 0
        for tok in body.split():
            col = body.index(tok, col)
            toks.append((col + 1, tok))
            col += len(tok)
        if toks:
            yield n, toks


def _numbers(line, toks, count, kind=float, what="value"):
    if len(toks) != count:
        col = toks[count][0] if len(toks) > count else toks[-1][0]
        raise InstanceParseError(line, col, f"expected {count} {what}(s), found {len(toks)}")
    out = []
    for col, tok in toks:
        try:
            out.append(kind(tok))
        except ValueError:
            raise InstanceParseError(line, col, f"cannot parse {tok!r} as {kind.__name__}") from None
        if kind is float and not np.isfinite(out[-1]):
            raise InstanceParseError(line, col, f"non-finite {what}")
    return out


def parse_instance(text: str) -> Instance:
    lines = list(_tokens(text))
    if not lines:
        raise InstanceParseError(1, 1, "empty instance")
    n, toks = lines[0]
    L, U = _numbers(n, toks, 2, int, "dimension")
    if L < 1 or U < 1:
        raise InstanceParseError(n, 1, "dimensions must be positive")
    need = 1 + L * U + 4
    if len(lines) != need:
        n_last = lines[-1][0]
        raise InstanceParseError(n_last + (len(lines) < need), 1, f"expected {need} data lines, found {len(lines)}")
    H = np.empty((L, U), dtype=complex)
    for k in range(L * U):
        n, toks = lines[1 + k]
        re, im = _numbers(n, toks, 2, float, "number")
        H[k // U, k % U] = complex(re, im)
    rest = lines[1 + L * U:]
    P = np.array(_numbers(*rest[0], U, float, "power"))
    s2 = np.array(_numbers(*rest[1], L, float, "noise variance"))
    mu = np.array(_numbers(*rest[2], U, float, "weight"))
    (C,) = _numbers(*rest[3], 1, float, "budget")
    checks = [
        (rest[0], np.any(P < 0), "powers must be nonnegative"),
        (rest[1], np.any(s2 <= 0), "noise variances must be positive"),
        (rest[2], np.any(mu < 0), "weights must be nonnegative"),
        (rest[3], C <= 0, "budget must be positive"),
    ]
    for (n, toks), bad, msg in checks:
        if bad:
            raise InstanceParseError(n, toks[0][0], msg)
    if not np.iscomplexobj(H) or np.all(H.imag == 0):
        H = H.real
    return Instance(ChannelState(H, P, s2), mu, float(C))


def format_instance(inst: Instance) -> str:
    cs = inst.cs
    H = np.asarray(cs.H, dtype=complex)
    lines = [f"{cs.L} {cs.U}"]
    lines += [f"{float(z.real)!r} {float(z.imag)!r}" for z in H.ravel()]
    for v in (cs.P, cs.sigma2, inst.weights):
        lines.append(" ".join(repr(float(x)) for x in v))
    lines.append(repr(float(inst.C)))
    return "\n".join(lines) + "\n"
