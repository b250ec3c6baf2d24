"""Sparse SDPA (.dat-s) reader and writer.

The file carries one objective matrix and m constraint matrices over a
shared block structure:

    * comment lines start with '*' or '"'
    m
    nblocks
    block sizes (negative size = diagonal block)
    b_1 ... b_m
    matno blkno i j value     (matno 0 is the objective, 1..m the constraints)

Only the upper triangle is stored; entries are mirrored on load.  A
negative block of size -k expands to k separate 1x1 blocks, which is
also how the solver carries scalar variables internally.

The data is read in the dual convention (objective matrix tr(F0 Y),
constraint matrices with right-hand sides) and lands in our inequality
("canonical") form by default: minimize C.X subject to A_i.X >= b_i
over the semidefinite cone.  Pass form="standard" to read the
constraints as equalities instead.
"""

from __future__ import annotations

import numpy as np

from .errors import IndexOutOfBlock, NonSymmetricDuplicate, ParseError
from .model import Form, SdoProblem
from .symmat import SymMat


def _strip_tokens(line: str) -> list[str]:
    for ch in "{}(),":
        line = line.replace(ch, " ")
    return line.split()


def parse_sdpa(text: str, form: Form = Form.CANONICAL) -> SdoProblem:
    """Parse sparse SDPA text into a problem instance."""
    numbered = [(i + 1, raw) for i, raw in enumerate(text.splitlines())]
    lines = [(no, raw.strip()) for no, raw in numbered
             if raw.strip() and raw.strip()[0] not in "*\""]
    if len(lines) < 4:
        raise ParseError(len(numbered), "file ends before the header is complete")

    def _int(no, tok, what):
        try:
            return int(tok)
        except ValueError:
            raise ParseError(no, f"expected an integer {what}, got {tok!r}") from None

    no, tok = lines[0]
    m = _int(no, tok.split()[0], "constraint count")
    if m < 0:
        raise ParseError(no, "constraint count must be nonnegative")
    no, tok = lines[1]
    nblocks = _int(no, tok.split()[0], "block count")
    if nblocks <= 0:
        raise ParseError(no, "block count must be positive")

    no, tok = lines[2]
    sizes = [_int(no, t, "block size") for t in _strip_tokens(tok)]
    if len(sizes) != nblocks:
        raise ParseError(no, f"expected {nblocks} block sizes, got {len(sizes)}")
    # declared block -> (offset into expanded layout, size, diagonal?)
    layout: list[int] = []
    blockmap = []
    for s in sizes:
        if s == 0:
            raise ParseError(no, "block size zero is not allowed")
        if s > 0:
            blockmap.append((len(layout), s, False))
            layout.append(s)
        else:
            blockmap.append((len(layout), -s, True))
            layout.extend([1] * (-s))

    no, tok = lines[3]
    try:
        rhs = np.array([float(t) for t in _strip_tokens(tok)])
    except ValueError:
        raise ParseError(no, "right-hand side must be numeric") from None
    if len(rhs) != m:
        raise ParseError(no, f"expected {m} right-hand side values, got {len(rhs)}")

    mats = [SymMat.zeros(layout) for _ in range(m + 1)]
    seen: dict[tuple, float] = {}
    for no, line in lines[4:]:
        toks = line.split()
        if len(toks) != 5:
            raise ParseError(no, f"expected 5 fields, got {len(toks)}")
        matno = _int(no, toks[0], "matrix number")
        blkno = _int(no, toks[1], "block number")
        i = _int(no, toks[2], "row index")
        j = _int(no, toks[3], "column index")
        try:
            val = float(toks[4])
        except ValueError:
            raise ParseError(no, f"bad value {toks[4]!r}") from None
        if not (0 <= matno <= m):
            raise IndexOutOfBlock(no, f"matrix number {matno} outside 0..{m}")
        if not (1 <= blkno <= nblocks):
            raise IndexOutOfBlock(no, f"block number {blkno} outside 1..{nblocks}")
        off, size, diag = blockmap[blkno - 1]
        if not (1 <= i <= size and 1 <= j <= size):
            raise IndexOutOfBlock(no, f"entry ({i},{j}) outside block of size {size}")
        key = (matno, blkno, min(i, j), max(i, j))
        if key in seen:
            old = seen[key]
            if abs(old - val) > 1e-15 * max(1.0, abs(old)):
                raise NonSymmetricDuplicate(
                    no, f"entry {key[2:]} of matrix {matno} block {blkno} "
                        f"given as both {old!r} and {val!r}")
        seen[key] = val
        if diag:
            if i != j:
                raise IndexOutOfBlock(no, "off-diagonal entry in a diagonal block")
            mats[matno].blocks[off + i - 1][0, 0] = val
        else:
            B = mats[matno].blocks[off]
            B[i - 1, j - 1] = val
            B[j - 1, i - 1] = val

    return SdoProblem(mats[1:], rhs, mats[0], form)


def load_sdpa(path, form: Form = Form.CANONICAL) -> SdoProblem:
    with open(path, "r") as fh:
        return parse_sdpa(fh.read(), form)


def emit_sdpa(prob: SdoProblem) -> str:
    """Serialize a problem back to sparse SDPA text.

    1x1 blocks are grouped into one diagonal block; parse(emit(p))
    reproduces the matrices bitwise.
    """
    layout = prob.block_sizes
    groups = []          # (declared size, [expanded indices])
    idx = 0
    while idx < len(layout):
        if layout[idx] == 1:
            run = []
            while idx < len(layout) and layout[idx] == 1:
                run.append(idx)
                idx += 1
            groups.append((-len(run), run))
        else:
            groups.append((layout[idx], [idx]))
            idx += 1

    lines = [f"{prob.m}", f"{len(groups)}",
             " ".join(str(g[0]) for g in groups),
             " ".join(format(b, ".17g") for b in prob.rhs)]
    all_mats = [prob.objective] + list(prob.constraint_mats)
    for matno, mat in enumerate(all_mats):
        for blkno, (size, members) in enumerate(groups, start=1):
            if size < 0:
                for pos, bidx in enumerate(members, start=1):
                    v = mat.blocks[bidx][0, 0]
                    if v != 0.0:
                        lines.append(f"{matno} {blkno} {pos} {pos} {format(v, '.17g')}")
            else:
                B = mat.blocks[members[0]]
                for i in range(size):
                    for j in range(i, size):
                        if B[i, j] != 0.0:
                            lines.append(
                                f"{matno} {blkno} {i + 1} {j + 1} "
                                f"{format(B[i, j], '.17g')}")
    return "\n".join(lines) + "\n"
