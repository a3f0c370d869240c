"""Command line front end: problem files, pipeline dispatch, reports.

The problem DSL is line oriented::

    free F = <a, b>
    subgroup A = < a a, b b b > in F
    hnn H = extend F by t commuting A
    expr e = t^-1 a^x t a^-1^y in H
    solve e
    solve system e1, e2
    relative e in A
    enumerate e box=6
    parikh automaton.json

Powers bind to the preceding parenthesized word or letter; `( a b )^x` is a
power of the two-letter word.  Results are emitted as text or JSON; stdout is
byte deterministic for a fixed (file, flags, version), timing goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from . import automata, oracle
from .freegroup import StallingsGraph, stallings_build, trivial_subgroup
from .hnn import HnnGroup, exponent_sol, sol
from .presburger import UNAVAILABLE, EffortExceeded, SolutionSet, extract_semilinear
from .relknap import RelKnapConfig, rel_sol
from .words import Alphabet, KnapsackExpr, Word


class ProblemError(Exception):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


@dataclass
class ExprDecl:
    name: str
    group: str
    expr: KnapsackExpr


@dataclass
class Query:
    kind: str  # solve | system | relative | enumerate | parikh
    exprs: list[str] = field(default_factory=list)
    subgroup: Optional[str] = None
    box: Optional[int] = None
    path: Optional[str] = None
    line: int = 0


@dataclass
class ProblemFile:
    frees: dict[str, Alphabet]
    subgroups: dict[str, tuple[str, StallingsGraph, list[Word]]]
    hnns: dict[str, HnnGroup]
    hnn_data: dict[str, tuple[str, list[tuple[str, str]]]]
    exprs: dict[str, ExprDecl]
    queries: list[Query]


def _tokenize_word(text: str, line: int, col: int, alphabet: Alphabet) -> Word:
    try:
        return alphabet.word(text)
    except ValueError as exc:
        raise ProblemError(line, col, str(exc))


def parse(text: str) -> ProblemFile:
    pf = ProblemFile({}, {}, {}, {}, {}, [])
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        words = line.split()
        head = words[0]
        if head == "free":
            _parse_free(pf, line, lineno, col)
        elif head == "subgroup":
            _parse_subgroup(pf, line, lineno, col)
        elif head == "hnn":
            _parse_hnn(pf, line, lineno, col)
        elif head == "expr":
            _parse_expr(pf, line, lineno, col)
        elif head == "solve":
            rest = line[len("solve"):].strip()
            if rest.startswith("system"):
                names = [n.strip() for n in rest[len("system"):].split(",") if n.strip()]
                for n in names:
                    _need(pf.exprs, n, lineno, line.index(rest) + 1, "expression")
                pf.queries.append(Query("system", exprs=names, line=lineno))
            else:
                _need(pf.exprs, rest, lineno, line.index(rest) + 1, "expression")
                pf.queries.append(Query("solve", exprs=[rest], line=lineno))
        elif head == "relative":
            rest = line[len("relative"):].strip()
            if " in " not in rest:
                raise ProblemError(lineno, col, "expected: relative <expr> in <subgroup>")
            ename, aname = [s.strip() for s in rest.split(" in ", 1)]
            _need(pf.exprs, ename, lineno, col, "expression")
            _need(pf.subgroups, aname, lineno, col, "subgroup")
            pf.queries.append(Query("relative", exprs=[ename], subgroup=aname, line=lineno))
        elif head == "enumerate":
            rest = line[len("enumerate"):].strip()
            box = None
            if "box=" in rest:
                rest, boxpart = rest.rsplit("box=", 1)
                rest = rest.strip()
                try:
                    box = int(boxpart)
                except ValueError:
                    raise ProblemError(lineno, line.index("box=") + 1, "box must be an integer")
            _need(pf.exprs, rest, lineno, col, "expression")
            pf.queries.append(Query("enumerate", exprs=[rest], box=box, line=lineno))
        elif head == "parikh":
            path = line[len("parikh"):].strip()
            if not path:
                raise ProblemError(lineno, col, "parikh needs an automaton file")
            pf.queries.append(Query("parikh", path=path, line=lineno))
        else:
            raise ProblemError(lineno, col, f"unknown statement {head!r}")
    return pf


def _need(table, name, line, col, what):
    if name not in table:
        raise ProblemError(line, col, f"undeclared {what} {name!r}")


def _parse_free(pf, line, lineno, col):
    # free F = <a, b>
    try:
        name, rhs = line[len("free"):].split("=", 1)
    except ValueError:
        raise ProblemError(lineno, col, "expected: free <name> = <a, b, ...>")
    name = name.strip()
    rhs = rhs.strip()
    if not (rhs.startswith("<") and rhs.endswith(">")):
        raise ProblemError(lineno, line.index("=") + 2, "generator list must be <...>")
    gens = tuple(g.strip() for g in rhs[1:-1].split(",") if g.strip())
    if not gens:
        raise ProblemError(lineno, col, "empty generator list")
    if name in pf.frees:
        raise ProblemError(lineno, col, f"free group {name!r} redeclared")
    pf.frees[name] = Alphabet(gens)


def _parse_subgroup(pf, line, lineno, col):
    # subgroup A = < w1, w2 > in F
    body = line[len("subgroup"):]
    if " in " not in body:
        raise ProblemError(lineno, col, "expected: subgroup A = < ... > in F")
    decl, fname = body.rsplit(" in ", 1)
    fname = fname.strip()
    _need(pf.frees, fname, lineno, line.rindex(fname) + 1, "free group")
    try:
        name, rhs = decl.split("=", 1)
    except ValueError:
        raise ProblemError(lineno, col, "expected: subgroup A = < ... > in F")
    name = name.strip()
    rhs = rhs.strip()
    if not (rhs.startswith("<") and rhs.endswith(">")):
        raise ProblemError(lineno, col, "generators must be < ... >")
    alphabet = pf.frees[fname]
    gen_words = []
    for part in rhs[1:-1].split(","):
        part = part.strip()
        if part:
            gen_words.append(_tokenize_word(part, lineno, line.index(part) + 1, alphabet))
    graph = stallings_build(gen_words) if gen_words else trivial_subgroup(alphabet)
    pf.subgroups[name] = (fname, graph, gen_words)


def _parse_hnn(pf, line, lineno, col):
    # hnn H = extend F by t commuting A   (repeatable to add stable letters)
    body = line[len("hnn"):]
    try:
        name, rhs = body.split("=", 1)
    except ValueError:
        raise ProblemError(lineno, col, "expected: hnn H = extend F by t commuting A")
    name = name.strip()
    toks = rhs.split()
    if len(toks) != 6 or toks[0] != "extend" or toks[2] != "by" or toks[4] != "commuting":
        raise ProblemError(lineno, col, "expected: hnn H = extend F by t commuting A")
    fname, tname, aname = toks[1], toks[3], toks[5]
    _need(pf.subgroups, aname, lineno, col, "subgroup")
    if name in pf.hnn_data:
        base, stables = pf.hnn_data[name]
        if fname not in (base, name):
            raise ProblemError(lineno, col, f"HNN {name!r} extends {base!r}, not {fname!r}")
        stables.append((tname, aname))
    else:
        _need(pf.frees, fname, lineno, col, "free group")
        pf.hnn_data[name] = (fname, [(tname, aname)])
    base, stables = pf.hnn_data[name]
    alphabet = pf.frees[base]
    for tname_, aname_ in stables:
        if pf.subgroups[aname_][0] != base:
            raise ProblemError(lineno, col, f"subgroup {aname_!r} lives in another group")
    pf.hnns[name] = HnnGroup(
        alphabet, [(t, pf.subgroups[a][1]) for t, a in stables]
    )


def _parse_expr(pf, line, lineno, col):
    # expr e = t^-1 a^x t a^-1^y in H
    body = line[len("expr"):]
    if " in " not in body:
        raise ProblemError(lineno, col, "expected: expr e = ... in <group>")
    decl, gname = body.rsplit(" in ", 1)
    gname = gname.strip()
    if gname in pf.hnns:
        alphabet = pf.hnns[gname].alphabet
    elif gname in pf.frees:
        alphabet = pf.frees[gname]
    else:
        raise ProblemError(lineno, line.rindex(gname) + 1, f"undeclared group {gname!r}")
    try:
        name, rhs = decl.split("=", 1)
    except ValueError:
        raise ProblemError(lineno, col, "expected: expr e = ...")
    name = name.strip()
    expr_obj = _parse_expression(rhs.strip(), alphabet, lineno, line.index(rhs.strip()) + 1)
    pf.exprs[name] = ExprDecl(name, gname, expr_obj)


def _parse_expression(text: str, alphabet: Alphabet, line: int, col: int) -> KnapsackExpr:
    """Tokens are letters or parenthesized groups, each optionally raised to a
    variable or literal power: a^x, a^-1^y, ( a b )^x, b^3."""
    tokens = text.split()
    consts: list[Word] = [alphabet.epsilon()]
    powers: list[Word] = []
    variables: list[str] = []
    i = 0

    def base_and_power(tok):
        # split a trailing ^suffix that is not the ^-1 inverse marker
        if "^" in tok:
            stem, _, last = tok.rpartition("^")
            if last != "-1":
                return stem, last
        return tok, None

    while i < len(tokens):
        tok = tokens[i]
        if tok == "(":
            depth = 1
            j = i + 1
            inner = []
            while j < len(tokens):
                if tokens[j] == "(":
                    depth += 1
                elif tokens[j] == ")" or tokens[j].startswith(")"):
                    depth -= 1
                    if depth == 0:
                        break
                inner.append(tokens[j])
                j += 1
            if j == len(tokens):
                raise ProblemError(line, col, "unbalanced parenthesis")
            closer = tokens[j]
            power = None
            if closer.startswith(")^"):
                power = closer[2:]
            word = Word(alphabet, tuple(alphabet.letter(t) for t in inner))
            if power is None:
                consts[-1] = consts[-1] * word
            elif power.lstrip("-").isdigit():
                consts[-1] = consts[-1] * (word ** int(power))
            else:
                powers.append(word)
                variables.append(power)
                consts.append(alphabet.epsilon())
            i = j + 1
            continue
        stem, power = base_and_power(tok)
        try:
            letter = alphabet.letter(stem)
        except ValueError as exc:
            raise ProblemError(line, col, str(exc))
        word = Word(alphabet, (letter,))
        if power is None:
            consts[-1] = consts[-1] * word
        elif power.lstrip("-").isdigit():
            consts[-1] = consts[-1] * (word ** int(power))
        else:
            powers.append(word)
            variables.append(power)
            consts.append(alphabet.epsilon())
        i += 1
    if not powers:
        raise ProblemError(line, col, "expression needs at least one power")
    return KnapsackExpr(tuple(consts), tuple(powers), tuple(variables))


def format_expr(decl: ExprDecl) -> str:
    e = decl.expr
    parts = []
    if e.consts[0]:
        parts.append(str(e.consts[0]))
    for u, x, v in zip(e.powers, e.variables, e.consts[1:]):
        if len(u) == 1:
            parts.append(f"{u}^{x}")
        else:
            parts.append(f"( {u} )^{x}")
        if v:
            parts.append(str(v))
    return f"expr {decl.name} = {' '.join(parts) if parts else '1'} in {decl.group}"


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _set_report(s: SolutionSet, box: int, want_enum: bool) -> dict:
    rep = extract_semilinear(s)
    out = {
        "vars": list(s.vars),
        "sat": not s.is_empty(),
        "semilinear": rep.to_json() if rep is not UNAVAILABLE else "AUTOMATON-ONLY",
    }
    if want_enum:
        out["enumeration"] = [list(v) for v in s.enumerate(box)]
    return out


def run(pf: ProblemFile, box: int = 6, kappa: int = 0, ball: Optional[int] = None,
        effort: Optional[int] = None, check_oracle: bool = False) -> dict:
    cfg = RelKnapConfig(kappa=kappa, ball=ball,
                        max_polygon_nodes=effort or RelKnapConfig().max_polygon_nodes)
    results = []
    for q in pf.queries:
        started = time.monotonic()
        entry: dict = {"query": q.kind, "line": q.line}
        if q.kind == "parikh":
            with open(q.path) as fh:
                nfa, names = automata.parse_nfa_json(json.load(fh))
            rep = automata.parikh(nfa, names)
            entry["semilinear"] = rep.to_json()
        else:
            decls = [pf.exprs[name] for name in q.exprs]
            entry["exprs"] = q.exprs
            if q.kind == "relative":
                decl = decls[0]
                aname = q.subgroup
                fname, graph, _ = pf.subgroups[aname]
                if decl.group != fname:
                    raise ProblemError(q.line, 1, "expression and subgroup groups differ")
                s = rel_sol(decl.expr, graph, cfg)
                entry.update(_set_report(s, box, True))
            else:
                group = decls[0].group
                if any(d.group != group for d in decls):
                    raise ProblemError(q.line, 1, "system mixes groups")
                if group in pf.hnns:
                    H = pf.hnns[group]
                    s = exponent_sol(H, [d.expr for d in decls], cfg)
                else:
                    alphabet = pf.frees[group]
                    H = None
                    sets = []
                    for d in decls:
                        sets.append(_free_exponent_sol(d.expr, alphabet, cfg))
                    s = sets[0]
                    for other in sets[1:]:
                        allvars = list(dict.fromkeys(list(s.vars) + list(other.vars)))
                        s = _cyl(s, allvars).intersect(_cyl(other, allvars))
                want_enum = q.kind == "enumerate" or True
                use_box = q.box if q.box is not None else box
                entry.update(_set_report(s, use_box, want_enum))
                if check_oracle:
                    entry["oracle_consistent"] = _oracle_diff(pf, q, decls, s, use_box)
        entry["time_ms"] = int((time.monotonic() - started) * 1000)
        results.append(entry)
    return {"schema": 1, "results": results}


def _cyl(s: SolutionSet, vars) -> SolutionSet:
    from .hnn import _embed

    return _embed(s, vars)


def _free_exponent_sol(e: KnapsackExpr, alphabet: Alphabet, cfg) -> SolutionSet:
    """Exponent expressions over a plain free group (repeats allowed)."""
    counts: dict[str, int] = {}
    new_vars = []
    copies: dict[str, list[str]] = {}
    for x in e.variables:
        counts[x] = counts.get(x, 0) + 1
        if counts[x] == 1:
            new_vars.append(x)
            copies[x] = [x]
        else:
            fresh = f"{x}#{counts[x]}"
            new_vars.append(fresh)
            copies[x].append(fresh)
    renamed = KnapsackExpr(e.consts, e.powers, tuple(new_vars))
    s = rel_sol(renamed, trivial_subgroup(alphabet), cfg)
    for x, cs in copies.items():
        for extra in cs[1:]:
            s = s.diagonalize(x, extra).project_out(extra)
    return s.aligned_to(list(e.var_names))


def _oracle_diff(pf: ProblemFile, q: Query, decls, s: SolutionSet, box: int):
    group = decls[0].group
    if group in pf.hnns:
        base_name, stables = pf.hnn_data[group]
        alphabet = pf.frees[base_name]
        orc = oracle.HnnOracle(
            alphabet, [(t, pf.subgroups[a][2]) for t, a in stables]
        )
    else:
        alphabet = pf.frees[group]
        orc = oracle.HnnOracle(alphabet, [("#t", [])])
    sets = []
    for d in decls:
        sets.append(orc.brute_solutions(d.expr, box))
    # joint solutions over the union variable order
    allvars = list(dict.fromkeys(x for d in decls for x in d.expr.var_names))
    joint = []
    import itertools as _it

    for vals in _it.product(range(box + 1), repeat=len(allvars)):
        sigma = dict(zip(allvars, vals))
        ok = True
        for d, got in zip(decls, sets):
            point = tuple(sigma[x] for x in d.expr.var_names)
            if point not in got:
                ok = False
                break
        if ok:
            joint.append(vals)
    mine = {tuple(v) for v in s.aligned_to(allvars).enumerate(box)}
    brute = set(joint)
    return {
        "match": mine == brute,
        "missing": sorted([list(v) for v in brute - mine])[:10],
        "extra": sorted([list(v) for v in mine - brute])[:10],
    }


def format_text(report: dict) -> str:
    lines = []
    for entry in report["results"]:
        head = f"[{entry['query']}]"
        if "exprs" in entry:
            head += " " + ", ".join(entry["exprs"])
        lines.append(head)
        if "sat" in entry:
            lines.append("  sat: " + ("yes" if entry["sat"] else "no"))
        if "semilinear" in entry:
            sl = entry["semilinear"]
            if sl == "AUTOMATON-ONLY":
                lines.append("  semilinear: AUTOMATON-ONLY")
            else:
                for comp in sl["components"]:
                    lines.append(
                        "  component: base=%s periods=%s"
                        % (comp["base"], comp["periods"])
                    )
                if not sl["components"]:
                    lines.append("  semilinear: empty")
                lines.append("  vars: " + ", ".join(sl["vars"]))
        if "enumeration" in entry:
            lines.append(
                "  enumeration: " + " ".join(str(tuple(v)) for v in entry["enumeration"])
            )
        if "oracle_consistent" in entry:
            oc = entry["oracle_consistent"]
            lines.append("  oracle: " + ("consistent" if oc["match"] else f"MISMATCH {oc}"))
    return "\n".join(lines) + "\n"


def _strip_times(report: dict) -> dict:
    out = {"schema": report["schema"], "results": []}
    for entry in report["results"]:
        entry = dict(entry)
        entry.pop("time_ms", None)
        out["results"].append(entry)
    return out


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="expoknap",
        description="solution sets of knapsack and exponent equations in free "
        "groups and their centralizing HNN-extensions",
    )
    parser.add_argument("problem", help="problem file (DSL)")
    parser.add_argument("--box", type=int, default=6, help="enumeration bound")
    parser.add_argument("--kappa", type=int, default=0, help="cutting-word radius")
    parser.add_argument("--ball", type=int, default=None, help="transducer ball bound")
    parser.add_argument("--effort", type=int, default=None, help="polygon node cap")
    parser.add_argument("--format", choices=("text", "json"), default="text")
    parser.add_argument("--oracle", action="store_true",
                        help="cross-check against the brute-force oracle")
    args = parser.parse_args(argv)

    try:
        with open(args.problem) as fh:
            pf = parse(fh.read())
        report = run(pf, box=args.box, kappa=args.kappa, ball=args.ball,
                     effort=args.effort, check_oracle=args.oracle)
    except ProblemError as exc:
        print(f"{args.problem}:{exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except EffortExceeded as exc:
        print(f"effort limit exceeded: {exc}", file=sys.stderr)
        return 3

    total = sum(e.get("time_ms", 0) for e in report["results"])
    print(f"total time: {total} ms", file=sys.stderr)
    clean = _strip_times(report)
    if args.format == "json":
        print(json.dumps(clean, sort_keys=True, indent=2))
    else:
        sys.stdout.write(format_text(clean))
    return 0


if __name__ == "__main__":
    sys.exit(main())
