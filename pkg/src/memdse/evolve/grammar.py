"""BNF grammars and the GE genotype-to-phenotype mapping."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

# A symbol is (is_nonterminal, text).
Symbol = tuple[bool, str]

_RULE_RE = re.compile(r"^\s*<([^<>\s]+)>\s*::=(.*)$")
_TOKEN_RE = re.compile(r"""<([^<>\s]+)>|'([^']*)'|"([^"]*)"|(\S+)""")

MAX_EXPANSIONS = 100_000


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Grammar:
    rules: dict  # nonterminal -> tuple of alternatives (tuples of Symbol)
    start: str

    def __post_init__(self):
        if self.start not in self.rules:
            raise GrammarError(f"start symbol <{self.start}> is not defined")
        for lhs, alts in self.rules.items():
            if not alts:
                raise GrammarError(f"<{lhs}> has no alternatives")
            for alt in alts:
                for is_nt, text in alt:
                    if is_nt and text not in self.rules:
                        raise GrammarError(f"<{text}> used in <{lhs}> but never defined")

    @classmethod
    def from_bnf(cls, text: str) -> "Grammar":
        """Parse ``<sym> ::= alt1 | alt2`` rules.

        Terminals are quoted with single or double quotes (unquoted words
        are taken literally); a rule continues on following lines until the
        next ``<sym> ::=``.  The first rule defines the start symbol.
        """
        bodies: dict[str, list[str]] = {}
        order: list[str] = []
        current = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            m = _RULE_RE.match(line)
            if m:
                current = m.group(1)
                if current in bodies:
                    raise GrammarError(f"<{current}> defined twice")
                bodies[current] = [m.group(2)]
                order.append(current)
            elif current is None:
                raise GrammarError(f"text outside a rule: {line!r}")
            else:
                bodies[current].append(line)
        if not order:
            raise GrammarError("empty grammar")
        rules = {lhs: tuple(_parse_alternatives(" ".join(bodies[lhs]))) for lhs in order}
        return cls(rules, order[0])

    def to_bnf(self) -> str:
        lines = []
        for lhs, alts in self.rules.items():
            rendered = [" ".join(f"<{t}>" if nt else _quote(t) for nt, t in alt) for alt in alts]
            lines.append(f"<{lhs}> ::= " + " | ".join(rendered))
        return "\n".join(lines) + "\n"


def _quote(text: str) -> str:
    return f"'{text}'" if "'" not in text else f'"{text}"'


def _split_alternatives(body: str) -> list[str]:
    parts, buf, quote = [], [], None
    for ch in body:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == "|":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if quote:
        raise GrammarError(f"unterminated quote in {body!r}")
    parts.append("".join(buf))
    return parts


def _parse_alternatives(body: str) -> list[tuple[Symbol, ...]]:
    alts = []
    for chunk in _split_alternatives(body):
        symbols = []
        for m in _TOKEN_RE.finditer(chunk):
            nt, sq, dq, bare = m.groups()
            if nt is not None:
                symbols.append((True, nt))
            else:
                symbols.append((False, next(t for t in (sq, dq, bare) if t is not None)))
        alts.append(tuple(symbols))
    return alts


@dataclass(frozen=True)
class Derivation:
    valid: bool
    phenotype: str | None
    codons_used: int
    wraps: int


def ge_decode(codons: Sequence[int], grammar: Grammar, max_wraps: int) -> Derivation:
    """Leftmost derivation driven by codons (choice = codon mod #alternatives).

    Nonterminals with a single alternative consume no codon.  When the
    codons run out reading restarts from the first one, at most
    ``max_wraps`` times; a derivation still incomplete after that is
    invalid.
    """
    n = len(codons)
    pos = wraps = used = expansions = 0
    out: list[str] = []
    stack: list[Symbol] = [(True, grammar.start)]
    rules = grammar.rules
    while stack:
        is_nt, text = stack.pop()
        if not is_nt:
            out.append(text)
            continue
        expansions += 1
        if expansions > MAX_EXPANSIONS:
            return Derivation(False, None, used, wraps)
        alts = rules[text]
        if len(alts) == 1:
            choice = alts[0]
        else:
            if pos == n:
                if n == 0 or wraps >= max_wraps:
                    return Derivation(False, None, used, wraps)
                wraps += 1
                pos = 0
            choice = alts[codons[pos] % len(alts)]
            pos += 1
            used += 1
        stack.extend(reversed(choice))
    return Derivation(True, "".join(out), used, wraps)


def enumerate_sentences(grammar: Grammar, symbol: str | None = None,
                        limit: int = 1_000_000) -> Iterator[str]:
    """All sentences of a non-recursive grammar, in alternative order."""

    def expand(sym: str, depth: int) -> list[str]:
        if depth > len(grammar.rules):
            raise GrammarError("grammar is recursive; sentences are unbounded")
        results = []
        for alt in grammar.rules[sym]:
            pieces = [[t] if not nt else expand(t, depth + 1) for nt, t in alt]
            for combo in itertools.product(*pieces):
                results.append("".join(combo))
                if len(results) > limit:
                    raise GrammarError(f"more than {limit} sentences")
        return results

    yield from expand(symbol or grammar.start, 0)
