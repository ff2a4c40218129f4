"""Small C lexer plus the canonical rendering used to compare statements.

The renderer is the single source of statement text: parsed statements and
diff lines both go through :func:`render`, so equal code gives equal text no
matter how it was spaced or commented.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool bool class namespace new delete template typename public private
    protected virtual operator this""".split()
)

TYPE_KEYWORDS = frozenset(
    """char short int long float double signed unsigned void _Bool bool const
    volatile static extern register auto inline restrict struct union enum
    typedef""".split()
)

CONTROL_KEYWORDS = frozenset({"if", "for", "while", "switch", "do"})

# longest first so that ">>=" wins over ">>" and ">"
_OPERATORS = sorted(
    """... <<= >>= -> ++ -- << >> <= >= == != && || += -= *= /= %= &= ^= |= ::
    + - * / % < > = ! ~ & | ^ ? : ; , . ( ) [ ] { } #""".split(),
    key=len,
    reverse=True,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<string>(?:L|u8|u|U)?"(?:\\.|[^"\\\n])*"?)
  | (?P<char>(?:L|u8|u|U)?'(?:\\.|[^'\\\n])*'?)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<number>(?:0[xX][0-9A-Fa-f']+|\d[\d']*\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)[uUlLfF]*)
  | (?P<op>"""
    + "|".join(re.escape(op) for op in _OPERATORS)
    + r""")
  | (?P<other>\S)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | number | string | char | op | other
    text: str
    line: int

    def __str__(self) -> str:
        return self.text


def strip_comments(text: str) -> str:
    """Blank out ``//`` and ``/* */`` comments, keeping every newline in place.

    String and character literals are honoured so ``"http://x"`` survives.
    An unterminated block comment runs to the end of the text.
    """
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            out.append(" ")
            i = j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            out.append(" " + "\n" * text.count("\n", i, j))
            i = j
        elif c in "\"'":
            j = i + 1
            while j < n and text[j] != c and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n)
            out.append(text[i:j])
            i = j
        else:
            out.append(c)
            i += 1
    return "".join(out)


def tokenize(text: str, first_line: int = 1) -> list[Token]:
    """Tokenize comment-free text. Line continuations are treated as spaces."""
    text = text.replace("\\\n", " \n")
    tokens: list[Token] = []
    line = first_line
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "nl":
            line += 1
            continue
        tokens.append(Token(kind, m.group(), line))
    return tokens


_NO_SPACE_BEFORE = {")", "]", ";", ",", ".", "->", "::"}
_NO_SPACE_AFTER = {"(", "[", ".", "->", "::", "!", "~", "#"}
_PREFIX_CAPABLE = {"*", "&", "-", "+", "++", "--"}
_CALL_LIKE_KEYWORDS = {"sizeof"}


def _is_operand_end(tok: str | None) -> bool:
    """True when ``tok`` can end an operand, i.e. a following ``*`` is binary."""
    if tok is None:
        return False
    if tok in (")", "]"):
        return True
    if tok[0].isalnum() or tok[0] in "_$\"'":
        return tok not in KEYWORDS or tok in ("this",)
    return False


def render(tokens) -> str:
    """Join token texts with the canonical spacing rule.

    No space after ``(``/``[``/``.``/``->``/unary operators or before
    ``)``/``]``/``;``/``,``; a call keeps its ``(`` glued to the callee while
    control keywords get one space; every other pair is separated by one space.
    """
    texts = [str(t) for t in tokens]
    out: list[str] = []
    prefix_op = False
    prev: str | None = None
    for tok in texts:
        if prev is None:
            out.append(tok)
        else:
            space = True
            if tok in _NO_SPACE_BEFORE or prev in _NO_SPACE_AFTER or prefix_op:
                space = False
            elif tok == "(" and (_is_operand_end(prev) or prev in _CALL_LIKE_KEYWORDS):
                space = False
            elif tok == "[":
                space = False
            elif tok in ("++", "--") and _is_operand_end(prev):
                space = False
            out.append((" " if space else "") + tok)
        prefix_op = tok in _PREFIX_CAPABLE and not _is_operand_end(prev)
        if tok in ("++", "--") and _is_operand_end(prev):
            prefix_op = False
        prev = tok
    return "".join(out)


def normalize_statement(raw: str) -> str:
    """Canonical text of one source line: comments gone, spacing canonical."""
    return render(tokenize(strip_comments(raw)))


_BRACE_ONLY = {"{", "}", "};", "else", "} else", "} else {", "else {", "do", "do {"}


def is_ignorable(raw: str) -> bool:
    """Blank, comment-only or brace-only lines carry no statement."""
    return normalize_statement(raw) in _BRACE_ONLY or not normalize_statement(raw)


def statement_key(raw: str) -> str:
    """Normalized line with block braces and a leading ``} else`` removed.

    This is what a single-line statement's ``text`` looks like when it is
    read back from the source line that anchors it.
    """
    toks = tokenize(strip_comments(raw))
    while toks and toks[0].text == "}":
        toks = toks[1:]
    if toks and toks[0].text == "else":
        toks = toks[1:]
    while toks and toks[-1].text == "{":
        toks = toks[:-1]
    return render(toks)
