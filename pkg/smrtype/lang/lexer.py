import re
from typing import List, NamedTuple, Optional, Sequence

from ..errors import ParseError


class Token(NamedTuple):
    kind: str  # "id", "sym" or "eof"
    text: str
    line: int
    column: int


_SYMBOLS = (
    "->", "==", "!=", "&&", "||", "{", "}", "(", ")", ";", ",", "=", "*", "@", "!", ":"
)
_token_re = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|"
    r"(?P<num>[0-9]+)|(?P<sym>"
    + "|".join(re.escape(s) for s in _SYMBOLS)
    + ")"
)


def tokenize(text: str) -> List[Token]:
    tokens = []
    line = 1
    line_start = 0
    pos = 0
    while pos < len(text):
        match = _token_re.match(text, pos)
        if match is None:
            raise ParseError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = match.lastgroup
        if kind == "nl":
            line += 1
            line_start = match.end()
        elif kind in ("id", "num", "sym"):
            tokens.append(
                Token(kind, match.group(), line, match.start() - line_start + 1)
            )
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def peek(self) -> Token:
        return self.tokens[self.index]

    def lookahead(self, offset: int) -> Token:
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        token = self.tokens[self.index]
        if token.kind != "eof":
            self.index += 1
        return token

    def at(self, *texts: str) -> bool:
        token = self.peek
        return token.kind != "eof" and token.text in texts

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        token = self.peek
        if token.kind == "eof" or token.text != text:
            self.fail(f"expected {text!r}, found {self._describe(token)}")
        return self.next()

    def identifier(self, what: str = "identifier") -> Token:
        token = self.peek
        if token.kind != "id":
            self.fail(f"expected {what}, found {self._describe(token)}")
        return self.next()

    def number(self) -> int:
        token = self.peek
        if token.kind != "num":
            self.fail(f"expected a number, found {self._describe(token)}")
        return int(self.next().text)

    def identifiers(self, what: str = "identifier") -> Sequence[Token]:
        out = [self.identifier(what)]
        while self.accept(","):
            out.append(self.identifier(what))
        return out

    def fail(self, message: str, token: Optional[Token] = None):
        token = self.peek if token is None else token
        raise ParseError(message, token.line, token.column)

    @staticmethod
    def _describe(token: Token) -> str:
        return "end of input" if token.kind == "eof" else repr(token.text)
