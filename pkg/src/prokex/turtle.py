"""A small Turtle reader covering the shape of generated procedure graphs.

Supported: ``@prefix``/``PREFIX``, prefixed names, absolute IRIs, ``a``,
predicate-object lists (``;``), object lists (``,``), short and long string
literals with language tags, integers (bare or ``^^xsd:integer``), comments.
Blank nodes, collections, ``@base`` and other datatypes are rejected.
"""
from __future__ import annotations

import re

from .errors import TurtleSyntaxError, UnknownPrefix
from .kg import RDF_TYPE, XSD, Literal, Triple

_ECHARS = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f",
           '"': '"', "'": "'", "\\": "\\"}
_PN_LOCAL_ESC = set("_~.-!$&'()*+,;=/?#@%")
_PNAME_PREFIX = re.compile(r"(?:[A-Za-z][A-Za-z0-9_.-]*)?:")
_INTEGER = re.compile(r"[+-]?[0-9]+")
_LANG = re.compile(r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*")
_ABSOLUTE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:")


class TurtleParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.prefixes: dict[str, str] = {}
        self.triples: set[Triple] = set()

    # -- low level -------------------------------------------------------
    @property
    def line(self) -> int:
        return self.text.count("\n", 0, self.pos) + 1

    def error(self, message: str) -> TurtleSyntaxError:
        return TurtleSyntaxError(self.line, message)

    def skip_ws(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif ch == "#":
                end = self.text.find("\n", self.pos)
                self.pos = len(self.text) if end < 0 else end
            else:
                break

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = self.text[self.pos:self.pos + 10] or "end of input"
            raise self.error(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def keyword(self, word: str, case_insensitive: bool = False) -> bool:
        self.skip_ws()
        chunk = self.text[self.pos:self.pos + len(word)]
        after = self.text[self.pos + len(word):self.pos + len(word) + 1]
        match = chunk.lower() == word.lower() if case_insensitive else chunk == word
        if match and (not after or not (after.isalnum() or after in "_:-")):
            self.pos += len(word)
            return True
        return False

    # -- grammar ---------------------------------------------------------
    def parse(self) -> tuple[set[Triple], dict[str, str]]:
        while self.peek():
            self.statement()
        return self.triples, self.prefixes

    def statement(self):
        if self.keyword("@prefix"):
            self.prefix_decl()
            self.expect(".")
        elif self.keyword("PREFIX", case_insensitive=True):
            self.prefix_decl()
        elif self.keyword("@base") or self.keyword("BASE", case_insensitive=True):
            raise self.error("base directives are not supported")
        else:
            subject = self.subject()
            self.predicate_object_list(subject)
            self.expect(".")

    def prefix_decl(self):
        self.skip_ws()
        m = _PNAME_PREFIX.match(self.text, self.pos)
        if not m:
            raise self.error("bad prefix name")
        self.pos = m.end()
        self.prefixes[m.group()[:-1]] = self.iriref()

    def subject(self) -> str:
        ch = self.peek()
        if ch in ("[", "(") or self.text.startswith("_:", self.pos):
            raise self.error("blank nodes and collections are not supported")
        if ch == '"' or ch == "'":
            raise self.error("literal in subject position")
        return self.iri()

    def predicate_object_list(self, subject: str):
        while True:
            predicate = RDF_TYPE if self.keyword("a") else self.iri()
            while True:
                self.triples.add((subject, predicate, self.object()))
                if self.peek() != ",":
                    break
                self.pos += 1
            if self.peek() != ";":
                return
            while self.peek() == ";":
                self.pos += 1
            if self.peek() in (".", ""):
                return

    def object(self):
        ch = self.peek()
        if ch in ('"', "'"):
            return self.literal()
        if ch in ("[", "(") or self.text.startswith("_:", self.pos):
            raise self.error("blank nodes and collections are not supported")
        m = _INTEGER.match(self.text, self.pos)
        if m:
            end = m.end()
            if end < len(self.text) and self.text[end] in ".eE" and \
                    end + 1 < len(self.text) and self.text[end + 1].isdigit():
                raise self.error("decimal and double literals are not supported")
            self.pos = end
            return Literal(int(m.group()))
        if self.keyword("true") or self.keyword("false"):
            raise self.error("boolean literals are not supported")
        return self.iri()

    def literal(self) -> Literal:
        value = self.string()
        if self.text.startswith("@", self.pos):
            m = _LANG.match(self.text, self.pos)
            if not m:
                raise self.error("bad language tag")
            self.pos = m.end()
            return Literal(value, m.group()[1:])
        if self.text.startswith("^^", self.pos):
            self.pos += 2
            datatype = self.iri()
            if datatype == XSD + "string":
                return Literal(value)
            if datatype == XSD + "integer" and _INTEGER.fullmatch(value):
                return Literal(int(value))
            raise self.error(f"unsupported datatype {datatype}")
        return Literal(value)

    def string(self) -> str:
        quote = self.text[self.pos]
        long = self.text.startswith(quote * 3, self.pos)
        delim = quote * 3 if long else quote
        self.pos += len(delim)
        out = []
        while True:
            if self.pos >= len(self.text):
                raise self.error("unterminated string literal")
            if self.text.startswith(delim, self.pos):
                self.pos += len(delim)
                return "".join(out)
            ch = self.text[self.pos]
            if ch == "\\":
                out.append(self.escape(allow_echar=True))
                continue
            if not long and ch in "\r\n":
                raise self.error("unterminated string literal")
            out.append(ch)
            self.pos += 1

    def escape(self, allow_echar: bool) -> str:
        nxt = self.text[self.pos + 1:self.pos + 2]
        if nxt in ("u", "U"):
            width = 4 if nxt == "u" else 8
            digits = self.text[self.pos + 2:self.pos + 2 + width]
            if len(digits) != width or not all(c in "0123456789abcdefABCDEF" for c in digits):
                raise self.error("bad unicode escape")
            self.pos += 2 + width
            return chr(int(digits, 16))
        if allow_echar and nxt in _ECHARS:
            self.pos += 2
            return _ECHARS[nxt]
        raise self.error(f"bad escape \\{nxt}")

    def iriref(self) -> str:
        self.expect("<")
        out = []
        while True:
            if self.pos >= len(self.text):
                raise self.error("unterminated IRI")
            ch = self.text[self.pos]
            if ch == ">":
                self.pos += 1
                break
            if ch == "\\":
                out.append(self.escape(allow_echar=False))
                continue
            if ch in ' <"{}|^`\n':
                raise self.error(f"illegal character {ch!r} in IRI")
            out.append(ch)
            self.pos += 1
        value = "".join(out)
        if not _ABSOLUTE.match(value):
            raise self.error(f"relative IRI <{value}> (no base supported)")
        return value

    def iri(self) -> str:
        ch = self.peek()
        if ch == "<":
            return self.iriref()
        m = _PNAME_PREFIX.match(self.text, self.pos)
        if not m:
            found = self.text[self.pos:self.pos + 12] or "end of input"
            raise self.error(f"expected IRI, found {found!r}")
        prefix = m.group()[:-1]
        line = self.line
        self.pos = m.end()
        local = self.local_name()
        if prefix not in self.prefixes:
            raise UnknownPrefix(line, f"undeclared prefix {prefix!r}")
        return self.prefixes[prefix] + local

    def local_name(self) -> str:
        out = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\":
                esc = self.text[self.pos + 1:self.pos + 2]
                if esc not in _PN_LOCAL_ESC:
                    raise self.error(f"bad local-name escape \\{esc}")
                out.append(esc)
                self.pos += 2
            elif ch.isalnum() or ch in "_-:%" or ord(ch) > 0x7F:
                out.append(ch)
                self.pos += 1
            elif ch == ".":
                # a dot ends the statement unless more name characters follow
                nxt = self.text[self.pos + 1:self.pos + 2]
                if nxt and (nxt.isalnum() or nxt in "_-:%.\\"):
                    out.append(ch)
                    self.pos += 1
                else:
                    break
            else:
                break
        return "".join(out)
