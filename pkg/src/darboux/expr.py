"""Small closed-form expression language for metric components.

Grammar: numbers, the variables u and v, + - * / ^, parentheses, and the
functions sin, cos, exp, sqrt, with standard precedence (^ binds tightest and
is right associative).  Expressions evaluate on floats or numpy arrays, can be
differentiated symbolically to any order, and evaluate on jets, which is how
Taylor coefficients are extracted without finite differences.
"""

from __future__ import annotations

import numpy as np

from .errors import ExprSyntaxError, UnknownIdentifierError

_FUNCS = ("sin", "cos", "exp", "sqrt")


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------
class Node:
    def eval(self, env):
        raise NotImplementedError

    def diff(self, var):
        raise NotImplementedError

    def simplified(self):
        return self


class Num(Node):
    def __init__(self, value):
        self.value = float(value)

    def eval(self, env):
        return self.value

    def diff(self, var):
        return Num(0.0)

    def __repr__(self):
        return f"{self.value:g}"


class Var(Node):
    def __init__(self, name):
        self.name = name

    def eval(self, env):
        return env[self.name]

    def diff(self, var):
        return Num(1.0 if var == self.name else 0.0)

    def __repr__(self):
        return self.name


def _is_num(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


class BinOp(Node):
    def __init__(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right

    def eval(self, env):
        a = self.left.eval(env)
        b = self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return a**b

    def diff(self, var):
        a, b = self.left, self.right
        da, db = a.diff(var), b.diff(var)
        if self.op == "+":
            return BinOp("+", da, db).simplified()
        if self.op == "-":
            return BinOp("-", da, db).simplified()
        if self.op == "*":
            return BinOp(
                "+", BinOp("*", da, b).simplified(), BinOp("*", a, db).simplified()
            ).simplified()
        if self.op == "/":
            num = BinOp(
                "-", BinOp("*", da, b).simplified(), BinOp("*", a, db).simplified()
            ).simplified()
            den = BinOp("^", b, Num(2.0)).simplified()
            return BinOp("/", num, den).simplified()
        # power: support constant exponents, the common case for metrics
        if _is_num(b):
            p = b.value
            core = BinOp(
                "*", Num(p), BinOp("^", a, Num(p - 1.0)).simplified()
            ).simplified()
            return BinOp("*", core, da).simplified()
        raise ValueError("cannot differentiate non-constant exponent")

    def simplified(self):
        a, b = self.left, self.right
        if _is_num(a) and _is_num(b):
            return Num(self.eval({}))
        if self.op == "+":
            if _is_num(a, 0.0):
                return b
            if _is_num(b, 0.0):
                return a
        elif self.op == "-":
            if _is_num(b, 0.0):
                return a
        elif self.op == "*":
            if _is_num(a, 0.0) or _is_num(b, 0.0):
                return Num(0.0)
            if _is_num(a, 1.0):
                return b
            if _is_num(b, 1.0):
                return a
        elif self.op == "/":
            if _is_num(a, 0.0):
                return Num(0.0)
            if _is_num(b, 1.0):
                return a
        elif self.op == "^":
            if _is_num(b, 1.0):
                return a
            if _is_num(b, 0.0):
                return Num(1.0)
        return self

    def __repr__(self):
        return f"({self.left!r} {self.op} {self.right!r})"


class Neg(Node):
    def __init__(self, arg):
        self.arg = arg

    def eval(self, env):
        return -self.arg.eval(env)

    def diff(self, var):
        return Neg(self.arg.diff(var)).simplified()

    def simplified(self):
        if _is_num(self.arg):
            return Num(-self.arg.value)
        return self

    def __repr__(self):
        return f"(-{self.arg!r})"


class Call(Node):
    def __init__(self, func, arg):
        self.func = func
        self.arg = arg

    def eval(self, env):
        x = self.arg.eval(env)
        if hasattr(x, "sin"):  # jets and numpy arrays both expose these
            return getattr(x, self.func)() if hasattr(x, self.func) else getattr(np, self.func)(x)
        return getattr(np, self.func)(x)

    def diff(self, var):
        da = self.arg.diff(var)
        if self.func == "sin":
            outer = Call("cos", self.arg)
        elif self.func == "cos":
            outer = Neg(Call("sin", self.arg))
        elif self.func == "exp":
            outer = Call("exp", self.arg)
        else:  # sqrt
            outer = BinOp("/", Num(0.5), Call("sqrt", self.arg))
        return BinOp("*", outer, da).simplified()

    def __repr__(self):
        return f"{self.func}({self.arg!r})"


# --------------------------------------------------------------------------
# Lexer / parser
# --------------------------------------------------------------------------
def _tokenize(text):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*/^()":
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            seen_e = False
            while j < n and (
                text[j].isdigit()
                or text[j] == "."
                or (text[j] in "eE" and not seen_e)
                or (text[j] in "+-" and j > i and text[j - 1] in "eE")
            ):
                if text[j] in "eE":
                    seen_e = True
                j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"bad number '{text[i:j]}'", i)
            tokens.append(("num", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character '{ch}'", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.pos = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            found = "end of input" if tok[0] == "end" else f"'{tok[1]}'"
            raise ExprSyntaxError(f"expected {kind}, found {found}", tok[2])
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected '{tok[1]}'", tok[2])
        return node.simplified()

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[0] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(value)
        if kind == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if kind == "ident":
            self.take()
            if value in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(value, arg)
            if value in self.variables:
                return Var(value)
            raise UnknownIdentifierError(value, pos)
        raise ExprSyntaxError(f"expected a value, found '{value}'", pos)


def parse_metric_expr(text, variables=("u", "v")):
    """Parse a closed-form expression in the given variables.

    Returns the AST.  Raises ExprSyntaxError with the offending offset or
    UnknownIdentifierError for names outside the grammar.
    """
    return _Parser(_tokenize(text), tuple(variables)).parse()


class Expr2:
    """Convenience wrapper for a parsed expression of (u, v)."""

    def __init__(self, text_or_node, variables=("u", "v")):
        if isinstance(text_or_node, Node):
            self.node = text_or_node
        else:
            self.node = parse_metric_expr(text_or_node, variables)
        self.variables = tuple(variables)
        self._dcache = {}

    def __call__(self, u, v):
        return self.node.eval({self.variables[0]: u, self.variables[1]: v})

    def derivative(self, du, dv):
        """Symbolic partial derivative of order (du, dv) as another Expr2."""
        key = (du, dv)
        if key not in self._dcache:
            node = self.node
            for _ in range(du):
                node = node.diff(self.variables[0]).simplified()
            for _ in range(dv):
                node = node.diff(self.variables[1]).simplified()
            self._dcache[key] = Expr2(node, self.variables)
        return self._dcache[key]

    def eval_deriv(self, du, dv, u, v):
        return self.derivative(du, dv)(u, v)

    def jet(self, cap, center=(0.0, 0.0)):
        """Taylor jet at the given center, exact via jet-overloaded evaluation."""
        from .jets import PolyJet

        ju = PolyJet.variable(0, cap, base=center[0])
        jv = PolyJet.variable(1, cap, base=center[1])
        out = self.node.eval({self.variables[0]: ju, self.variables[1]: jv})
        if not isinstance(out, PolyJet):
            out = PolyJet.constant(float(out), cap)
        return out
