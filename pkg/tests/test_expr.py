import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monge.expr import (
    ExprSyntaxError, ExpressionError, MissingBindingError, UnknownFunctionError,
    UnknownVariableError, evaluate, parse)

FORCE = ["v", "x", "t"]


def ev(text, **bindings):
    return evaluate(parse(text, bindings.keys()), bindings)


def test_spec_examples():
    assert evaluate(parse("v + 2*t", FORCE), {"v": 1, "t": 2}) == 5
    assert ev("0") == 0
    assert ev("tanh(x)", x=0) == 0
    assert ev("v*v - x", v=2, x=1) == 3


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("sin(", ["t"])
    assert info.value.offset == 4


def test_unknown_variable_named():
    with pytest.raises(UnknownVariableError) as info:
        parse("-w*w*x", ["x"])
    assert info.value.name == "w"


def test_unknown_function():
    with pytest.raises(UnknownFunctionError) as info:
        parse("sinh(x)", ["x"])
    assert info.value.name == "sinh"


@pytest.mark.parametrize("text, expected", [
    ("2+3*4", 14),
    ("2^3^2", 512),
    ("-2^2", -4),
    ("(-2)^2", 4),
    ("2*-3", -6),
    ("2^-1", 0.5),
    ("10/4/5", 0.5),
    ("7-2-1", 4),
    ("--3", 3),
    ("+3", 3),
    ("1.5e2 + .5", 150.5),
    ("pi", math.pi),
    ("e", math.e),
    ("sqrt(16) + abs(-2) + exp(0) + log(1) + cos(0) + sin(0) + tan(0)", 8),
])
def test_precedence_and_literals(text, expected):
    assert ev(text) == pytest.approx(expected, rel=1e-15)


def test_variable_shadows_constant():
    assert ev("e + 1", e=2) == 3


def test_vars_in_order_of_appearance():
    assert parse("t*x + v + x", FORCE).vars == ("t", "x", "v")


def test_missing_binding():
    e = parse("v*x", FORCE)
    with pytest.raises(MissingBindingError) as info:
        evaluate(e, {"v": 1})
    assert info.value.names == ("x",)


def test_non_finite_results_returned():
    assert ev("1/x", x=0) == math.inf
    assert math.isnan(ev("log(x)", x=-1))
    assert ev("log(x)", x=0) == -math.inf
    assert math.isnan(ev("sqrt(x)", x=-1))
    assert math.isnan(ev("x^0.5", x=-4))


def test_array_bindings_broadcast():
    out = ev("x^2 + 1", x=np.array([0.0, 1.0, 2.0]))
    np.testing.assert_array_equal(out, [1.0, 2.0, 5.0])


def test_rename():
    e = parse("rho1^2 + 1", ["rho1"]).rename({"rho1": "lam"})
    assert e.vars == ("lam",)
    assert evaluate(e, {"lam": 3}) == 10


def test_bytes_accepted():
    assert evaluate(parse(b"x+1", ["x"]), {"x": 1}) == 2


@pytest.mark.parametrize("text", ["", "   ", "1 +", "(1", "1)", "x y", "3 $ 4", "sin x", "f(1)", ",", "2^"])
def test_malformed_inputs_raise_structured_errors(text):
    with pytest.raises(ExpressionError):
        parse(text, ["x"])


def test_deep_nesting_is_an_error_not_a_crash():
    with pytest.raises(ExprSyntaxError):
        parse("(" * 5000 + "1" + ")" * 5000)
    with pytest.raises(ExprSyntaxError):
        parse("-" * 5000 + "1")


@given(st.binary(max_size=64))
@settings(max_examples=300)
def test_parse_total_on_bytes(data):
    try:
        parse(data, ["x", "v", "t"])
    except ExpressionError:
        pass


@given(st.text(alphabet="xvt0123456789.e+-*/^() sincotahxplgqrb,", max_size=40))
@settings(max_examples=300)
def test_parse_total_on_grammar_alphabet(text):
    try:
        parse(text, ["x", "v", "t"])
    except ExpressionError:
        pass


# {{{ round trip

def _atoms():
    return st.one_of(
        st.sampled_from(["x", "v", "t", "pi"]),
        st.floats(min_value=0, max_value=1e3, allow_nan=False).map(repr),
    )


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/^"), children).map(lambda p: f"({p[0]}{p[1]}{p[2]})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh", "abs", "sqrt", "log", "tan"]),
                  children).map(lambda p: f"{p[0]}({p[1]})"),
    )


expressions = st.recursive(_atoms(), _extend, max_leaves=12)


@given(expressions, st.integers(0, 2**32 - 1))
@settings(max_examples=150, deadline=None)
def test_pretty_print_round_trip_bitwise(text, seed):
    e1 = parse(text, FORCE)
    e2 = parse(e1.pretty(), FORCE)
    assert e2.root == e1.root
    rng = np.random.default_rng(seed)
    for _ in range(100):
        b = dict(zip(FORCE, rng.uniform(-3, 3, size=3)))
        r1, r2 = evaluate(e1, b), evaluate(e2, b)
        assert (math.isnan(r1) and math.isnan(r2)) or r1 == r2

# }}}


def test_evaluation_deterministic_across_threads():
    e = parse("sin(x)*exp(-t) + v^3/7", FORCE)
    rng = np.random.default_rng(0)
    bindings = [dict(zip(FORCE, rng.normal(size=3))) for _ in range(200)]
    expected = [evaluate(e, b) for b in bindings]
    results = {}

    def work(k):
        results[k] = [evaluate(e, b) for b in bindings]

    threads = [threading.Thread(target=work, args=(k,)) for k in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for k in range(8):
        assert results[k] == expected
