import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netred.mas import realize
from netred.sysfile import ParseError, SystemFile, bundled_path, format_number, load_system

from conftest import small_system

MINIMAL = """netred-system 1
[graph]
vertices 3
edge 1 2 1
edge 2 3 2.5
[inertias]
uniform 1
[input]
leaders 1
[output]
incidence
[agent]
single_integrator
"""


def test_bundled_files_round_trip():
    for name in ("small_network.sys", "vanderpol.sys"):
        text = bundled_path(name).read_text()
        assert SystemFile.loads(text).dumps() == text


def test_small_network_file_matches_reference_system():
    sys = load_system("small_network").to_linear_mas()
    ref = small_system()
    for a, b in zip(realize(sys).__dict__.values(), realize(ref).__dict__.values()):
        assert np.array_equal(a, b)


def test_vanderpol_file():
    sf = load_system("vanderpol")
    assert sf.is_nonlinear and sf.graph().n_vertices == 100 and sf.graph().n_edges == 180
    sys = sf.to_nonlinear_mas()
    assert sys.order == 200
    with pytest.raises(ValueError):
        sf.to_linear_mas()


def test_minimal_round_trip_and_comments():
    commented = "# a comment\n" + MINIMAL.replace("[inertias]", "\n[inertias]  ")
    sf = SystemFile.loads(commented)
    assert sf.dumps() == MINIMAL
    assert sf.edges == [(1, 2, 1.0), (2, 3, 2.5)]


def test_linear_agent_and_matrices_round_trip():
    sf = SystemFile(2, [(1, 2, 0.1)], inertias=("values", [1.0, 3.0]),
                    input=("matrix", np.array([[1.0, 0.5], [0.0, 1 / 3]])),
                    output=("matrix", np.array([[1.0, -1.0]])),
                    agent=("linear", {"E": np.eye(2), "A": [[0.0, 1.0], [-1.0, -0.2]],
                                      "B": [[0.0], [1.0]], "C": [[1.0, 0.0]], "K": [[2.0]]}))
    text = sf.dumps()
    back = SystemFile.loads(text)
    assert back.dumps() == text
    assert back.input[1][1, 1] == 1 / 3
    mas = back.to_linear_mas()
    assert mas.agent.n == 2


def test_number_format():
    assert format_number(5.0) == "5"
    assert format_number(0.1) == "0.1"
    assert format_number(1 / 3) == "0.3333333333333333"
    assert float(format_number(np.pi)) == np.pi
    assert format_number(1e20) == "1e+20"


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=1e-6, max_value=1e6, allow_nan=False), min_size=2, max_size=6))
def test_random_round_trip(weights):
    n = len(weights) + 1
    edges = [(i, i + 1, w) for i, w in enumerate(weights, start=1)]
    sf = SystemFile(n, edges, inertias=("values", list(reversed(weights)) + [1.0]),
                    input=("leaders", [1, n]), output=("identity",))
    text = sf.dumps()
    again = SystemFile.loads(text)
    assert again.dumps() == text
    assert [w for _, _, w in again.edges] == weights


@pytest.mark.parametrize("text,line,col", [
    (MINIMAL.replace("netred-system 1", "netred-system 2"), 1, 1),
    (MINIMAL.replace("edge 1 2 1", "edge 1 x 1"), 4, 8),
    (MINIMAL.replace("edge 1 2 1", "edge 1 4 1"), 4, 8),
    (MINIMAL.replace("edge 1 2 1", "edge 1 2 -1"), 4, 10),
    (MINIMAL.replace("edge 1 2 1", "colour 1 2 1"), 4, 1),
    (MINIMAL.replace("uniform 1", "uniform 0"), 7, 9),
    (MINIMAL.replace("leaders 1", "leaders 9"), 9, 9),
    (MINIMAL.replace("incidence", "incidences"), 11, 1),
    (MINIMAL.replace("single_integrator", "double_integrator"), 13, 1),
    (MINIMAL.replace("vertices 3", "vertices"), 3, 10),
    (MINIMAL.replace("edge 2 3 2.5", "edge 2 3 2.5 7"), 5, 14),
])
def test_parse_errors_report_position(text, line, col):
    with pytest.raises(ParseError) as info:
        SystemFile.loads(text)
    assert (info.value.line, info.value.column) == (line, col)
    assert f"line {line}, column {col}" in str(info.value)


def test_parse_error_cases_without_position_check():
    for bad in (MINIMAL.replace("[output]\nincidence\n", ""),
                MINIMAL + "extra\n",
                MINIMAL.replace("leaders 1", "leaders 1\nleaders 2"),
                MINIMAL.replace("vertices 3", "vertices 3\ngrid 1 3 1")):
        with pytest.raises(ParseError):
            SystemFile.loads(bad)


def test_disconnected_graph_parses():
    sf = SystemFile.loads(MINIMAL.replace("edge 2 3 2.5\n", ""))
    assert sf.graph().n_edges == 1
