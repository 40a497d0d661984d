import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arch_corpus import SETTINGS, TABLE_STRINGS, VARIABLE_N_FAILURES
from graphcnn.archspec import (
    FC,
    GFC,
    ArchPlan,
    Dropout,
    EmbedPool,
    GConv,
    GridMaxPool,
    ZeroHop,
    param_counts,
    parse_arch,
    render_arch,
)
from graphcnn.errors import ArchSyntaxError, DimensionError, EmptyPlan
from graphcnn.network import instantiate


@pytest.mark.parametrize("text, layers", [
    ("2×(32F)-FC128", [GConv(32), GConv(32), FC(128)]),
    ("2x64F-Pool32-32F-Pool8-FC256",
     [GConv(64), GConv(64), EmbedPool(32), GConv(32), EmbedPool(8), FC(256)]),
    ("32F-P/2-32F-FC128", [GConv(32), GridMaxPool(), GConv(32), FC(128)]),
    ("2x(48F-Drop-0hop48)", [GConv(48), Dropout(0.5), ZeroHop(48)] * 2),
    ("GFC32", [GFC(32)]),
    ("fc10", [FC(10)]),
    ("Drop0.25-FC", [Dropout(0.25), FC(128)]),
])
def test_parse_examples(text, layers):
    assert list(parse_arch(text).layers) == layers


@pytest.mark.parametrize("text, offset", [
    ("Pool0", 4),
    ("32F-", 4),
    ("32G", 2),
    ("2x(32F", 6),
    ("32F FC", 3),
    ("×32F", 0),
    ("2×(32F)-Bad", 9),  # "×" is two bytes in UTF-8
])
def test_syntax_errors_carry_byte_offsets(text, offset):
    with pytest.raises(ArchSyntaxError) as info:
        parse_arch(text)
    assert info.value.offset == offset


def test_render_canonical():
    assert render_arch([GConv(32), GConv(32), FC(128)]) == "32F-32F-FC128"
    with pytest.raises(EmptyPlan):
        render_arch([])
    with pytest.raises(EmptyPlan):
        parse_arch("")


def test_non_decreasing_pool_targets_warn():
    with pytest.warns(UserWarning):
        parse_arch("Pool8-Pool16")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_arch("Pool16-Pool8")


@pytest.mark.parametrize("table, text, setting", TABLE_STRINGS)
def test_table_corpus_round_trips(table, text, setting):
    plan = parse_arch(text)
    rendered = render_arch(plan)
    assert parse_arch(rendered) == plan
    assert render_arch(parse_arch(rendered)) == rendered


@pytest.mark.parametrize("text", VARIABLE_N_FAILURES)
def test_fc_on_variable_graphs_fails(text):
    c, l, k, _ = SETTINGS["variable"]
    with pytest.raises(DimensionError):
        instantiate(text, c, l, k)


def test_conv_param_count():
    assert param_counts(parse_arch("32F-FC10"), 3, 2)[0] == 224


def test_param_counts_table_v():
    counts = param_counts(parse_arch("2x64F-Pool32-32F-Pool8-FC256"), 8, 2)
    assert counts == [2 * 8 * 64 + 64, 2 * 64 * 64 + 64, 2 * 64 * 32 + 32,
                      2 * 64 * 32 + 32, 2 * 32 * 8 + 8, 8 * 32 * 256 + 256]


def test_param_counts_match_instantiated_network():
    plan = parse_arch("2x16F-Pool8-FC32")
    net = instantiate(plan, 4, 2, 3)
    planned = sum(param_counts(plan, 4, 2))
    bn = sum(p.size for n, p in net.named_parameters() if ".bn" in n)
    final_fc = 32 * 3 + 3
    assert net.n_params == planned + bn + final_fc


def test_grid_param_counts():
    counts = param_counts(parse_arch("16F-P/2-16F-FC32"), 1, 9, grid=(8, 8))
    assert counts == [9 * 16 + 16, 0, 9 * 16 * 16 + 16, 4 * 4 * 16 * 32 + 32]


_layer = st.one_of(
    st.integers(1, 128).map(GConv),
    st.integers(1, 64).map(ZeroHop),
    st.integers(1, 64).map(EmbedPool),
    st.just(GridMaxPool()),
    st.integers(1, 512).map(FC),
    st.integers(1, 64).map(GFC),
    st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75]).map(Dropout),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(_layer, min_size=1, max_size=8))
def test_render_parse_round_trip(layers):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plan = ArchPlan(tuple(layers))
        assert parse_arch(render_arch(plan)) == plan


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="0123456789xF-PoolCGDrp/()×h.", max_size=20))
def test_parser_never_crashes(text):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            parse_arch(text)
        except (ArchSyntaxError, EmptyPlan):
            pass
