import math

import numpy as np
import pytest

from ezstruct.compression import SublinearFn
from ezstruct.errors import CertificationError, InvalidInputError, ResourceGuardError
from ezstruct.obstructions import (
    RACG, davis_index, growth_sandwich_check, racg_growth, racg_multiply,
    t4_components, t4_contradiction_index, t4_formula,
)

from oracles import racg_growth_oracle

LOG = SublinearFn("log")


@pytest.mark.parametrize("r", range(1, 8))
def test_t4_components_match_formula(r):
    assert t4_components(r) == t4_formula(r) == 4 * 3 ** (r - 1)


def test_t4_radius_must_be_positive():
    with pytest.raises(InvalidInputError):
        t4_components(0)


def _index_oracle(phi, C):
    # first n at which the component count at radius n beats the one at the phi-radius
    n = 1
    while True:
        rad = max(1, math.ceil(phi(2 * n) + C))
        if 4 * 3 ** (n - 1) > 4 * 3 ** (rad - 1):
            return n
        n += 1


def test_contradiction_index_log():
    idx = t4_contradiction_index(LOG, 1)
    assert idx.n == _index_oracle(math.log1p, 1) == 5
    assert idx.left > idx.right and idx.radius == 4


def test_contradiction_index_zero_function():
    assert t4_contradiction_index(lambda x: 0 * x, 0).n == 2


def test_contradiction_index_rejects_linear():
    with pytest.raises(CertificationError):
        t4_contradiction_index(lambda x: 0.9 * x, 1)


# -- RACG growth --------------------------------------------------------------------

def test_free_racg_on_two_generators():
    assert racg_growth(RACG.free(2), 6).beta == [1, 3, 5, 7, 9, 11, 13]


def test_commuting_pair_is_finite():
    assert racg_growth(RACG(("s", "u"), frozenset({(0, 1)})), 5).beta == [1, 3, 4, 4, 4, 4]


def test_pentagon_matches_tits_oracle():
    g = RACG.cycle(5)
    oracle = racg_growth_oracle(5, sorted(g.commuting), 8)
    assert racg_growth(g, 8).beta == oracle == [1, 6, 21, 61, 166, 441, 1161, 3046, 7981]


@pytest.mark.parametrize("k", [4, 6])
def test_other_cycles_match_oracle(k):
    g = RACG.cycle(k)
    assert racg_growth(g, 6).beta == racg_growth_oracle(k, sorted(g.commuting), 6)


def test_normal_form_involution():
    g = RACG.cycle(5)
    w = ()
    for s in [0, 2, 4, 1, 3, 0]:
        w = racg_multiply(g, w, s)
    for s in reversed([0, 2, 4, 1, 3, 0]):
        w = racg_multiply(g, w, s)
    assert w == ()


def test_growth_guard_keeps_partial_table():
    with pytest.raises(ResourceGuardError) as info:
        racg_growth(RACG.free(3), 20, max_states=100)
    partial = info.value.partial
    assert not partial.complete and partial.beta[:3] == [1, 4, 10]


def test_spheres():
    assert racg_growth(RACG.free(2), 3).spheres() == [1, 2, 2, 2]


def test_racg_json():
    g = RACG.from_json('{"generators": ["a", "b", "c"], "commuting": [[0, 2]]}')
    assert g.commute(2, 0) and not g.commute(0, 1)
    with pytest.raises(InvalidInputError):
        RACG.from_json('{"generators": ["a", "a"]}')
    with pytest.raises(InvalidInputError, match="line 1"):
        RACG.from_json('{"generators": [}')


# -- Davis index ------------------------------------------------------------------------

def _davis_oracle(K, eps, R, S, phi):
    n = 1
    while True:
        half = (n / K - eps - R) / 2
        if phi(2 * (K * (n + S + 1) + eps + R)) < half and R < half:
            return n
        n += 1


@pytest.mark.parametrize("K,eps,R,S,phi,expected", [
    (1, 0, 1, 0, math.log1p, 7),
    (1, 0, 1, 0, lambda x: 0 * x, 4),
    (2, 1, 2, 3, math.sqrt, 80),
])
def test_davis_index(K, eps, R, S, phi, expected):
    vec = {math.log1p: np.log1p, math.sqrt: np.sqrt}.get(phi, phi)
    idx = davis_index(K, eps, R, S, vec)
    assert idx.n == _davis_oracle(K, eps, R, S, phi) == expected
    assert idx.phi_value < idx.half_inner_radius


def test_davis_rejects_bad_constants():
    with pytest.raises(InvalidInputError):
        davis_index(0.5, 0, 1, 0, LOG)


# -- ball sandwich ------------------------------------------------------------------------

def test_growth_sandwich_on_t4():
    assert growth_sandwich_check(6) == []
