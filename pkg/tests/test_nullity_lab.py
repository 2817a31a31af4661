import csv
import io
import math
from fractions import Fraction

import numpy as np
import pytest

from ezstruct.bass_serre import base_vertex, tree_act
from ezstruct.compression import SublinearFn, envelope, hhat
from ezstruct.errors import CertificationError, DepthError, DomainTooSmallError, FitError
from ezstruct.graph_of_groups import GraphOfGroups
from ezstruct.metric_models import CoverConstants
from ezstruct.nullity_lab import (
    CSV_COLUMNS, build_domain, default_cube_side, fit_psi, nullity_certify, run_nullity,
    slope_limit, standard_product_cover, stats_csv, translate_sweep, visual_diameter_trend,
)

BS12 = GraphOfGroups.baumslag_solitar(1, 2)
BS23 = GraphOfGroups.baumslag_solitar(2, 3)
ZZ = GraphOfGroups({"v": 1}, [], "v")


def word(g, *names):
    w = g.identity()
    for n in names:
        w = w * g.generators[n]
    return w


@pytest.fixture(scope="module")
def bs12_sweep():
    dom = build_domain(BS12, 1)
    return dom, translate_sweep(BS12, dom, 8)


def log_map(pair=None):
    return hhat(pair or envelope([], (1, 2)), SublinearFn("log"), log_precomposed=True)


def xi_ray(g, depth=8):
    v = [base_vertex(g)]
    w = g.identity()
    for _ in range(depth):
        w = w * g.generators["t"]
        v.append(tree_act(w, base_vertex(g)))
    return v


# -- domains ----------------------------------------------------------------------

def test_bs12_unit_cube_covers():
    dom = build_domain(BS12, 1, probe_radius=3)
    assert dom.coverage == 1.0 and dom.probe_count > 0


def test_single_vertex_z():
    dom = build_domain(ZZ, 1)
    assert dom.coverage == 1.0 and len(dom.tree_part) == 1 and dom.tree_diameter() == 0


def test_quarter_cube_too_small():
    with pytest.raises(DomainTooSmallError, match="try cube side"):
        build_domain(BS12, Fraction(1, 4))
    assert build_domain(BS12, Fraction(1, 4), strict=False).coverage < 1.0


def test_default_cube_side():
    assert default_cube_side(BS12) == 1
    torus = GraphOfGroups.from_dict({
        "vertices": [{"id": "v", "rank": 2}],
        "edges": [{"id": "t", "from": "v", "to": "v", "minus": [[1, 0], [0, 1]],
                   "plus": [[0, -2], [2, 0]]}], "base": "v"})
    dom = build_domain(torus)
    assert dom.cube_side == 1 and dom.coverage == 1.0


# -- sweeps -------------------------------------------------------------------------

def test_identity_translate_is_k_itself(bs12_sweep):
    dom, stats = bs12_sweep
    s = stats[0]
    assert (s.wordlen, s.tree_dist, s.tree_diam, s.fiber_diam) == (0, 0, 0, float(dom.cube_side))


@pytest.mark.parametrize("k", range(1, 9))
def test_t_powers_double_exactly(bs12_sweep, k):
    _, stats = bs12_sweep
    s = next(x for x in stats if x.rep == "*".join(["t"] * k))
    side = Fraction(1)
    for _ in range(k):
        side *= 2
    assert s.exact_fiber_diam == side and s.tree_dist == k


def test_tree_diameter_is_constant(bs12_sweep):
    _, stats = bs12_sweep
    assert {s.tree_diam for s in stats} == {0}


def test_two_vertex_tree_diameter_preserved():
    g = GraphOfGroups.from_dict({
        "vertices": [{"id": "u", "rank": 1}, {"id": "v", "rank": 1}],
        "edges": [
            {"id": "e", "from": "u", "to": "v", "minus": [[1]], "plus": [[2]], "tree": True},
            {"id": "f", "from": "v", "to": "u", "minus": [[3]], "plus": [[1]]},
        ], "base": "u"})
    dom = build_domain(g)
    stats = translate_sweep(g, dom, 4)
    assert {s.tree_diam for s in stats} == {dom.tree_diameter()} == {1}


def test_visual_diameter_at_most_2R0(bs12_sweep):
    _, stats = bs12_sweep
    assert all(0 <= s.visual_diam <= 10 + 1e-9 for s in stats)


def test_sweep_is_deterministic():
    dom = build_domain(BS12, 1)
    a = stats_csv(translate_sweep(BS12, dom, 6, log_map()))
    b = stats_csv(translate_sweep(BS12, dom, 6, log_map()))
    assert a == b


def test_csv_schema(bs12_sweep):
    _, stats = bs12_sweep
    rows = list(csv.reader(io.StringIO(stats_csv(stats[:5]))))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 6


# -- fitting ---------------------------------------------------------------------

def test_fit_bs12(bs12_sweep):
    _, stats = bs12_sweep
    fit = fit_psi(stats, graph=BS12)
    assert fit.C == 2 and fit.S_star == 0
    assert all(s.fiber_diam <= fit.pair.psi(s.tree_dist) for s in stats)


def test_fit_bs23():
    dom = build_domain(BS23)
    fit = fit_psi(translate_sweep(BS23, dom, 6), graph=BS23)
    # one application of x -> 3x/2 per tree step
    assert fit.C == Fraction(3, 2)


def test_fit_z_is_constant():
    fit = fit_psi(translate_sweep(ZZ, build_domain(ZZ, 1), 5))
    assert fit.C == Fraction(65, 64) and fit.D == 1


def test_fit_rejects_excess_growth(bs12_sweep):
    _, stats = bs12_sweep
    with pytest.raises(FitError):
        fit_psi(stats, lipschitz_C=Fraction(3, 2))


# -- certification -------------------------------------------------------------------

def test_uncompressed_fails_with_t_power(bs12_sweep):
    _, stats = bs12_sweep
    cmap = log_map(fit_psi(stats, graph=BS12).pair)
    _, _, _, consts = standard_product_cover(BS12)
    cert = nullity_certify(stats, consts, cmap.phi_star, wordlen_cap=8)
    assert not cert.certified
    assert cert.counterexample["rep"].replace("*", "") == "t" * len(cert.counterexample["rep"].split("*"))


def test_compressed_certifies():
    dom = build_domain(BS12, 1)
    raw = translate_sweep(BS12, dom, 8)
    cmap = log_map(fit_psi(raw, graph=BS12).pair)
    stats = translate_sweep(BS12, dom, 8, cmap)
    _, _, _, consts = standard_product_cover(BS12)
    cert = nullity_certify(stats, consts, cmap.phi_star, S_star=0, wordlen_cap=8)
    assert cert.certified and cert.counterexample is None and cert.max_ratio <= 1
    assert len(cert.exceptional) <= len(stats)


def test_z_certifies_trivially():
    stats = translate_sweep(ZZ, build_domain(ZZ, 1), 5)
    cmap = log_map(fit_psi(stats).pair)
    cert = nullity_certify(stats, CoverConstants(2.0, 0.25), cmap.phi_star)
    assert cert.certified


def test_visual_trend_has_every_length(bs12_sweep):
    _, stats = bs12_sweep
    trend = visual_diameter_trend(stats)
    assert list(trend) == list(range(9)) and trend[0] > 0


def test_uncompressed_visual_tail_stays_positive(bs12_sweep):
    _, stats = bs12_sweep
    trend = visual_diameter_trend(stats)
    assert min(trend[k] for k in range(4, 9)) > 1.0


# -- slopes -----------------------------------------------------------------------

def test_slope_identity_exact():
    r = slope_limit(BS12, BS12.identity(), xi_ray(BS12), (1.0,), 1, log_map())
    assert r.error == 0 and r.fiber_endpoint == (1.0,)


def test_slope_zero():
    r = slope_limit(BS12, word(BS12, "t"), xi_ray(BS12), (1.0,), 0, log_map())
    assert r.ratio == 0


@pytest.mark.parametrize("w", [("t",), ("a", "t"), ("t^-1",)])
@pytest.mark.parametrize("m", [0.5, 1, 2, math.inf])
def test_slope_limits(w, m):
    g = word(BS12, *w)
    r = slope_limit(BS12, g, xi_ray(BS12), (1.0,), m, log_map(), t_max=1e5)
    assert r.error < 1e-3
    assert r.tree_endpoint == tuple(tree_act(g, v) for v in xi_ray(BS12))
    assert r.fiber_endpoint == (1.0,)
    # errors shrink (or stay at zero) along t >= 10^3
    tail = [e for t, e in r.errors if t >= 1e3 - 1e-6]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_slope_depth_error():
    g = word(BS12, *["t^-1"] * 5)
    with pytest.raises(DepthError):
        slope_limit(BS12, g, xi_ray(BS12, 3), (1.0,), 1, log_map())


def test_slope_needs_linear_control():
    h = hhat(envelope([], (1, 2)), SublinearFn("log"))
    with pytest.raises(CertificationError):
        slope_limit(BS12, BS12.identity(), xi_ray(BS12), (1.0,), 1, h)


# -- pipeline -----------------------------------------------------------------------

def test_run_nullity_report_keys():
    report, stats = run_nullity(BS12, 5, compress="log", cube_side=1)
    assert set(report) >= {"provenance", "config", "domain", "fit", "certificate",
                           "certified_at_scale", "visual_diameter_trend"}
    assert report["certificate"]["certified"] and len(stats) == report["certified_at_scale"]["elements"]
