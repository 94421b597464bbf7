import json
import math

import pytest

import sparseloc as sl

LINE = {
    "dimension": 1,
    "sites": {"generator": "lattice", "window_radius": 12},
    "laws": {
        "rule": "shells",
        "shells": [{"r_min": 4, "r_max": 8, "law": {"kind": "bernoulli", "p": 0.5}}],
        "fallback": {"kind": "point_masses", "atoms": [0], "weights": [1]},
    },
    "potential": {"profile": "indicator", "height": 1.0, "radius": 0.5},
}


def line_oracle(p=0.5):
    sites = [-8, -7, -6, -5, -4, 4, 5, 6, 7, 8]
    total = 0.0
    for mask in range(1 << 10):
        w = 1.0
        spoiled = []
        for j, s in enumerate(sites):
            on = mask >> j & 1
            w *= p if on else 1 - p
            if on:
                spoiled.append(abs(s))
        free = any(
            all(not (r < t <= r + 2) for t in spoiled) for r in (4 + k * 0.001 for k in range(2001))
        )
        if not free:
            total += w
    return total


def test_version():
    assert sl.__version__


def test_surface_area_of_a_point():
    s = sl.generalized_surface_area(sl.make_point([0.0, 0.0]))
    assert abs(s["sigma"] - (1 + math.sqrt(5)) / 2 * math.pi) < 0.05 * 5.083


def test_a_n_oracle():
    model = sl.Model.from_json(json.dumps(LINE))
    assert model.dim == 1
    exact = sl.brute_force_a_n(model, 0.5, 2.0, 2)
    assert exact == pytest.approx(line_oracle(), abs=1e-12)
    mc = sl.estimate_a_n(model, 0.5, 2.0, 2, 20000, 3)
    assert abs(mc["value"] - exact) <= 3 * mc["std_error"]
    with pytest.raises(sl.BudgetExceeded):
        sl.brute_force_a_n(model, 0.5, 2.0, 2, max_sites=3)


def test_bound_closed_form():
    value, vacuous = sl.a_n_bound(2.0, 0.25, 10)
    assert abs(value - 0.00332) <= 1e-5
    assert not vacuous
    with pytest.raises(ValueError):
        sl.a_n_bound(2.0, 0.5, 3)


def test_free_chain_and_resolvent():
    op = sl.free_operator([100], 1.0)
    values, vectors = sl.eigenpairs(op, -1.0, 5.0)
    exact = [2 - 2 * math.cos(k * math.pi / 101) for k in range(1, 101)]
    assert max(abs(a - b) for a, b in zip(values, exact)) <= 1e-10
    assert sl.ipr(vectors[0]) == pytest.approx(sum(x**4 for x in vectors[0]))
    r = sl.resolvent_decay(sl.free_operator([400], 1.0), -2.0)
    assert r["rate"] == pytest.approx(math.acosh(2.0), rel=0.01)


def test_config_roundtrip(tmp_path):
    (tmp_path / "line.json").write_text(json.dumps(LINE))
    cfg = {
        "pipeline": "lemma-mc",
        "model_file": "line.json",
        "seeds": [1, 2],
        "output_dir": "out",
        "lemma": {"eps": 0.5, "a": 2.0, "n_min": 2, "n_max": 2, "trials": 1000},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert len(sl.validate_config(str(path))) == 16
    manifest = sl.run_config(str(path))
    assert manifest["ok"]
    assert [s["stage"] for s in manifest["stages"]] == ["estimate"]
    files = sl.emit_plotdata(str(tmp_path / "out" / "manifest.jsonl"))
    assert "plotdata/an_series.csv" in files

    cfg["lemma"]["eps"] = 0
    path.write_text(json.dumps(cfg))
    with pytest.raises(sl.ConfigError, match="lemma.eps"):
        sl.validate_config(str(path))
