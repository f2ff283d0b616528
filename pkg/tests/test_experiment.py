import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdfdot.config import (
    CaseConfig,
    GridSettings,
    NoiseSpec,
    case_from_mapping,
    case_to_mapping,
    parse_config_text,
    parse_overrides,
)
from tdfdot.errors import ConfigurationError
from tdfdot.experiment import (
    add_noise,
    case_grid,
    case_input,
    clean_data,
    read_pgm,
    run_case,
    synthesize_data,
    truth_fields,
    write_pgm,
)
from tdfdot.grid import GammaSpec, build_grid
from tdfdot.inversion import TpgConfig
from tdfdot.observation import forward
from tdfdot.phantoms import CASE_1A, CASE_1B, Disc, PhantomSpec, make_phantom

SMALL = GridSettings(nx=13, ny=13, T=0.5, dt=0.05)


def small_case(**kw):
    base = dict(grid=SMALL, noise=NoiseSpec(delta_e=0.01, delta_em=0.01, seed=3),
                step1=TpgConfig(max_outer=4, log_every=0), step2=TpgConfig(max_outer=4, log_every=0))
    base.update(kw)
    return CaseConfig(**base)


def test_case_phantoms():
    g = build_grid(65, 65)
    X, Y = g.mesh()
    f = make_phantom(CASE_1A["mu_f"], g)
    assert f[int(0.4 * 64), int(0.4 * 64)] == 2.0 and f[0, 0] == 0.0
    assert np.all(make_phantom(CASE_1A["mu_a"], g) == 1.0)
    a = make_phantom(CASE_1B["mu_a"], g)
    assert a[int(0.3 * 64), int(0.3 * 64)] == 2.0 and a[-1, -1] == 1.0


@given(st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.02, 0.15), st.floats(0.5, 3))
def test_phantom_mirror_symmetry(cx, cy, r, v):
    g = build_grid(33, 17, 1.0, 0.5)
    spec = PhantomSpec(1.0, (Disc(cx, cy, r, v),))
    assert np.array_equal(make_phantom(spec.mirrored_x(), g), make_phantom(spec, g)[::-1])


def test_phantom_clearance_checks():
    g = build_grid(9, 9, 1.0, 0.5)
    with pytest.raises(ConfigurationError):
        make_phantom(PhantomSpec(0.0, (Disc(0.1, 0.5, 0.2, 1.0),)), g)
    with pytest.raises(ConfigurationError):
        make_phantom(PhantomSpec(0.0, (Disc(0.4, 0.5, 0.1, 1.0), Disc(0.6, 0.5, 0.1, 1.0)), d2=0.05), g)
    assert PhantomSpec.parse(1.0, "0.5,0.5,0.1,2; 0.2,0.2,0.05,3").discs[1] == Disc(0.2, 0.2, 0.05, 3.0)


def test_zero_noise_is_bitwise_clean():
    case = small_case(noise=NoiseSpec(0.0, 0.0, seed=11))
    d = synthesize_data(case)
    assert np.array_equal(d.psi_e.values, d.clean_e.values)
    assert d.delta_abs_e == 0.0


def test_clean_data_equals_forward_traces():
    case = small_case()
    g = case_grid(case)
    e, em = clean_data(case, g)
    t = truth_fields(case, g)
    bc = case_input(case, g)
    assert np.array_equal(e.values, forward("excitation", t["mu_af"], bc, c_plus=None).trace.values)
    assert np.array_equal(em.values, forward("combined", t["mu_a"], bc, c_plus=None).trace.values)


def test_fixed_seed_is_deterministic():
    a = synthesize_data(small_case())
    b = synthesize_data(small_case())
    c = synthesize_data(small_case(), seed=99)
    assert np.array_equal(a.psi_e.values, b.psi_e.values)
    assert not np.array_equal(a.psi_e.values, c.psi_e.values)


def test_delta_abs_linear_in_delta():
    g = build_grid(9, 9, 0.5, 0.05)
    base = forward("excitation", np.ones(g.shape), case_input(small_case(), g)).trace
    mask = np.abs(base.values) > 1e-8
    vals = []
    for delta in (0.01, 0.02):
        noisy = add_noise(base, delta, 10, np.random.default_rng(0))
        vals.append(noisy.values[mask] / base.values[mask] - 1.0)
    assert np.allclose(vals[1], 2 * vals[0], rtol=1e-9, atol=1e-15)


def test_averaged_noise_statistics():
    g = build_grid(9, 9, 0.5, 0.05)
    clean = forward("excitation", np.ones(g.shape), case_input(small_case(), g)).trace
    delta = 0.01
    mask = np.abs(clean.values) > 1e-8
    devs = []
    for seed in range(100):
        noisy = add_noise(clean, delta, 10, np.random.default_rng(seed))
        rel = (noisy.values[mask] - clean.values[mask]) / clean.values[mask]
        devs.append(rel.std())
    mean = float(np.mean(devs))
    se = float(np.std(devs) / math.sqrt(len(devs)))
    assert abs(mean - delta / math.sqrt(10)) <= 3 * se + 1e-3 * delta


def test_delta_modes():
    nominal = synthesize_data(small_case())
    averaged = synthesize_data(small_case(noise=NoiseSpec(0.01, 0.01, seed=3, delta_mode="averaged")))
    assert averaged.delta_abs_e == pytest.approx(nominal.delta_abs_e / math.sqrt(10))


def test_refined_data_mesh_is_close_to_inversion_mesh():
    coarse = clean_data(small_case())[0]
    fine = clean_data(small_case(data_multiplier=2))[0]
    assert fine.values.shape == coarse.values.shape
    # the start-up layer from incompatible data differs strongly between meshes; later levels agree
    late = slice(-3, None)
    diff = np.linalg.norm(fine.values[late] - coarse.values[late])
    assert diff < 0.03 * np.linalg.norm(coarse.values[late])


def test_refined_data_on_subboundary():
    case = small_case(data_multiplier=2, gamma="left,top:2:9")
    e, _ = clean_data(case)
    assert e.gamma == GammaSpec.parse("left,top:2:9")


def test_pgm_roundtrip(tmp_path):
    q = np.linspace(0, 3, 35).reshape(7, 5)
    write_pgm(tmp_path / "q.pgm", q)
    back, lo, hi = read_pgm(tmp_path / "q.pgm")
    assert (lo, hi) == (0.0, 3.0)
    assert np.abs(back - q).max() <= 3.0 / 255
    assert (tmp_path / "q.pgm").read_bytes().startswith(b"P5\n# linear map")


def test_run_case_is_reproducible(tmp_path):
    case = small_case()
    run_case(case, tmp_path / "a")
    run_case(case, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir() if p.suffix in (".csv", ".json", ".txt"))
    assert "report_step1.json" in files and "summary.txt" in files
    for name in files:
        if name == "timing.json":
            continue
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_run_case_failure_writes_manifest(tmp_path, monkeypatch):
    import json

    import tdfdot.experiment as ex

    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(ex, "tpg_solve", boom)
    with pytest.raises(RuntimeError):
        run_case(small_case(), tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "failed" and "solver exploded" in man["error"]
    assert "data_e.csv" in man["artifacts"]


def test_config_text_parsing():
    m = parse_config_text("# comment\n grid.nx = 33  # trailing\n\nnoise.delta_e=0.01\n")
    assert m == {"grid.nx": "33", "noise.delta_e": "0.01"}
    with pytest.raises(ConfigurationError):
        parse_config_text("grid.nx 33")
    assert parse_overrides(["a.b=1", "c = x=y"]) == {"a.b": "1", "c": "x=y"}
    with pytest.raises(ConfigurationError):
        parse_overrides(["novalue"])


def test_case_mapping_roundtrip():
    case = case_from_mapping({"case.preset": "1b", "grid.nx": "33", "steps.beta2": "0.5",
                              "step2.max_outer": "7", "noise.delta_mode": "averaged"})
    assert case.mu_a == CASE_1B["mu_a"] and case.grid.ny == 33
    assert case.step1.penalty.beta2 == 0.5 and case.step2.max_outer == 7
    again = case_from_mapping(case_to_mapping(case))
    assert again == case


def test_case_mapping_rejects_bad_values():
    for bad in ({"grid.nx": "x"}, {"unknown.key": "1"}, {"case.preset": "9z"}, {"steps.tau": "0.9"},
                {"noise.delta_mode": "loud"}, {"run.steps": "3"}, {"input": "/no/such/file.csv"}):
        with pytest.raises((ConfigurationError, ValueError)):
            case_from_mapping(bad)


def test_case_defaults():
    c = CaseConfig()
    assert c.step1.tau == 1.05 and c.step1.penalty.beta1 == 0.1 and c.step1.penalty.beta2 == 1.0
    assert replace(c, steps="1").steps == "1"
