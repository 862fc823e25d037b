import json
import os

import numpy as np
import pytest

from eqanis.cli import main, read_grid_csv, read_map_csv, read_signal_csv, write_signal_csv
from eqanis.config import ConfigError, config_hash, load_config, parse_override
from eqanis.system import read_sm

SMALL = ["--set", "grid.nx=5", "--set", "grid.ny=4", "--set", "grid.fov_mm=[20,16]"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# --- config ------------------------------------------------------------------


def test_overrides_and_validation(tmp_path):
    assert parse_override("a.b.c=3") == {"a": {"b": {"c": 3}}}
    assert parse_override("anisotropy.type=aligned") == {"anisotropy": {"type": "aligned"}}
    with pytest.raises(ConfigError):
        parse_override("novalue")
    cfg = load_config(None, ["grid.nx=9", "recon.lambda_r=0.5"])
    assert cfg["grid"]["nx"] == 9 and cfg["recon"]["lambda_r"] == 0.5
    for bad in ["grid.bogus=1", "particle.diameter_nm=-3", "anisotropy.type=cubic", "n_jobs=0",
                "reduced.lambda_rule=other", "sequence.dividers=[102,90]"]:
        with pytest.raises(ConfigError):
            load_config(None, [bad])
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"anisotropy": {"type": "aligned", "K_anis": 2000, "angle_deg": 45}}))
    cfg = load_config(str(p))
    assert cfg["anisotropy"] == {"type": "aligned", "K_anis": 2000, "angle_deg": 45}
    (tmp_path / "bad.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "bad.json"))


def test_config_hash_is_canonical():
    a = load_config(None, ["grid.nx=3", "seed=4"])
    b = load_config(None, ["seed=4", "grid.nx=3"])
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(load_config(None, ["grid.nx=3"]))


# --- subcommands ----------------------------------------------------------------


def test_simulate_sm_round_trip_and_compare(tmp_path, capsys):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    assert run(capsys, "simulate-sm", "--model", "eqanis", *SMALL, "-o", str(a))[0] == 0
    S = read_sm(a)
    assert S.data.shape == (2, 817, 20) and S.model == "eqanis"
    assert S.meta["grid"]["nx"] == 5 and S.meta["anisotropy"]["type"] == "fluid-b3"
    b.write_bytes(a.read_bytes())
    code, out, _ = run(capsys, "compare-sm", str(a), str(b), "-o", str(tmp_path / "t.csv"))
    assert code == 0
    assert "mean eps_SM 0.00000e+00" in out
    rows = (tmp_path / "t.csv").read_text().strip().splitlines()
    assert len(rows) > 1 and all(float(r.split(",")[-1]) == 0.0 for r in rows[1:])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["outputs"]) == {"a.bin", "t.csv"}
    assert man["outputs"]["a.bin"]["command"] == "simulate-sm"


def test_reduced_and_render(tmp_path, capsys):
    sm = tmp_path / "r.bin"
    assert run(capsys, "simulate-sm", "--model", "reduced", *SMALL, "-o", str(sm))[0] == 0
    assert read_sm(sm).model == "reduced-eqanis"
    assert run(capsys, "render", "--sm", str(sm), "--kx", "2", "--ky", "1", "-o", str(tmp_path / "row.png"))[0] == 0
    assert (tmp_path / "row.png").read_bytes()[:4] == b"\x89PNG"
    assert run(capsys, "render", "--sm", str(sm), "--k", "5000", "-o", str(tmp_path / "x.png"))[0] == 1
    assert run(capsys, "render", "-o", str(tmp_path / "y.png"))[0] == 1


def test_signal_and_recon(tmp_path, capsys):
    sm = tmp_path / "s.bin"
    grid = ["--set", "grid.nx=9", "--set", "grid.ny=8", "--set", "grid.fov_mm=[18,16]"]
    assert run(capsys, "simulate-sm", "--model", "eqanis", *grid, "-o", str(sm))[0] == 0
    sig = tmp_path / "u.csv"
    code, out, _ = run(capsys, "signal", "--phantom", "disk", "--radius", "4", "--sm", str(sm), *grid,
                       "--snr-db", "40", "--seed", "3", "-o", str(sig))
    assert code == 0 and "disk" in out
    u, sigma = read_signal_csv(sig)
    assert u.size == 2 * 817 and np.all(sigma == sigma[0]) and sigma[0] > 0
    truth = tmp_path / "u_phantom.csv"
    vals, shape = read_grid_csv(truth)
    assert shape == (8, 9) and vals.sum() > 0
    code, out, _ = run(capsys, "recon", "--sm", str(sm), "--signal", str(sig), "--truth", str(truth), *grid,
                       "--set", "recon.lambda_r=0.001", "-o", str(tmp_path / "c.csv"))
    assert code == 0
    assert float(out.split("NRMSE")[1]) < 0.5
    c, _ = read_grid_csv(tmp_path / "c.csv")
    assert np.all(c >= 0) and (tmp_path / "c.png").exists()
    # the model path evaluates only occupied cells and must agree with the SM path
    sig2 = tmp_path / "v.csv"
    assert run(capsys, "signal", "--phantom", "disk", "--radius", "4", "--model", "eqanis", *grid,
               "--snr-db", "inf", "-o", str(sig2))[0] == 0
    v, _ = read_signal_csv(sig2)
    A = read_sm(sm).matrix()
    np.testing.assert_allclose(v, A @ vals, rtol=1e-10, atol=1e-12 * np.abs(v).max())


def test_signal_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    u = rng.normal(size=7) + 1j * rng.normal(size=7)
    s = rng.uniform(0.1, 1, 7)
    write_signal_csv(tmp_path / "s.csv", u, s)
    u2, s2 = read_signal_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(u, u2)
    np.testing.assert_array_equal(s, s2)


def test_oracle_check_and_maps(tmp_path, capsys):
    code, out, _ = run(capsys, "oracle-check", "--n-points", "20", "-o", str(tmp_path / "o.csv"))
    assert code == 0 and "PASS" in out
    assert run(capsys, "oracle-check", "--n-points", "5", "--tol", "1e-30")[0] == 2
    out_csv = tmp_path / "m.csv"
    code, out, _ = run(capsys, "error-map", "--model-a", "eqanis", "--model-b", "eq", "--diameters", "15,25,2",
                       "--k-values", "0,4000,2", "--offsets", "3", "-o", str(out_csv))
    assert code == 0
    ys, xs, vals, label = read_map_csv(out_csv)
    assert vals.shape == (2, 2) and vals[0, 0] == pytest.approx(0.0, abs=1e-10) and vals[1, 1] > 0
    assert (tmp_path / "m.png").exists()
    code, out, _ = run(capsys, "truncation-map", "--diameters", "15,25,2", "--k-values", "0,4000,2", "--offsets", "3",
                       "-o", str(tmp_path / "t.csv"))
    assert code == 0 and (tmp_path / "t_adaptive.csv").exists()
    assert run(capsys, "render", "--map", str(out_csv), "-o", str(tmp_path / "mm.png"))[0] == 0


def test_bench_prints_speedup(capsys):
    code, out, _ = run(capsys, "bench", "--models", "eqanis,fp", "--fp-sample", "1", *SMALL,
                       "--set", "fp.L_sph=12", "--set", "fp.warmup=0.1", "--set", "anisotropy.K_max=500")
    assert code == 0
    assert "eqanis:" in out and "fp:" in out and "speedup fp/eqanis:" in out
    assert run(capsys, "bench", "--models", "eqanis,foo")[0] == 1


def test_exit_codes(tmp_path, capsys, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        main(["simulate-sm", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    assert run(capsys, "simulate-sm", "--set", "grid.nx=0", "-o", str(tmp_path / "x.bin"))[0] == 1
    assert run(capsys, "compare-sm", str(tmp_path / "missing.bin"), str(tmp_path / "missing.bin"))[0] == 1
    assert run(capsys, "simulate-sm", "--model", "fp", "--set", "fp.L_sph=5", "-o", str(tmp_path / "f.bin"))[0] == 1
    import eqanis.fokker_planck as fpmod

    def failing(*a, **kw):
        raise fpmod.FPSolverError("integrator failed at t=0 s: step size too small", 0.0)

    monkeypatch.setattr(fpmod, "fp_solve", failing)
    code, _, err = run(capsys, "simulate-sm", "--model", "fp", "--set", "grid.nx=2", "--set", "grid.ny=1",
                       "-o", str(tmp_path / "f.bin"))
    assert code == 2 and "numerical failure" in err and "2 position(s)" in err
    assert not (tmp_path / "f.bin").exists()


def test_determinism_byte_identical(tmp_path, capsys, monkeypatch):
    outputs = {}
    for tag in ("one", "two"):
        d = tmp_path / tag
        d.mkdir()
        monkeypatch.chdir(d)
        assert run(capsys, "simulate-sm", "--model", "eqanis", *SMALL, "-o", "s.bin")[0] == 0
        assert run(capsys, "signal", "--sm", "s.bin", "--phantom", "disk", "--radius", "5", *SMALL, "--seed", "11",
                   "-o", "u.csv")[0] == 0
        assert run(capsys, "recon", "--sm", "s.bin", "--signal", "u.csv", *SMALL, "--seed", "11", "-o", "c.csv")[0] == 0
        assert run(capsys, "render", "--concentration", "c.csv", "-o", "c2.png")[0] == 0
        outputs[tag] = {f: (d / f).read_bytes() for f in sorted(os.listdir(d))}
    assert outputs["one"].keys() == outputs["two"].keys()
    for f in outputs["one"]:
        assert outputs["one"][f] == outputs["two"][f], f
