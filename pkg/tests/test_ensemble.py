import json
import math

import numpy as np
import pytest

import nhent.ensemble as ens
from nhent.ensemble import (
    ObservableFlags,
    ObservableRecord,
    PointFailed,
    SweepConfig,
    Welford,
    csv_text,
    point_filename,
    records_dataset,
    run_point,
    run_sweep,
)
from nhent.evolve import Schedule, StabilizationError
from nhent.model import ModelParams

SHORT = Schedule(dt=2.0, n_steps=30, record_last=5)


def small_config(**kw):
    base = dict(gamma_list=(-0.5,), W_list=(1.0, 3.0), L_list=(8, 12), realizations=6, schedule=SHORT,
                base_seed=11)
    base.update(kw)
    return SweepConfig(**base)


def read_dir(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


def test_welford_matches_numpy():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((50, 3))
    w = Welford()
    for row in data:
        w.add(row)
    np.testing.assert_allclose(w.mean, data.mean(axis=0), rtol=1e-13)
    np.testing.assert_allclose(w.stderr(), data.std(axis=0, ddof=1) / math.sqrt(50), rtol=1e-12)


def test_single_clean_realization_log_law():
    rec = run_point(ModelParams(gamma=-0.5, W=0.0, L=64, boundary="periodic"), R=1)
    assert abs(rec.mean["S_half"] - (math.log(64) / 3 + 0.34)) < 0.05
    assert rec.realizations_completed == 1


def test_identical_realizations_zero_error():
    rec = run_point(ModelParams(gamma=-0.5, W=0.0, L=16), R=2, schedule=SHORT)
    assert abs(rec.stderr["S_half"]) < 1e-12
    assert np.max(np.abs(rec.stderr["density"])) < 1e-12


def test_record_contents_and_roundtrip():
    flags = ObservableFlags(entropy_profile=True)
    rec = run_point(ModelParams(gamma=-0.5, W=2.0, L=12), R=3, schedule=SHORT, base_seed=5, flags=flags)
    assert set(rec.mean) == {"S_half", "S_profile", "density", "correlation", "I_AB"}
    assert len(rec.mean["S_profile"]) == 11 and len(rec.mean["density"]) == 12
    assert len(rec.mean["correlation"]) == 6
    assert abs(sum(rec.mean["density"]) - 6) < 1e-8
    again = ObservableRecord.from_json(rec.to_json())
    assert again == rec
    assert rec.schedule == {"dt": 2.0, "n_steps": 30, "record_last": 5}


def test_requested_observables_only():
    flags = ObservableFlags(density=False, correlation=False, mutual_information=False)
    rec = run_point(ModelParams(gamma=-0.5, W=2.0, L=8), R=2, schedule=SHORT, flags=flags)
    assert set(rec.mean) == {"S_half"}


def test_point_filename():
    assert point_filename(ModelParams(gamma=-0.5, W=3.25, L=64)) == "g-0.5_W3.25_L64.json"


def test_failure_budget(monkeypatch):
    real = ens.realization_observables

    def flaky(params, m, schedule, flags):
        if abs(m[0]) > 0.25:
            raise StabilizationError(7, 1e-15)
        return real(params, m, schedule, flags)

    monkeypatch.setattr(ens, "realization_observables", flaky)
    with pytest.raises(PointFailed):
        run_point(ModelParams(gamma=-0.5, W=1.0, L=8), R=20, schedule=SHORT)
    rec = run_point(ModelParams(gamma=-0.5, W=1.0, L=8), R=20, schedule=SHORT, failure_budget=0.9)
    assert 0 < len(rec.failures) < 20
    assert rec.realizations_completed == 20 - len(rec.failures)
    assert all(f["step"] == 7 for f in rec.failures)


def test_stderr_scales_with_realizations():
    p = ModelParams(gamma=-0.5, W=2.0, L=12)
    a = run_point(p, R=50, schedule=SHORT, base_seed=1)
    b = run_point(p, R=200, schedule=SHORT, base_seed=2)
    ratio = a.stderr["S_half"] / b.stderr["S_half"]
    assert abs(ratio / 2 - 1) < 0.2


def test_sweep_outputs(tmp_path):
    cfg = small_config()
    recs = run_sweep(cfg, tmp_path)
    assert len(recs) == 4
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert [p["file"] for p in manifest["points"]] == [point_filename(p) for p in cfg.points()]
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "gamma,W,L,R,realizations_completed,S_half,S_half_err,I_AB,I_AB_err"
    assert len(lines) == 5
    d = records_dataset(recs, -0.5)
    assert set(d.sizes) == {8, 12}


def test_empty_grid(tmp_path):
    recs = run_sweep(small_config(W_list=()), tmp_path)
    assert recs == []
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["points"] == []
    assert (tmp_path / "sweep.csv").read_text().startswith("gamma,W,L")


def test_resume_recomputes_only_missing(tmp_path):
    cfg = small_config()
    run_sweep(cfg, tmp_path)
    before = read_dir(tmp_path)
    victim = point_filename(cfg.points()[2])
    (tmp_path / victim).unlink()
    statuses = []
    run_sweep(cfg, tmp_path, progress=lambda p, s: statuses.append(s))
    assert statuses == ["skipped", "skipped", "computed", "skipped"]
    assert read_dir(tmp_path) == before


def test_stale_record_is_recomputed(tmp_path):
    run_sweep(small_config(), tmp_path)
    statuses = []
    run_sweep(small_config(base_seed=12), tmp_path, progress=lambda p, s: statuses.append(s))
    assert statuses == ["computed"] * 4


def test_interrupted_sweep_resumes_identically(tmp_path):
    cfg = small_config()
    full, part = tmp_path / "full", tmp_path / "part"
    run_sweep(cfg, full)

    class Stop(Exception):
        pass

    def stop_after_two(params, status, seen=[]):
        seen.append(params)
        if len(seen) == 2:
            raise Stop

    with pytest.raises(Stop):
        run_sweep(cfg, part, progress=stop_after_two)
    assert not (part / "manifest.json").exists()
    run_sweep(cfg, part)
    assert read_dir(part) == read_dir(full)


def test_worker_count_does_not_change_bytes(tmp_path):
    cfg = small_config(realizations=5)
    run_sweep(cfg, tmp_path / "w1", workers=1)
    run_sweep(cfg, tmp_path / "w3", workers=3)
    assert read_dir(tmp_path / "w1") == read_dir(tmp_path / "w3")


def test_csv_precision():
    rec = run_point(ModelParams(gamma=-0.5, W=2.0, L=8), R=2, schedule=SHORT)
    row = csv_text([rec]).splitlines()[1].split(",")
    assert float(row[5]) == rec.mean["S_half"]


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(L_list=(7,))
    with pytest.raises(ValueError):
        SweepConfig(realizations=0)


@pytest.mark.long
def test_strong_disorder_size_independent_ensemble():
    a = run_point(ModelParams(gamma=-0.5, W=6.0, L=64), R=200)
    b = run_point(ModelParams(gamma=-0.5, W=6.0, L=128), R=200)
    assert abs(b.mean["S_half"] - a.mean["S_half"]) < 0.05
