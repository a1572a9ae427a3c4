import csv

import numpy as np
import pytest

from isoquant import bench, pipeline, rotor
from isoquant.bench import BenchConfig, generate_data, run_sweep, time_kernel
from isoquant.data import DataModel, generate_raw
from isoquant.errors import ConfigError
from isoquant.rotor import Kind

NON_TIMING = ["scheme", "dim", "bits", "batch", "seed", "mse", "params", "fmas"]


def small_cfg(tmp_path, **kw):
    base = dict(dims=(8, 12), bits=(2, 3), batch=256, seed=3, repeats=5, warmup=0,
                codebook_coords=20_000, output_path=str(tmp_path / "out.csv"))
    base.update(kw)
    return BenchConfig(**base)


def test_generate_data_unit_rows(rng):
    for model in ("gauss", "ar1:0.9"):
        x = generate_data(model, 500, 13, rng)
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_generate_data_deterministic():
    a = generate_data("ar1:0.5", 100, 8, np.random.default_rng(1))
    b = generate_data("ar1:0.5", 100, 8, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)


def test_ar1_within_block_correlation():
    x = generate_raw(DataModel("ar1", 0.9, 4), 100_000, 8, np.random.default_rng(2))
    pairs = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7)]
    lag1 = np.mean([np.corrcoef(x[:, i], x[:, j])[0, 1] for i, j in pairs])
    assert lag1 == pytest.approx(0.9, abs=0.02)
    # independent across the block boundary
    assert abs(np.corrcoef(x[:, 3], x[:, 4])[0, 1]) < 0.02


def test_data_model_parse():
    assert DataModel.parse("gauss") == DataModel()
    assert DataModel.parse("ar1:0.9") == DataModel("ar1", 0.9)
    with pytest.raises(ConfigError):
        DataModel.parse("ar1:x")
    with pytest.raises(ConfigError):
        DataModel.parse("ar1:1.5")
    with pytest.raises(ConfigError):
        DataModel.parse("laplace")


def test_config_validation():
    with pytest.raises(ConfigError):
        BenchConfig(dims=())
    with pytest.raises(ConfigError):
        BenchConfig(batch=0)
    with pytest.raises(ConfigError):
        BenchConfig(repeats=3)
    assert BenchConfig().schemes == (Kind.FULL, Kind.FAST, Kind.PLANAR2D, Kind.ROTOR3D)
    assert BenchConfig().dims == (128, 256, 512)
    assert BenchConfig().batch == 8192


def test_sweep_rows_and_csv(tmp_path):
    cfg = small_cfg(tmp_path)
    rows = run_sweep(cfg)
    assert len(rows) == 2 * 2 * 4
    with open(cfg.output_path, newline="") as fh:
        text = fh.read()
    assert text.splitlines()[0] == "scheme,dim,bits,batch,seed,mse,params,fmas,encode_us,decode_us,speedup_vs_rotor3d"
    assert "\r" not in text
    parsed = bench.read_csv(cfg.output_path)
    assert len(parsed) == len(rows)
    for r, p in zip(rows, parsed):
        cx = rotor.complexity_of(r.scheme, r.dim)
        assert (r.params, r.fmas) == (cx.params, cx.fmas)
        assert float(p["mse"]) == r.mse
        assert r.encode_us > 0 and r.decode_us > 0
        assert r.speedup_vs_rotor3d is not None
        if r.scheme == "Rotor3D":
            assert r.speedup_vs_rotor3d == 1.0


def test_sweep_mse_matches_staged_recomputation(tmp_path):
    cfg = small_cfg(tmp_path, dims=(12,), schemes=tuple(rotor.ALL_KINDS))
    rows = run_sweep(cfg, write=False)
    xs = generate_data(cfg.data_model, cfg.batch, 12, bench.eval_rng(cfg, 12))
    for kind in rotor.ALL_KINDS:
        s, books = bench.build_cell(cfg, kind, 12)
        for r in (r for r in rows if r.scheme == kind.value):
            staged = pipeline.batch_mse(xs, s, books[r.bits], path="staged")
            assert r.mse == pytest.approx(staged, rel=1e-12, abs=0)


def test_sweep_without_rotor3d_has_no_speedup(tmp_path):
    rows = run_sweep(small_cfg(tmp_path, schemes=("Full", "Fast")))
    assert all(r.speedup_vs_rotor3d is None for r in rows)
    parsed = bench.read_csv(tmp_path / "out.csv")
    assert all(p["speedup_vs_rotor3d"] == "" for p in parsed)


def test_sweep_reproducible(tmp_path):
    a = run_sweep(small_cfg(tmp_path, output_path=str(tmp_path / "a.csv")))
    b = run_sweep(small_cfg(tmp_path, output_path=str(tmp_path / "b.csv")))
    pa, pb = bench.read_csv(tmp_path / "a.csv"), bench.read_csv(tmp_path / "b.csv")
    assert [[p[k] for k in NON_TIMING] for p in pa] == [[p[k] for k in NON_TIMING] for p in pb]
    assert [r.mse for r in a] == [r.mse for r in b]


def test_parallel_marks_csv(tmp_path):
    cfg = small_cfg(tmp_path, parallel=True)
    serial = run_sweep(small_cfg(tmp_path, output_path=str(tmp_path / "serial.csv")))
    rows = run_sweep(cfg)
    first = open(cfg.output_path).readline()
    assert first.strip() == "# parallel=1"
    assert [r.mse for r in rows] == [r.mse for r in serial]


def test_default_sweep_cardinality_and_params(tmp_path):
    cfg = BenchConfig(batch=64, repeats=5, warmup=0, codebook_coords=5000, output_path=None)
    rows = run_sweep(cfg)
    assert len(rows) == 36
    params = {r.scheme: r.params for r in rows if r.dim == 128}
    assert params == {"Full": 256, "Fast": 128, "Planar2D": 128, "Rotor3D": 172}


def test_mse_monotone_in_bits_per_scheme(tmp_path):
    rows = run_sweep(small_cfg(tmp_path, dims=(16,), bits=(2, 3, 4), batch=2048), write=False)
    for kind in ("Full", "Fast", "Planar2D", "Rotor3D"):
        m = [r.mse for r in rows if r.scheme == kind]
        assert m[0] > m[1] > m[2]


def test_time_kernel_noop():
    t = time_kernel(lambda: None, repeats=51, warmup=10)
    assert 0 <= t < 10
    with pytest.raises(ValueError):
        time_kernel(lambda: None, repeats=4)


def test_time_kernel_stable():
    s = rotor.new_scheme(Kind.FULL, 128, 0)
    c = pipeline.train_lloyd_max(np.random.default_rng(0).standard_normal(10_000) / 11, 3)
    xs = generate_data("gauss", 1024, 128, np.random.default_rng(1))
    f = lambda: pipeline.encode_batch(xs, s, c)  # noqa: E731
    a = time_kernel(f, repeats=51, warmup=10)
    b = time_kernel(f, repeats=51, warmup=10)
    assert abs(a - b) / min(a, b) < 0.2


def test_fast_not_slower_than_full_d512():
    xs = generate_data("gauss", 8192, 512, np.random.default_rng(2))
    c = pipeline.train_lloyd_max(np.random.default_rng(0).standard_normal(10_000) / 22, 3)
    full = rotor.new_scheme(Kind.FULL, 512, 0)
    fast = rotor.new_scheme(Kind.FAST, 512, 0)
    # alternate rounds so slow drift in machine speed hits both schemes alike
    t_full, t_fast = [], []
    for _ in range(3):
        t_full.append(time_kernel(lambda: pipeline.encode_batch(xs, full, c), repeats=5, warmup=1))
        t_fast.append(time_kernel(lambda: pipeline.encode_batch(xs, fast, c), repeats=5, warmup=1))
    assert np.median(t_fast) <= 1.10 * np.median(t_full)


def test_cli(tmp_path, capsys):
    out = tmp_path / "cli.csv"
    rc = bench.main(["--dims", "8", "--bits", "2,3", "--schemes", "Full,Rotor3D,Dense", "--batch", "128",
                     "--seed", "9", "--data", "ar1:0.5", "--out", str(out), "--repeats", "5", "--warmup", "0",
                     "--codebook-coords", "5000"])
    assert rc == 0
    err = capsys.readouterr().err
    assert "# data_model = ar1:0.5" in err and "# seed = 9" in err
    rows = list(csv.DictReader(open(out)))
    assert [r["scheme"] for r in rows] == ["Full", "Full", "Rotor3D", "Rotor3D", "Dense", "Dense"]
    assert {r["seed"] for r in rows} == {"9"}


def test_cli_stdout(capsys):
    rc = bench.main(["--dims", "4", "--bits", "2", "--schemes", "Fast", "--batch", "16", "--out", "-",
                     "--repeats", "5", "--warmup", "0", "--codebook-coords", "2000"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("scheme,dim,bits")
    assert len(out.splitlines()) == 2


def test_cli_config_errors(capsys):
    assert bench.main(["--batch", "0"]) == 2
    with pytest.raises(SystemExit):
        bench.main(["--schemes", "Octonion"])
    with pytest.raises(SystemExit):
        bench.main(["--data", "laplace"])


def test_cli_io_error(tmp_path, capsys):
    rc = bench.main(["--dims", "4", "--bits", "2", "--schemes", "Fast", "--batch", "16", "--repeats", "5",
                     "--warmup", "0", "--codebook-coords", "2000", "--out", str(tmp_path / "missing" / "x.csv")])
    assert rc == 1


def test_row_mse_matches_batch_mse():
    cfg = bench.BenchConfig(dims=(16,), bits=(2,), schemes=("Full",), batch=256, repeats=5, warmup=0, codebook_coords=20000)
    (row,) = bench.run_sweep(cfg, write=False)
    s, books = bench.build_cell(cfg, rotor.Kind.FULL, 16)
    xs = generate_data(cfg.data_model, cfg.batch, 16, bench.eval_rng(cfg, 16))
    assert row.mse == pipeline.batch_mse(xs, s, books[2])
