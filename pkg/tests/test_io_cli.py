import json

import numpy as np
import pytest

from eprscan import cli, io
from eprscan.coincidence import read_tags
from eprscan.errors import InputError
from eprscan.scansim import ScanGrid, reference_setup, simulate_scan


@pytest.fixture
def small_scan():
    p, cfg, _, noise = reference_setup("ff")
    return simulate_scan(p, cfg, ScanGrid(n_steps=5), noise, seed=4)


def run(argv):
    return cli.main([str(a) for a in argv])


def test_scan_round_trip(tmp_path, small_scan):
    path, side = io.write_scan(tmp_path / "s.csv", small_scan)
    back = io.read_scan(path)
    assert back.same_counts(small_scan)
    assert back.mode is small_scan.mode
    assert back.source == small_scan.source
    assert back.noise == small_scan.noise
    assert back.lens == small_scan.lens
    assert back.grid == small_scan.grid
    assert back.seed == 4
    header = path.read_text().splitlines()[0]
    assert header == ",".join(io.CSV_COLUMNS)


def test_metadata_twelve_digits(tmp_path, small_scan):
    from dataclasses import replace

    src = replace(small_scan.source, sigma_plus=0.0951234567891234)
    ds = replace(small_scan, source=src)
    path, _ = io.write_scan(tmp_path / "s.csv", ds)
    assert io.read_scan(path).source.sigma_plus == pytest.approx(src.sigma_plus, rel=1e-12)


def test_missing_sidecar(tmp_path, small_scan):
    path, side = io.write_scan(tmp_path / "s.csv", small_scan)
    side.unlink()
    with pytest.raises(InputError, match="sidecar"):
        io.read_scan(path)


def test_bad_rows(tmp_path, small_scan):
    path, _ = io.write_scan(tmp_path / "s.csv", small_scan)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(InputError, match="rows"):
        io.read_scan(path)
    lines[1], lines[2] = lines[2], lines[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InputError, match="order"):
        io.read_scan(path)


def test_config_rejects_unknown_keys():
    with pytest.raises(InputError, match="colour"):
        io.parse_config('{"colour": 1}')
    with pytest.raises(InputError, match="noise"):
        io.parse_config('{"noise": {"windw": 3}}')
    with pytest.raises(InputError, match="far_field.source"):
        io.parse_config('{"far_field": {"source": {"pairrate": 3}}}')


def test_config_revalidates_parameters():
    with pytest.raises(InputError, match="sigma_minus"):
        io.parse_config('{"source": {"sigma_minus": -1}}')


def test_config_json_error_position():
    with pytest.raises(InputError, match="line 2 column"):
        io.parse_config('{"seed": 1,\n  oops}')


def test_config_overrides_merge():
    cfg = io.parse_config('{"seed": 7, "grid": {"n_steps": 5}, "near_field": {"noise": {"dark1": 5}}}')
    src, lens, grid, noise = cfg.setup("nf")
    assert cfg.seed == 7 and grid.n_steps == 5
    assert noise.dark1 == 5 and noise.efficiency1 == reference_setup("nf")[3].efficiency1
    assert src.pair_rate == reference_setup("nf")[0].pair_rate
    assert cfg.setup("ff")[3].dark1 == reference_setup("ff")[3].dark1


def test_default_config_matches_reference_setup():
    for mode in ("nf", "ff"):
        assert io.default_config().setup(mode) == reference_setup(mode)


# ---------------------------------------------------------------- CLI


def test_cli_simulate_full_size_and_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--mode", "ff", "--seed", 3, "--out", a]) == 0
    assert run(["simulate", "--mode", "ff", "--seed", 3, "--out", b, "--workers", 3]) == 0
    out = capsys.readouterr().out
    assert "83521" in out
    assert sum(1 for _ in open(a)) == 83521 + 1
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


def test_cli_invalid_mode_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--mode", "sideways"])
    assert exc.value.code == 2


def test_cli_missing_file_exit_2(tmp_path, capsys):
    assert run(["analyze", tmp_path / "nf.csv", tmp_path / "ff.csv"]) == 2
    assert "no such scan file" in capsys.readouterr().err


def test_cli_config_from_environment(tmp_path, monkeypatch, capsys):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"grid": {"n_steps": 3}, "seed": 11}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(conf))
    assert run(["simulate", "--mode", "nf", "--out", tmp_path / "x.csv"]) == 0
    ds = io.read_scan(tmp_path / "x.csv")
    assert ds.grid.n_steps == 3 and ds.seed == 11


def test_cli_bad_config_exit_2(tmp_path, capsys):
    conf = tmp_path / "run.json"
    conf.write_text('{"grid": {"steps": 3}}')
    assert run(["simulate", str(conf), "--mode", "nf", "--out", tmp_path / "x.csv"]) == 2
    assert "steps" in capsys.readouterr().err


@pytest.fixture(scope="module")
def reference_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("reference")
    for m in ("nf", "ff"):
        assert cli.main(["simulate", "--mode", m, "--out", str(d / f"{m}.csv")]) == 0
    return d


def test_cli_analyze_reference_scale(reference_files, capsys):
    rep = reference_files / "report.json"
    code = run(["analyze", reference_files / "nf.csv", reference_files / "ff.csv", "--report", rep, "--require-violation"])
    assert code == 0
    data = json.loads(rep.read_text())
    assert all(r["product"] < 0.25 for r in data["rows"])
    assert "VIOLATED" in capsys.readouterr().out


def test_cli_analyze_swapped_files_exit_2(reference_files):
    assert run(["analyze", reference_files / "ff.csv", reference_files / "nf.csv"]) == 2


def test_cli_require_violation_fails_for_separable_source(tmp_path, capsys):
    conf = tmp_path / "sep.json"
    conf.write_text(json.dumps({"source": {"sigma_plus": 0.05, "sigma_minus": 0.05, "q_ring": 0}}))
    for m in ("nf", "ff"):
        assert run(["simulate", conf, "--mode", m, "--out", tmp_path / f"{m}.csv"]) == 0
    code = run(["analyze", tmp_path / "nf.csv", tmp_path / "ff.csv", "--require-violation"])
    assert code == 1


def test_cli_heatmaps_ring(reference_files, tmp_path, capsys):
    out = tmp_path / "maps"
    assert run(["heatmaps", reference_files / "ff.csv", "--outdir", out]) == 0
    for arm in (1, 2):
        rows = (out / f"coinc_max_arm{arm}.csv").read_text().splitlines()
        x = np.array([float(v) for v in rows[0].split(",")[1:]])
        table = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        y, values = table[:, 0], table[:, 1:]
        j, i = np.unravel_index(np.argmax(values), values.shape)
        assert np.hypot(x[i], y[j]) > 0
        assert (out / f"singles_avg_arm{arm}.csv").exists()


def test_cli_schmidt_on_ideal_gaussian_beam(tmp_path, capsys):
    # minimum-uncertainty beam: sigma+ = sigma-, no ring, negligible kernel, no darks
    conf = {
        "source": {"sigma_plus": 0.0267, "sigma_minus": 0.0267, "q_ring": 0},
        "grid": {"step": 15.0},
        "noise": {"collection_sigma": 0.001, "dark1": 0, "dark2": 0},
    }
    (tmp_path / "g.json").write_text(json.dumps(conf))
    for m in ("nf", "ff"):
        assert run(["simulate", tmp_path / "g.json", "--mode", m, "--out", tmp_path / f"{m}.csv"]) == 0
    capsys.readouterr()
    assert run(["schmidt", tmp_path / "nf.csv", tmp_path / "ff.csv", "--bootstrap", 20, "--out", tmp_path / "k.json"]) == 0
    res = json.loads((tmp_path / "k.json").read_text())
    for arm in ("arm1", "arm2"):
        assert res[arm]["K"] == pytest.approx(1.0, abs=0.02)


def test_cli_timetags_and_coincidence_accidentals(tmp_path, capsys):
    r, T, w = 2e5, 2.0, 300
    assert run(["timetags", "--rate1", r, "--rate2", r, "--duration", T, "--seed", 1,
                tmp_path / "a.ttg", tmp_path / "b.ttg"]) == 0
    capsys.readouterr()
    assert run(["coincidence", tmp_path / "a.ttg", tmp_path / "b.ttg", "--window", w,
                "--hist", tmp_path / "h.csv"]) == 0
    out = capsys.readouterr().out
    n = int(out.split()[1])
    na, nb = len(read_tags(tmp_path / "a.ttg")), len(read_tags(tmp_path / "b.ttg"))
    # |dt| <= w spans 2w of delay
    expected = na * nb / (T * 1e12) * 2 * w
    assert abs(n - expected) < 3 * np.sqrt(expected)
    assert (tmp_path / "h.csv").read_text().startswith("delay_ps,count")


def test_cli_timetags_csv(tmp_path, capsys):
    assert run(["timetags", "--csv", "--rate1", 100, "--rate2", 100, "--duration", 1,
                tmp_path / "a.txt", tmp_path / "b.txt"]) == 0
    assert len(read_tags(tmp_path / "a.txt")) > 0


def test_cli_config_prints_valid_config(capsys):
    assert run(["config"]) == 0
    text = capsys.readouterr().out
    assert io.parse_config(text).setup("ff") == reference_setup("ff")
