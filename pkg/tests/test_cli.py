"""CLI contract: runs, CSV schema, verify, determinism, parallel merge."""

import pathlib

import pytest

from channelsim import cli, experiments

SEED = "0e" * 32


def run_cli(args):
    return cli.main(args)


def test_rs_coding_run_and_verify(tmp_path):
    out = tmp_path / "rs.csv"
    code = run_cli(["rs-coding", "--sigma2", "0.1", "--trials", "800",
                    "--seed", SEED, "--out", str(out), "--strict"])
    assert code == 0
    experiment, rows = experiments.read_csv(out)
    assert experiment == "rs-coding"
    assert rows[0]["trials"] == 800
    assert all(check.passed for check in experiments.verify_csv(out))
    assert run_cli(["verify", str(out), "--strict"]) == 0


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        run_cli(["grs-example", "--k", "1", "--trials", "3000",
                 "--seed", SEED, "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_worker_count_does_not_change_bytes(tmp_path):
    a, b = tmp_path / "w1.csv", tmp_path / "w2.csv"
    run_cli(["rs-coding", "--sigma2", "0.1", "--trials", "1500",
             "--seed", SEED, "--out", str(a), "--workers", "1"])
    run_cli(["rs-coding", "--sigma2", "0.1", "--trials", "1500",
             "--seed", SEED, "--out", str(b), "--workers", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_tampered_csv_fails_verify_with_row_number(tmp_path, capsys):
    out = tmp_path / "grs.csv"
    run_cli(["grs-example", "--k", "1", "--trials", "2000", "--seed", SEED,
             "--out", str(out)])
    capsys.readouterr()
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    row = lines[1].split(",")
    row[header.index("pml_cond_rate")] = "0.5"
    out.write_text("\n".join([lines[0], ",".join(row)]) + "\n")
    assert run_cli(["verify", str(out)]) == 0  # non-strict still reports
    printed = capsys.readouterr().out
    assert "FAIL row 0" in printed
    assert run_cli(["verify", str(out), "--strict"]) == 1


def test_schema_mismatch_rejected(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("experiment,foo\ngrs-example,1\n")
    assert run_cli(["verify", str(bad)]) == 2
    with pytest.raises(ValueError):
        experiments.read_csv(bad)


def test_config_file_flags_and_unknown_keys(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("experiment=grs-example\nk=1\ntrials=500\n")
    out = tmp_path / "from_conf.csv"
    assert run_cli(["run", "--config", str(conf), "--seed", SEED,
                    "--out", str(out)]) == 0
    _, rows = experiments.read_csv(out)
    assert rows[0]["trials"] == 500
    # Flag overrides the file value.
    assert run_cli(["run", "--config", str(conf), "--trials", "700",
                    "--seed", SEED, "--out", str(out)]) == 0
    _, rows = experiments.read_csv(out)
    assert rows[0]["trials"] == 700
    conf.write_text("experiment=grs-example\nk=1\nbogus=1\n")
    with pytest.raises(SystemExit):
        run_cli(["run", "--config", str(conf), "--out", str(out)])


def test_preset_override(tmp_path):
    out = tmp_path / "fig2.csv"
    code = run_cli(["run", "--preset", "fig2", "--trials", "300",
                    "--sigma2", "0.1", "--seed", SEED, "--out", str(out)])
    assert code == 0
    _, rows = experiments.read_csv(out)
    assert len(rows) == 1 and rows[0]["sigma2"] == 0.1
    with pytest.raises(SystemExit):
        run_cli(["run", "--preset", "nope"])


def test_matching_bins_written(tmp_path):
    out = tmp_path / "match.csv"
    code = run_cli(["matching", "--preset", "matchbound", "--trials", "1200",
                    "--seed", SEED, "--out", str(out)])
    assert code == 0
    bins = pathlib.Path(str(out) + ".bins.csv")
    assert bins.exists()
    experiment, rows = experiments.read_csv(bins)
    assert experiment == "matching-bins"
    assert {r["protocol"] for r in rows} >= {"ers-nocomm", "ers-batchcomm"}


def test_csv_seed_column_records_seed(tmp_path):
    out = tmp_path / "grs.csv"
    run_cli(["grs-example", "--k", "1", "--trials", "400", "--seed", SEED,
             "--out", str(out)])
    _, rows = experiments.read_csv(out)
    assert rows[0]["seed"] == SEED


def test_hex_prefix_seed_accepted(tmp_path):
    out = tmp_path / "rs.csv"
    assert run_cli(["rs-coding", "--sigma2", "0.1", "--trials", "300",
                    "--seed", "0xA1", "--out", str(out)]) == 0
    _, rows = experiments.read_csv(out)
    assert rows[0]["seed"] == "A1"


@pytest.mark.parametrize("preset", ["fig2", "fig3", "fig4", "matchbound",
                                    "grs", "fig5-desk"])
def test_verify_reproduces_run_checks_for_presets(tmp_path, capsys, preset):
    """verify(run(x)) yields the same check outcomes for every preset."""
    out = tmp_path / f"{preset}.csv"
    args = ["run", "--preset", preset, "--trials", "200", "--seed", SEED,
            "--out", str(out)]
    if preset == "fig3":
        args += ["--extra-batch", "8", "--batch", "8"]   # keep the grid tiny
    if preset == "fig5-desk":
        args += ["--log2v", "6,8", "--n-joint", "1", "--sigma2", "0.02",
                 "--feedback-log2v", ""]
    if preset == "fig4":
        args += ["--batch", "2,8"]
    cli.main(args)
    run_lines = [l for l in capsys.readouterr().out.splitlines()
                 if l.startswith(("PASS", "FAIL"))]
    verify_lines = []
    for produced in (out, pathlib.Path(str(out) + ".bins.csv")):
        if produced.exists():
            cli.main(["verify", str(produced)])
            verify_lines += [l for l in capsys.readouterr().out.splitlines()
                             if l.startswith(("PASS", "FAIL"))]
    assert run_lines and run_lines == verify_lines
