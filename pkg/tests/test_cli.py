import csv
import io
import subprocess
import sys

import pytest

from dpsgd_dc.cli import main

FIG5_FLAGS = ["--alpha", "1.1", "--n", "16", "--b", "2", "--eta", "0.2", "--C", "2", "--D", "1", "--sigma", "4",
            "--L", "1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


# ---------------------------------------------------------------------------
# bound


def test_bound_example(capsys):
    code, out, _ = run(capsys, "bound", "--family", "dc", *FIG5_FLAGS, "--T", "1000")
    assert code == 0
    fields = dict(line.split(None, 1) for line in out.strip().splitlines())
    assert float(fields["epsilon_rdp"]) == pytest.approx(1.546367, abs=1e-5)
    assert fields["regime"] == "converged"


def test_bound_zero_iterations_and_machine_mode(capsys):
    code, out, _ = run(capsys, "bound", "--family", "dc", *FIG5_FLAGS, "--T", "0", "--machine", "--delta", "1e-5")
    assert code == 0
    assert out.count("\n") == 1
    fields = dict(kv.split("=") for kv in out.split())
    assert float(fields["epsilon_rdp"]) == 0.0 and "eps_dp" in fields


def test_bound_missing_domain_is_validation_error(capsys):
    flags = [f for f in FIG5_FLAGS]
    i = flags.index("--D")
    del flags[i:i + 2]
    code, out, err = run(capsys, "bound", "--family", "dc", *flags, "--T", "10")
    assert code == 2 and out == "" and "diameter_d" in err


@pytest.mark.parametrize("argv", [
    ["bound", "--family", "nope", *FIG5_FLAGS, "--T", "1"],
    ["bound", "--family", "dc", *FIG5_FLAGS, "--T", "-1"],
    ["bound", "--family", "dc", *FIG5_FLAGS],
    ["bound", "--family", "dc", *FIG5_FLAGS, "--T", "ten"],
    ["bound", "--family", "gc", *FIG5_FLAGS, "--T", "1", "--alpha", "1"],
    ["bound", "--family", "gc", *FIG5_FLAGS, "--T", "1", "--seed", "-3"],
])
def test_bound_validation_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["bound", "--no-such-flag"])
    assert info.value.code == 2


def test_strengthened_reports_constraints(capsys):
    code, out, _ = run(capsys, "bound", "--family", "gc", *FIG5_FLAGS, "--T", "10", "--mode", "strengthened", "--machine")
    assert code == 0 and "constraints_ok=false" in out


# ---------------------------------------------------------------------------
# curve


def test_curve_fig5_dc_below_trivial(capsys):
    code, out, _ = run(capsys, "curve", "--preset", "fig5")
    assert code == 0
    table = rows(out)
    assert table[0] == ["T", "dc", "trivial"]
    assert len(table) == 501
    assert all(float(dc) <= float(tr) for _, dc, tr in table[1:])


def test_curve_fig1_ordering(capsys):
    code, out, _ = run(capsys, "curve", "--preset", "fig1", "--t-min", "200", "--t-max", "200")
    assert code == 0
    header, values = rows(out)
    v = dict(zip(header, map(float, values)))
    assert v["T"] == 200
    assert v["dc"] < min(v["kong"], v["feldman"], v["composition"])
    assert v["altschuler"] < v["dc"]


def test_curve_empty_families_header_only(capsys):
    code, out, _ = run(capsys, "curve", "--preset", "fig5", "--families", "")
    assert code == 0 and out == "T\n"


def test_curve_row_count_and_flag_override(capsys):
    code, out, _ = run(capsys, "curve", "--preset", "fig5", "--families", "dc", "--t-min", "0", "--t-max", "100",
                       "--t-step", "25", "--sigma", "8")
    table = rows(out)
    assert [r[0] for r in table[1:]] == ["0", "25", "50", "75", "100"]
    assert float(table[1][1]) == 0.0


def test_curve_needs_range_without_preset(capsys):
    code, _, err = run(capsys, "curve", "--families", "dc", *FIG5_FLAGS)
    assert code == 2 and "t-max" in err


def test_curve_figure(capsys, tmp_path):
    fig = tmp_path / "fig5.png"
    code, out, _ = run(capsys, "curve", "--preset", "fig5", "--t-max", "120", "--figure", str(fig), "--quiet")
    assert code == 0 and fig.stat().st_size > 1000 and out.startswith("T,dc,trivial")


# ---------------------------------------------------------------------------
# calibrate / recommend


def test_calibrate_round_trip(capsys):
    code, out, _ = run(capsys, "calibrate", "--family", "dc", *FIG5_FLAGS, "--T", "1000", "--eps-dp", "5",
                       "--delta", "1e-5")
    assert code == 0
    (header, values), = [rows(out)]
    rec = dict(zip(header, values))
    code, out, _ = run(capsys, "bound", "--family", "dc", *FIG5_FLAGS[:-4], "--L", "1", "--sigma", rec["sigma_dp"],
                       "--T", "1000", "--delta", "1e-5", "--machine")
    fields = dict(kv.split("=") for kv in out.split())
    assert code == 0 and float(fields["eps_dp"]) <= 5.0


def test_calibrate_unreachable_is_runtime_error(capsys):
    code, _, err = run(capsys, "calibrate", "--family", "gc", *FIG5_FLAGS, "--T", "10", "--eps-dp", "0.01",
                       "--delta", "1e-5")
    assert code == 1 and "unreachable" in err


def test_recommend_csv(capsys):
    code, out, _ = run(capsys, "recommend", "--n", "10000", "--b", "10", "--d", "10", "--L", "1", "--eps-dp", "1",
                       "--delta", "1e-5", "--sgd-sigma", "0.01")
    assert code == 0
    header, values = rows(out)
    assert header == ["regime", "eta", "clip_c", "t_iters", "predicted_utility"]
    assert values[0] == "gc_large_noise"


# ---------------------------------------------------------------------------
# train / mia


TRAIN = ["train", "--n", "10", "--b", "2", "--eta", "0.3", "--C", "2", "--D", "2", "--sigma", "1", "--problem-dim", "2"]


def test_train_zero_iterations_single_row(capsys):
    code, out, _ = run(capsys, *TRAIN, "--T", "0")
    assert code == 0
    table = rows(out)
    assert table[0] == ["t", "loss_gap", "grad_norm", "clip_fraction", "projected"] and len(table) == 2


def test_train_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*TRAIN, "--T", "50", "--seed", "7", "--out", str(a)]) == 0
    assert main(["--seed", "7", *TRAIN, "--T", "50", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 52
    for line in a.read_text().splitlines()[1:]:
        for value in line.split(",")[1:4]:
            mantissa = value.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(mantissa) <= 12


def test_train_config_precedence(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[mechanism]\nn = 10\nb = 2\neta = 0.3\nclip_c = 2\nsigma_dp = 1\nt_iters = 5\n"
                   "[problem]\ndim = 2\n[run]\nseed = 3\n")
    code, out, _ = run(capsys, "train", "--config", str(cfg))
    assert code == 0 and len(rows(out)) == 7
    code, out_flag, _ = run(capsys, "train", "--config", str(cfg), "--T", "2")
    assert len(rows(out_flag)) == 4
    # seed from [run] matches the same seed given as a flag
    code, out_seed, _ = run(capsys, "train", "--config", str(cfg), "--seed", "3")
    assert out_seed == out
    _, out_other, _ = run(capsys, "train", "--config", str(cfg), "--seed", "4")
    assert out_other != out
    monkeypatch.setenv("DPSGD_DC_CONFIG_DIR", str(tmp_path))
    code, out_env, _ = run(capsys, "train", "--config", "run.ini")
    assert code == 0 and out_env == out


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[mechanism]\nn = 10\nlearning_rate = 0.1\n")
    code, _, err = run(capsys, "train", "--config", str(cfg))
    assert code == 2 and "learning_rate" in err
    cfg.write_text("[optimizer]\nn = 10\n")
    code, _, err = run(capsys, "train", "--config", str(cfg))
    assert code == 2 and "optimizer" in err
    code, _, err = run(capsys, "train", "--config", str(tmp_path / "absent.ini"))
    assert code == 2


def test_train_dimension_mismatch(capsys):
    code, _, err = run(capsys, *TRAIN, "--T", "1", "--d", "3")
    assert code == 2 and "dim" in err


def test_train_figure(capsys, tmp_path):
    fig = tmp_path / "trace.png"
    code, _, err = run(capsys, *TRAIN, "--T", "40", "--figure", str(fig))
    assert code == 0 and fig.exists() and "figure written" in err


MIA = ["mia", "--n", "200", "--b", "8", "--eta", "0.5", "--C", "1", "--sigma", "0.05", "--epochs", "3",
       "--trials", "4"]


def test_mia_shuffled_near_zero(capsys, tmp_path):
    fig = tmp_path / "mia.png"
    code, out, err = run(capsys, *MIA, "--shuffle-labels", "--figure", str(fig))
    assert code == 0 and fig.exists() and "theoretical eps_dp" in err
    table = rows(out)
    assert table[0] == ["epoch", "fpr", "fnr", "eps_hat_median", "eps_hat_lo95", "eps_hat_hi95"]
    assert len(table) == 4
    assert all(abs(float(r[3])) <= 0.2 for r in table[1:])


def test_mia_deterministic_and_quiet(capsys):
    code, a, err = run(capsys, *MIA, "--seed", "2", "--quiet")
    assert code == 0 and err == ""
    _, b, _ = run(capsys, *MIA, "--seed", "2", "--quiet")
    assert a == b


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dpsgd_dc", "bound", "--family", "gc", "--alpha", "1.1",
                           "--n", "8", "--b", "2", "--eta", "0.2", "--C", "2", "--sigma", "4", "--T", "10",
                           "--machine"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "epsilon_rdp=0.34375" in proc.stdout
