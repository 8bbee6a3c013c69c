import re

import pytest

from noir.cli import main
from noir.fixtures import INDVOCAB_FILE, write_fixture_files


def test_years_anchor(capsys):
    assert main(["bounds", "years", "--prob", "26^-8", "--rate", "1"]) == 0
    out = capsys.readouterr().out
    match = re.search(r"expected years\s+([\d,.]+)", out)
    years = float(match.group(1).replace(",", ""))
    assert abs(years - 3308.65) <= 0.1


def test_prompt_bound_anchor(capsys):
    assert main(["bounds", "prompt", "--eps", "13", "--vocab-size", "151000",
                 "--len", "200", "--rho", "0.2", "--gamma", "0.146"]) == 0
    out = capsys.readouterr().out
    value = float(re.search(r"bound ([\d.e+-]+)", out).group(1))
    assert value < 5.5e-11


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_vocab_gen_requires_seed(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("NOIR_SEED", raising=False)
    rc = main(["vocab", "gen", "--size", "4", "--dim", "2",
               "--out", str(tmp_path / "v.nvcb")])
    assert rc == 1
    assert "seed" in capsys.readouterr().err


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("NOIR_SEED", "42")
    assert main(["vocab", "gen", "--size", "4", "--dim", "2",
                 "--out", str(tmp_path / "v.nvcb")]) == 0


def test_build_audit_cycle(tmp_path, capsys):
    vocab_path = str(tmp_path / "v.nvcb")
    ind_path = str(tmp_path / "i.nind")
    assert main(["vocab", "gen", "--size", "6", "--dim", "3", "--scale", "0.25",
                 "--seed", "42", "--out", vocab_path]) == 0
    assert main(["indvocab", "build", "--vocab", vocab_path, "--eps", "6",
                 "--seed", "7", "--out", ind_path]) == 0
    assert main(["indvocab", "audit", "--vocab", vocab_path, "--ind", ind_path]) == 0
    assert "audit ok" in capsys.readouterr().out


def test_infeasible_build_exits_1_with_minimum(tmp_path, capsys):
    vocab_path = str(tmp_path / "v.nvcb")
    main(["vocab", "gen", "--size", "6", "--dim", "3", "--scale", "0.25",
          "--seed", "42", "--out", vocab_path])
    rc = main(["indvocab", "build", "--vocab", vocab_path, "--eps", "0.0000001",
               "--seed", "7", "--out", str(tmp_path / "i.nind")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "minimal feasible" in err


def test_ltok_gen_withholds_secret(tmp_path, capsys):
    out_path = str(tmp_path / "p.nprm")
    assert main(["ltok", "gen", "--size", "8", "--seed", "3", "--out", out_path]) == 0
    first = capsys.readouterr().out
    assert "withheld" in first and "forward:" not in first
    assert main(["ltok", "gen", "--size", "8", "--seed", "3", "--out", out_path,
                 "--reveal"]) == 0
    assert "forward:" in capsys.readouterr().out


def test_metrics_commands(capsys, tmp_path):
    assert main(["metrics", "bleu", "--cand", "a b c d", "--ref", "a b x y"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(50.0)
    assert main(["metrics", "passr", "--n", "6", "--c", "2", "--r", "3"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.8)
    assert main(["metrics", "fusi", "--truth", "111", "--recon", "101"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2 / 3)
    truth = tmp_path / "t.py"
    truth.write_text("def fn(x):\n    return x\n", encoding="utf-8")
    recon = tmp_path / "r.py"
    recon.write_text("call fn now", encoding="utf-8")
    assert main(["metrics", "leak", "--truth-file", str(truth),
                 "--recon-file", str(recon)]) == 0
    assert capsys.readouterr().out.strip() == "1"


def test_bounds_sweep_table(capsys):
    assert main(["bounds", "sweep", "--eps", "1,13", "--vocab-size", "151000",
                 "--len", "200", "--rho", "0.2,0.4", "--gamma", "0.146"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("eps\t|V|")
    assert len(lines) == 5  # header + 2 eps x 2 rho


def test_attack_freq_command(capsys):
    assert main(["attack", "freq", "--k", "3", "--min-count", "100"]) == 0
    out = capsys.readouterr().out
    assert "body tokens recovered:     []" in out


def test_repro_suite_roundtrip(tmp_path, capsys):
    fixtures = str(tmp_path / "fixtures")
    rc = main(["repro", "--fixtures", fixtures, "--generate"])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.count("[PASS]") == 11
    assert "11/11 criteria passed" in out


def test_config_file_fills_unset_flags(tmp_path):
    cfg = tmp_path / "noir.cfg"
    cfg.write_text("seed=42\nsize=5\ndim=2\n", encoding="utf-8")
    out = tmp_path / "v.nvcb"
    assert main(["--config", str(cfg), "vocab", "gen", "--size", "4",
                 "--dim", "2", "--out", str(out)]) == 0
    from noir.vocab import load_vocabulary
    vocab = load_vocabulary(out)
    assert vocab.size == 4   # explicit flag wins over config size=5
    assert vocab.dim == 2    # config supplied the seed


def test_repro_report_is_reproducible(tmp_path, capsys):
    fixtures = str(tmp_path / "fixtures")
    write_fixture_files(fixtures)
    main(["repro", "--fixtures", fixtures])
    first = capsys.readouterr().out
    main(["repro", "--fixtures", fixtures])
    second = capsys.readouterr().out
    assert first == second


def test_client_generate_over_tcp(tmp_path, capsys):
    import threading

    from noir.protocol import MiddleServer, ToyStack, serve_middle
    from noir.protocol.server import TcpListener

    vocab_path = str(tmp_path / "v.nvcb")
    ind_path = str(tmp_path / "i.nind")
    perm_path = str(tmp_path / "p.nprm")
    main(["vocab", "gen", "--size", "6", "--dim", "3", "--scale", "0.25",
          "--seed", "42", "--out", vocab_path])
    main(["indvocab", "build", "--vocab", vocab_path, "--eps", "6",
          "--seed", "7", "--out", ind_path])
    main(["ltok", "gen", "--size", "6", "--seed", "11", "--out", perm_path])
    capsys.readouterr()

    stack = ToyStack.random(3, 8, 6, 5, middle="affine")
    listener = TcpListener("127.0.0.1", 0)
    port = listener.address[1]
    server = MiddleServer(stack.middle, 3, 8, 6)
    thread = threading.Thread(target=serve_middle, args=(listener, server),
                              daemon=True)
    thread.start()
    try:
        rc = main(["client", "generate", "--connect", f"127.0.0.1:{port}",
                   "--vocab", vocab_path, "--ind", ind_path, "--perm", perm_path,
                   "--stack-seed", "5", "--prompt", "tok0000 tok0001",
                   "--max-tokens", "4", "--temperature", "0", "--seed", "0"])
    finally:
        listener.close()
    assert rc == 0
    out = capsys.readouterr().out
    assert "local indices:" in out and "tokens:" in out


def test_attack_asr_per_record(tmp_path, capsys):
    truth = tmp_path / "truth.tsv"
    truth.write_text("a b c d\t\t\nw x y z\t\t\n", encoding="utf-8")
    recon = tmp_path / "recon.tsv"
    recon.write_text("a b c d\t\t\nq q q q\t\t\n", encoding="utf-8")
    rc = main(["attack", "asr", "--truth", str(truth), "--recon", str(recon),
               "--per-record"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "record: 0" in out and "privacy_win: True" in out
    assert "privacy ASR           0.5000" in out


def test_repro_detects_tampered_fixture(tmp_path, capsys):
    fixtures = tmp_path / "fixtures"
    write_fixture_files(fixtures)
    ind = fixtures / INDVOCAB_FILE
    data = bytearray(ind.read_bytes())
    data[-2] ^= 0xFF
    ind.write_bytes(bytes(data))
    rc = main(["repro", "--fixtures", str(fixtures)])
    out = capsys.readouterr().out
    assert rc == 1
    assert "[FAIL] criterion  1" in out or "[FAIL] criterion 1" in out
