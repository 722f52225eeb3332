import json

import numpy as np
import pytest

from latinavoid.cli import main
from latinavoid.core import AvoidanceArray, LatinSquare, PartialLatinSquare
from latinavoid.formats import dumps_instance, dumps_text, loads_instance, read_instance


class TestFormats:
    def test_json_round_trip_byte_stable(self):
        P = PartialLatinSquare.from_cells(4, {(1, 2): 3, (4, 4): 1})
        text = dumps_instance(P)
        again = dumps_instance(loads_instance(text))
        assert text == again

    def test_array_round_trip(self):
        A = AvoidanceArray.from_sets(5, {(1, 1): {2, 4}, (3, 5): {1}})
        assert loads_instance(dumps_instance(A)) == A

    def test_latin_round_trip(self):
        L = LatinSquare([[1, 2], [2, 1]])
        parsed = loads_instance(dumps_instance(L))
        assert isinstance(parsed, LatinSquare) and parsed == L

    def test_text_format(self):
        P = PartialLatinSquare.from_cells(3, {(1, 1): 2})
        text = dumps_text(P)
        assert text.splitlines()[0] == "3"
        assert loads_instance(text) == P

    def test_text_array_format(self):
        A = AvoidanceArray.from_sets(3, {(2, 2): {1, 3}})
        text = dumps_text(A)
        assert "1,3" in text
        assert loads_instance(text, "array") == A

    def test_kind_mismatch_rejected(self):
        from latinavoid.errors import InvalidInput

        A = AvoidanceArray.from_sets(3, {(1, 1): {1}})
        with pytest.raises(InvalidInput):
            loads_instance(dumps_instance(A), "latin")

    def test_full_pls_accepted_as_latin_input(self):
        L = LatinSquare([[1, 2], [2, 1]])
        text = dumps_instance(PartialLatinSquare(L.grid))
        parsed = loads_instance(text, "latin")
        assert isinstance(parsed, LatinSquare)


class TestCli:
    def test_generate_frontier_round_trip(self, tmp_path):
        out = tmp_path / "f"
        assert main(["generate", "--model", "frontier", "--r", "1", "--t", "1",
                     "--out", str(out)]) == 0
        P = read_instance(out.with_suffix(".pls.json"), "pls")
        A = read_instance(out.with_suffix(".array.json"), "array")
        assert P.n == A.n == 5

    def test_generate_empty_pls(self, tmp_path):
        out = tmp_path / "p.json"
        assert main(["generate", "--model", "pls", "--n", "50", "--p", "0",
                     "--seed", "1", "--out", str(out)]) == 0
        assert read_instance(out, "pls").filled_count() == 0

    def test_generate_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            main(["generate", "--model", "array", "--n", "12", "--m", "2",
                  "--seed", "9", "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()

    def test_solve_verify_loop(self, tmp_path, capsys):
        p = tmp_path / "p.json"
        a = tmp_path / "a.json"
        sol = tmp_path / "sol.json"
        main(["generate", "--model", "pls", "--n", "12", "--p", "0.05",
              "--seed", "4", "--out", str(p)])
        main(["generate", "--model", "array", "--n", "12", "--m", "1",
              "--seed", "5", "--avoid", str(p), "--out", str(a)])
        code = main(["solve", str(p), str(a), "--out", str(sol), "--seed", "2"])
        stats = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert code == 0 and stats["status"] == "solved"
        assert main(["verify", str(sol), str(p), str(a)]) == 0

    def test_verify_flags_corruption(self, tmp_path, capsys):
        p = tmp_path / "p.json"
        a = tmp_path / "a.json"
        sol = tmp_path / "sol.json"
        main(["generate", "--model", "pls", "--n", "6", "--p", "0.1",
              "--seed", "3", "--out", str(p)])
        main(["generate", "--model", "array", "--n", "6", "--m", "1",
              "--seed", "4", "--avoid", str(p), "--out", str(a)])
        main(["solve", str(p), str(a), "--out", str(sol)])
        capsys.readouterr()
        L = read_instance(sol, "latin")
        g = L.grid.copy()
        g[[0, 1], :] = g[[1, 0], :]  # swap rows: still Latin, breaks P unless rows agree
        corrupted = LatinSquare(g)
        from latinavoid.formats import write_instance

        write_instance(sol, corrupted)
        code = main(["verify", str(sol), str(p), str(a)])
        out = json.loads(capsys.readouterr().out)
        assert code in (0, 1)
        if code == 1:
            assert not out["clean"]

    def test_solve_frontier_exits_infeasible(self, tmp_path, capsys):
        out = tmp_path / "f"
        main(["generate", "--model", "frontier", "--r", "1", "--t", "1",
              "--out", str(out)])
        code = main(["solve", str(out.with_suffix(".pls.json")),
                     str(out.with_suffix(".array.json"))])
        capsys.readouterr()
        assert code == 3

    def test_parse_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["verify", str(bad), str(bad), str(bad)])
        capsys.readouterr()
        assert code == 2

    def test_missing_file_exit_code(self, capsys):
        code = main(["solve", "/nonexistent/p.json", "/nonexistent/a.json"])
        capsys.readouterr()
        assert code == 2

    def test_trade_log_replay(self, tmp_path, capsys):
        p = tmp_path / "p.json"
        a = tmp_path / "a.json"
        sol = tmp_path / "sol.json"
        log = tmp_path / "trades.jsonl"
        main(["generate", "--model", "pls", "--n", "14", "--p", "0.05",
              "--seed", "8", "--out", str(p)])
        main(["generate", "--model", "array", "--n", "14", "--m", "1",
              "--seed", "9", "--avoid", str(p), "--out", str(a)])
        code = main(["solve", str(p), str(a), "--out", str(sol),
                     "--trade-log", str(log), "--seed", "11"])
        capsys.readouterr()
        assert code == 0 and log.exists()
        code = main(["replay", "--log", str(log)])
        out = json.loads(capsys.readouterr().out)
        assert code == 0 and out["matches_final"]

    def test_solve_deterministic_bytes(self, tmp_path, capsys):
        p = tmp_path / "p.json"
        a = tmp_path / "a.json"
        main(["generate", "--model", "pls", "--n", "16", "--p", "0.05",
              "--seed", "1", "--out", str(p)])
        main(["generate", "--model", "array", "--n", "16", "--m", "1",
              "--seed", "2", "--avoid", str(p), "--out", str(a)])
        outs = []
        stats = []
        for name in ("s1.json", "s2.json"):
            sol = tmp_path / name
            main(["solve", str(p), str(a), "--out", str(sol), "--seed", "6"])
            doc = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
            doc.pop("timings", None)
            stats.append(doc)
            outs.append(sol.read_bytes())
        assert outs[0] == outs[1]
        assert stats[0] == stats[1]

    def test_sweep_single_point(self, tmp_path, capsys):
        csv_path = tmp_path / "sweep.csv"
        code = main(["sweep", "--grid", "pm", "--n", "6", "--p-values", "0",
                     "--m-values", "0", "--replicates", "3",
                     "--out", str(csv_path)])
        capsys.readouterr()
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("grid,n,p,m,replicates,solved,success_rate")
        row = lines[1].split(",")
        assert row[5] == "3"  # all solved: empty instances
        assert float(row[6]) == 1.0

    def test_strict_paper_profile_gives_up(self, tmp_path, capsys):
        # paper constants have c(n) = 0 below n = 35000, so any prescribed
        # cell fails the well-behaved check and the strict policy refuses
        # to continue
        p = tmp_path / "p.json"
        a = tmp_path / "a.json"
        main(["generate", "--model", "pls", "--n", "12", "--p", "0.2",
              "--seed", "3", "--out", str(p)])
        main(["generate", "--model", "array", "--n", "12", "--m", "0",
              "--seed", "4", "--out", str(a)])
        code = main(["solve", str(p), str(a), "--profile", "paper"])
        stats = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert code == 4 and stats["status"] == "gave_up"

    def test_preflight_command(self, capsys):
        code = main(["preflight", "--n", "1000000", "--profile", "paper"])
        doc = json.loads(capsys.readouterr().out)
        assert code == 0
        assert doc["mode"] == "best-effort"
        assert len(doc["inequalities"]) == 5
