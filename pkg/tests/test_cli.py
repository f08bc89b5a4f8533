"""Exit codes and output shapes of the command line front end."""

import json
import subprocess
import sys

import pytest

from dnssecsim.cli import _parse_ids, build_parser, main


class TestIdParsing:
    def test_single(self):
        assert _parse_ids("4") == [4]

    def test_commas_dedup_in_order(self):
        assert _parse_ids("1,3,3,2") == [1, 3, 2]

    def test_ranges(self):
        assert _parse_ids("1-4") == [1, 2, 3, 4]

    def test_mixed(self):
        assert _parse_ids("1-3,7,2") == [1, 2, 3, 7]

    def test_empty(self):
        assert _parse_ids("") == []


class TestCheck:
    def test_matching_sweep_exits_zero(self, capsys):
        rc = main(["check", "--scenario", "baseline", "--seeds", "1-2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "Consistent Cache Hit Semantics" in out
        assert "Falsified" not in out

    def test_default_sweep_covers_all_properties(self, capsys):
        rc = main(["check", "--seeds", "1"])
        out, err = capsys.readouterr()
        assert rc == 0
        assert err == ""
        lines = out.strip().splitlines()
        assert len(lines) == 20  # header plus one row per property
        assert "Domain Secrecy (NSEC)" in out
        assert "Denial Correctness (Mixed)" in out

    def test_deviation_exits_one(self, capsys):
        # the mixed-denial scenario runs no walk, so the walk property
        # comes out Falsified against its default expectation
        rc = main(["check", "--scenario", "mixed-gap", "--props", "13",
                   "--seeds", "1"])
        err = capsys.readouterr().err
        assert rc == 1
        assert "property 13 expected Holds, got Falsified" in err

    def test_unknown_property_exits_two(self, capsys):
        rc = main(["check", "--props", "42", "--seeds", "1"])
        assert rc == 2
        assert "unknown property ids" in capsys.readouterr().err

    def test_unknown_scenario_exits_two(self, capsys):
        rc = main(["check", "--scenario", "no-such", "--seeds", "1"])
        assert rc == 2
        assert "scenario error" in capsys.readouterr().err

    def test_json_lines_format(self, capsys):
        rc = main(["check", "--props", "1-3", "--seeds", "1",
                   "--format", "json-lines"])
        out = capsys.readouterr().out
        assert rc == 0
        rows = [json.loads(line) for line in out.strip().splitlines()]
        assert [r["id"] for r in rows] == [1, 2, 3]
        assert all(r["result"] == "Holds" for r in rows)

    def test_report_file(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        rc = main(["check", "--scenario", "baseline", "--props", "1",
                   "--seeds", "1", "--report", str(report)])
        capsys.readouterr()
        assert rc == 0
        payload = json.loads(report.read_text())
        assert payload["deviations"] == []
        assert payload["verdicts"][0]["id"] == 1
        assert payload["verdicts"][0]["result"] == "Holds"


class TestEnumerate:
    def test_clear_chain_lists_names(self, capsys):
        rc = main(["enumerate"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "recovered 9 names in 9 queries:" in out
        assert "  xx.example" in out
        assert "  *.w.example" in out

    def test_hashed_chain_reports_block(self, capsys):
        rc = main(["enumerate", "--scenario", "enumeration-nsec3"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "walk blocked after 1 queries" in out

    def test_budget_flag(self, capsys):
        rc = main(["enumerate", "--budget", "3"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "in 3 queries:" in out

    def test_scenario_from_file(self, tmp_path, capsys):
        import importlib.resources
        text = importlib.resources.files("dnssecsim").joinpath(
            "fixtures", "enumeration.scn").read_text()
        path = tmp_path / "local.scn"
        path.write_text(text)
        rc = main(["enumerate", "--scenario", str(path)])
        assert rc == 0
        assert "recovered 9 names" in capsys.readouterr().out


class TestReplay:
    def test_accept_policy(self, capsys):
        rc = main(["replay", "--policy", "Accept"])
        out = capsys.readouterr().out
        assert rc == 0
        report = json.loads(out)
        assert report["policy"] == "Accept"
        assert report["denial_cache"] == {"nsec": 1, "nsec3": 1}
        assert report["denied_existing"] == ["a.example", "c.example"]

    def test_servfail_policy(self, capsys):
        rc = main(["replay", "--policy", "Servfail"])
        report = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert report["denial_cache"] == {"nsec": 0, "nsec3": 0}

    def test_seed_flag_lands_in_report(self, capsys):
        rc = main(["replay", "--seed", "42"])
        report = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert report["seed"] == 42


class TestTrace:
    def test_stdout_is_json_lines(self, capsys):
        rc = main(["trace", "--scenario", "enumeration"])
        out = capsys.readouterr().out
        assert rc == 0
        events = [json.loads(line) for line in out.strip().splitlines()]
        assert events[-1]["kind"] == "Quiescence"

    def test_out_file(self, tmp_path, capsys):
        path = tmp_path / "trace.jsonl"
        rc = main(["trace", "--scenario", "enumeration", "--out", str(path)])
        capsys.readouterr()
        assert rc == 0
        lines = path.read_text().strip().splitlines()
        assert all(json.loads(line) for line in lines)

    def test_seed_override_changes_schedule(self, capsys):
        main(["trace", "--scenario", "baseline", "--seed", "3"])
        first = capsys.readouterr().out
        main(["trace", "--scenario", "baseline", "--seed", "3"])
        repeat = capsys.readouterr().out
        main(["trace", "--scenario", "baseline", "--seed", "4"])
        other = capsys.readouterr().out
        assert first == repeat
        assert first != other


class TestEntryPoints:
    def test_parser_identity(self):
        parser = build_parser()
        assert parser.prog == "dnssecsim"

    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "dnssecsim.cli", "check",
             "--props", "1", "--seeds", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "Consistent Cache Hit Semantics" in proc.stdout
