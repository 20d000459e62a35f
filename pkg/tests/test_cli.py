"""Command-line front end: manifests, outputs, exit codes."""

import json

import pytest

from dfop import cli


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestListProblems:
    def test_lists_registry(self, capsys):
        code, out, _ = run_cli(capsys, "list-problems")
        assert code == cli.EXIT_OK
        assert "rosenbrock" in out
        assert "quartic-table6" in out


class TestSolve:
    def test_solve_from_flags(self, tmp_path, capsys):
        out = tmp_path / "run"
        code, text, _ = run_cli(
            capsys, "solve", "--problem", "parabola1d", "--budget", "200",
            "--rho-end", "1e-6", "--out", str(out),
        )
        assert code == cli.EXIT_OK
        assert "flag      : Y" in text
        assert (out / "trace.csv").exists()
        payload = json.loads((out / "trace.json").read_text())
        assert payload["status"] == "converged"

    def test_solve_from_manifest_with_flag_override(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "problem": "parabola1d",
            "budget": 200,
            "rho_end": 1e-6,
            "mechanism": "lap100",
            "out": str(tmp_path / "a"),
        }))
        code, _, _ = run_cli(capsys, "solve", "--manifest", str(manifest),
                             "--out", str(tmp_path / "b"))
        assert code == cli.EXIT_OK
        # the flag overrides the manifest's output directory
        assert (tmp_path / "b" / "trace.json").exists()
        assert not (tmp_path / "a").exists()

    def test_missing_problem_is_bad_manifest(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "solve", "--out", str(tmp_path))
        assert code == cli.EXIT_BAD_MANIFEST
        assert "error:" in err

    def test_unknown_problem_is_bad_manifest(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "solve", "--problem", "nope",
                             "--out", str(tmp_path))
        assert code == cli.EXIT_BAD_MANIFEST

    def test_unknown_mechanism_is_bad_manifest(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "solve", "--problem", "parabola1d",
                             "--mechanism", "bogus", "--out", str(tmp_path))
        assert code == cli.EXIT_BAD_MANIFEST

    def test_unreadable_manifest(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, _ = run_cli(capsys, "solve", "--manifest", str(bad))
        assert code == cli.EXIT_BAD_MANIFEST


class TestBench:
    def test_bench_writes_all_outputs(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "problems": ["parabola1d", "rosenbrock"],
            "solvers": ["dfop", "newuoa-n"],
            "seeds": [0],
            "budget": 300,
            "tau": 1e-3,
            "out": str(tmp_path / "bench"),
        }))
        code, text, _ = run_cli(capsys, "bench", "--manifest", str(manifest))
        assert code == cli.EXIT_OK
        for name in ("records.csv", "profile.csv", "profile.svg", "profile.dat"):
            assert (tmp_path / "bench" / name).exists()
        assert "Algorithm" in text and "rosenbrock" in text

    def test_bench_rejects_unknown_solver(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "problems": ["parabola1d"], "solvers": ["gradient-descent"],
            "out": str(tmp_path / "x"),
        }))
        code, _, _ = run_cli(capsys, "bench", "--manifest", str(manifest))
        assert code == cli.EXIT_BAD_MANIFEST


class TestProfile:
    def test_profile_replots_records(self, tmp_path, capsys):
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "problems": ["parabola1d"], "solvers": ["dfop"], "seeds": [0],
            "budget": 200, "out": str(tmp_path / "bench"),
        }))
        assert cli.main(["bench", "--manifest", str(manifest)]) == cli.EXIT_OK
        capsys.readouterr()
        code, text, _ = run_cli(
            capsys, "profile",
            "--records", str(tmp_path / "bench" / "records.csv"),
            "--tau", "1e-3", "--out", str(tmp_path / "replot"),
        )
        assert code == cli.EXIT_OK
        assert (tmp_path / "replot" / "profile.svg").exists()

    def test_profile_requires_records(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "profile", "--records",
                             str(tmp_path / "missing.csv"))
        assert code == cli.EXIT_BAD_MANIFEST


class TestAudit:
    def test_audit_writes_budget_ledger(self, tmp_path, capsys):
        out = tmp_path / "audit"
        code, text, _ = run_cli(
            capsys, "audit", "--problem", "parabola1d", "--budget", "120",
            "--mechanism", "lap100", "--out", str(out),
        )
        assert code == cli.EXIT_OK
        assert "audited" in text
        budgets = (out / "budgets.csv").read_text().strip().splitlines()
        assert budgets[0].startswith("k,mechanism,GS,b_k,C")
        assert len(budgets) > 1
        evals = (out / "evaluations.csv").read_text().strip().splitlines()
        assert evals[0] == "k,point_id,f,h,noise,F_k"

    def test_audit_rejects_identity(self, tmp_path, capsys):
        code, _, _ = run_cli(capsys, "audit", "--problem", "parabola1d",
                             "--mechanism", "identity", "--out", str(tmp_path))
        assert code == cli.EXIT_BAD_MANIFEST
