from dataclasses import replace

import pytest

from latticemd.cli import bench_memory, check_report, main
from latticemd.config import load_config
from latticemd.potential import parse_potential_file


@pytest.fixture
def case(tmp_path, potential_path):
    p = tmp_path / "case.cfg"
    p.write_text(f"potential = {potential_path}\nbox = 4 4 6\ntemperature = 100\nsteps = 5\n"
                 f"pka.position = 2 2 3\npka.energy = 0.1\noutput.dir = {tmp_path / 'out'}\n"
                 "output.prefix = c\noutput.defect_interval = 5\n")
    return p


class TestMain:
    def test_check(self, case, capsys):
        assert main(["check", "-c", str(case)]) == 0
        out = capsys.readouterr().out
        assert "offsets even" in out and out.strip().endswith("ok")

    def test_check_ghost_too_thin(self, case, capsys):
        assert main(["check", "-c", str(case), "--set", "ghost_width=1"]) == 2
        assert "ghost_width" in capsys.readouterr().err

    def test_unknown_key(self, case, capsys):
        assert main(["check", "-c", str(case), "-s", "bogus=1"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_potential(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("potential = missing.eam\n")
        assert main(["check", "-c", str(p)]) == 2
        assert "missing.eam" in capsys.readouterr().err

    def test_run(self, case, tmp_path, capsys):
        assert main(["run", "-c", str(case), "-s", "output.figures=true"]) == 0
        out = capsys.readouterr().out
        assert "final Frenkel" in out and "NRT estimate" in out
        names = {p.name for p in (tmp_path / "out").iterdir()}
        assert {"c_defects.csv", "c_thermo.csv", "c_final.xyz", "c_defects.png", "c_thermo.png"} <= names

    def test_bench_mem(self, case, capsys):
        assert main(["bench-mem", "-c", str(case)]) == 0
        assert "bytes/atom" in capsys.readouterr().out

    def test_gen_potential(self, tmp_path, capsys):
        out = tmp_path / "small.eam"
        assert main(["gen-potential", str(out), "--nrho", "500", "--nr", "600"]) == 0
        pot = parse_potential_file(out)
        assert pot.nrho == 500 and pot.nr == 600

    def test_gen_potential_unwritable(self, tmp_path):
        assert main(["gen-potential", str(tmp_path / "no" / "x.eam")]) == 2

    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            main([])


class TestReports:
    def test_check_report_rows(self, case, pot):
        cfg = load_config(case, overrides=["workers=16", "box=8 8 20"], env={})
        cfg = replace(cfg, a0=pot.a0).validate()
        rows = dict(check_report(cfg, pot))
        assert rows["offsets even"] == "26 full / 10 half"
        assert rows["offsets odd"] == "26 full / 16 half"
        assert rows["workers"] == "requested 16, effective 5"

    def test_bench_memory(self, case, pot):
        cfg = load_config(case, overrides=["box=6 6 6"], env={})
        cfg = replace(cfg, a0=pot.a0)
        m = bench_memory(cfg, pot)
        assert m["atoms"] == 432 and m["record_bytes"] == 104
        assert m["bytes_per_atom"] > 104
