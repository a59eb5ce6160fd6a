import json

import numpy as np
import pytest

from lossforge.analytics import IndividualLossLaw, LossDensity, combinatorial_loss_pdf
from lossforge.experiments import (
    PRESETS,
    DocumentError,
    RunManifest,
    emit_density_csv,
    parse_portfolio_document,
    read_csv,
    read_density_csv,
    replay,
    run_preset,
    write_csv,
)
from lossforge.experiments.cli import main

TINY = {"n_scenarios": 2000, "surface_scenarios": 500, "sizes": [10], "drill_sizes": [50]}


def write_doc(tmp_path, doc, name="pf.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return p


class TestDocuments:
    def test_minimal(self, tmp_path):
        pf = parse_portfolio_document(write_doc(tmp_path, {"obligors": [{"face_value": 75}]}))
        assert pf.K == 1 and pf.branches == ()
        assert pf.obligors[0].process.v0 == 100

    def test_table_ii(self, tmp_path):
        pf = parse_portfolio_document(write_doc(tmp_path, {"category_rule": "table_ii", "K": 50}))
        counts = np.bincount([ob.category for ob in pf.obligors])[1:]
        assert counts.tolist() == [25, 15, 5, 4, 1]

    def test_explicit_rule_and_branches(self, tmp_path):
        doc = {"category_rule": [{"v0": 100, "face_value": 75, "alpha": 0.5},
                                 {"v0": 120, "face_value": 80, "alpha": 0.5}],
               "K": 10, "branches": [{"size": 4, "correlation": 0.5}],
               "random_assignment": True, "seed": 3, "defaults": {"sigma": 0.2}}
        pf = parse_portfolio_document(write_doc(tmp_path, doc))
        assert pf.K == 10 and pf.branches[0].size == 4
        assert all(ob.process.sigma == 0.2 for ob in pf.obligors)

    def test_branch_overflow(self, tmp_path):
        doc = {"obligors": [{"face_value": 75}] * 3, "branches": [{"size": 2, "correlation": 0.5},
                                                                  {"size": 2, "correlation": 0.5}]}
        with pytest.raises(DocumentError, match="K=3"):
            parse_portfolio_document(write_doc(tmp_path, doc))
        with pytest.raises(DocumentError, match="K=5"):
            parse_portfolio_document(write_doc(tmp_path, {"category_rule": "table_ii", "K": 5,
                                                          "branches": [{"size": 6, "correlation": 0.1}]}))

    def test_membership_mismatch(self, tmp_path):
        doc = {"obligors": [{"face_value": 75, "branch": 1}, {"face_value": 75}],
               "branches": [{"size": 2, "correlation": 0.5}]}
        with pytest.raises(DocumentError, match="branch"):
            parse_portfolio_document(write_doc(tmp_path, doc))

    def test_syntax_error_has_line(self, tmp_path):
        with pytest.raises(DocumentError, match="line 3"):
            parse_portfolio_document(write_doc(tmp_path, '{\n "obligors": [\n  {"face_value": 75,,}]}'))

    @pytest.mark.parametrize("doc,field", [
        ({"obligors": [{"face_value": -1}]}, r"obligors\[0\]"),
        ({"obligors": [{"face_value": 75, "sigma": "x"}]}, r"obligors\[0\]\.sigma"),
        ({"obligors": [{"face_value": 75, "colour": 1}]}, "colour"),
        ({"obligors": [{"v0": 100}]}, "face_value"),
        ({"category_rule": "table_ii"}, "K"),
        ({"category_rule": "nope", "K": 3}, "category_rule"),
        ({"obligors": [], "category_rule": "table_ii", "K": 2}, "exactly one"),
        ({"obligors": [{"face_value": 75}], "extra": 1}, "extra"),
        ({"obligors": [{"face_value": 75}], "branches": [{"size": 1, "correlation": 1.5}]}, r"branches\[0\]"),
    ])
    def test_field_context(self, tmp_path, doc, field):
        with pytest.raises(DocumentError, match=field):
            parse_portfolio_document(write_doc(tmp_path, doc))


class TestCsv:
    def test_header_and_format(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["x", "y", "flag"], [(1 / 3, 2, True), {"x": 1e-20, "y": None, "flag": False}])
        text = p.read_text()
        assert text.splitlines()[0] == "x,y,flag"
        assert text.splitlines()[1] == "0.333333333333,2,1"
        assert text.splitlines()[2] == "1e-20,,0"

    def test_pure_atom(self, tmp_path):
        p = emit_density_csv(LossDensity(np.array([]), np.array([]), 1.0), tmp_path / "d.csv")
        header, rows = read_csv(p)
        assert header == ["loss", "density", "atom_mass"]
        assert rows == [["0", "", "1"]]

    def test_round_trip(self, tmp_path):
        d = combinatorial_loss_pdf(10, IndividualLossLaw.from_params())
        back = read_density_csv(emit_density_csv(d, tmp_path / "d.csv"))
        np.testing.assert_allclose(back.grid, d.grid, rtol=1e-11, atol=0)
        np.testing.assert_allclose(back.density, d.density, rtol=1e-11, atol=1e-300)
        assert back.atom == pytest.approx(d.atom, rel=1e-11)

    def test_large_portfolio_mass_after_reread(self, tmp_path):
        d = combinatorial_loss_pdf(1000, IndividualLossLaw.from_params())
        back = read_density_csv(emit_density_csv(d, tmp_path / "d.csv"))
        assert abs(back.mass() - 1) < 1e-6

    def test_bad_density_file(self, tmp_path):
        p = write_csv(tmp_path / "x.csv", ["a", "b"], [(1, 2)])
        with pytest.raises(ValueError):
            read_density_csv(p)


class TestPresets:
    def test_every_preset_declares_target(self):
        assert len(PRESETS) == 20
        for p in PRESETS.values():
            assert p.target and isinstance(p.headline, dict)

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_runs_small(self, tmp_path, name):
        overrides = dict(TINY)
        if name == "fig6_compare":
            overrides["sizes"] = [10, 100]
        m = run_preset(name, overrides, tmp_path)
        assert m.outputs
        for fname in m.outputs:
            header, rows = read_csv(tmp_path / fname)
            assert header and rows
        assert (tmp_path / f"{name}_manifest.json").exists()

    def test_fig9_peak(self, tmp_path):
        run_preset("fig9", {}, tmp_path)
        header, rows = read_csv(tmp_path / "fig9.csv")
        assert header == ["T", "EL", "UL"]
        data = np.array(rows, dtype=float)
        assert abs(data[np.argmax(data[:, 1]), 0] - 12.56) < 0.1
        assert abs(data[np.argmax(data[:, 2]), 0] - 17.55) < 0.1

    def test_fig16a_levels(self, tmp_path):
        run_preset("fig16a", {"sizes": [100], "n_scenarios": 100_000}, tmp_path)
        header, rows = read_csv(tmp_path / "fig16a_summary.csv")
        el = {float(r[header.index("dF")]): float(r[header.index("EL")]) for r in rows}
        for dF, target in ((0.0, 0.00076), (10.0, 0.00095), (20.0, 0.00157)):
            assert abs(el[dF] - target) < 0.1 * target

    def test_fig6_columns(self, tmp_path):
        run_preset("fig6_compare", {"sizes": [10]}, tmp_path)
        header, _ = read_csv(tmp_path / "fig6_compare_K10.csv")
        assert header == ["loss", "exact", "asymptotic", "combinatorial"]

    def test_byte_identical_and_replay(self, tmp_path):
        a = run_preset("fig21", TINY, tmp_path / "a", workers=1)
        b = run_preset("fig21", TINY, tmp_path / "b", workers=3)
        assert a.outputs == b.outputs
        assert replay(tmp_path / "a" / "fig21_manifest.json") == {}
        c = run_preset("fig21", {**TINY, "seed": 9}, tmp_path / "c")
        assert c.outputs != a.outputs

    def test_replay_detects_tampering(self, tmp_path):
        run_preset("fig20", TINY, tmp_path)
        path = tmp_path / "fig20_manifest.json"
        m = RunManifest.load(path)
        m.outputs["fig20.csv"] = "0" * 64
        m.write(path)
        assert "fig20.csv" in replay(path)

    def test_unknown(self, tmp_path):
        with pytest.raises(KeyError):
            run_preset("fig99", {}, tmp_path)
        with pytest.raises(ValueError):
            run_preset("fig9", {"colour": 1}, tmp_path)


class TestCli:
    def test_preset(self, tmp_path, capsys):
        assert main(["--out", str(tmp_path), "--scenarios", "2000", "fig21", "--sizes", "10"]) == 0
        assert (tmp_path / "fig21_summary.csv").exists()
        assert main(["replay", str(tmp_path / "fig21_manifest.json"), "--threads", "2"]) == 0

    def test_flags_after_subcommand(self, tmp_path):
        assert main(["fig20", "--out", str(tmp_path), "--scenarios", "2000", "--seed", "4"]) == 0
        assert RunManifest.load(tmp_path / "fig20_manifest.json").seed == 4

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LOSSFORGE_SEED", "17")
        assert main(["--out", str(tmp_path), "--scenarios", "2000", "fig20"]) == 0
        assert RunManifest.load(tmp_path / "fig20_manifest.json").seed == 17
        monkeypatch.setenv("LOSSFORGE_SEED", "abc")
        assert main(["--out", str(tmp_path), "fig20"]) == 1

    def test_config_errors(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["fig99"])
        assert exc.value.code == 1
        assert main(["--out", str(tmp_path), "--scenarios", "0", "fig20"]) == 1
        bad = write_doc(tmp_path, {"obligors": [{"face_value": 75}], "branches": [{"size": 2, "correlation": 0.1}]})
        assert main(["--out", str(tmp_path), "simulate", str(bad)]) == 1

    def test_runtime_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["--out", str(blocker / "sub"), "fig9"]) == 2

    def test_simulate(self, tmp_path, capsys):
        doc = write_doc(tmp_path, {"category_rule": "table_ii", "K": 20})
        assert main(["--out", str(tmp_path), "--scenarios", "5000", "simulate", str(doc)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert 0 < out["EL"] < 0.01
        assert (tmp_path / "pf_hist.csv").exists()

    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert "drill_plain" in capsys.readouterr().out
