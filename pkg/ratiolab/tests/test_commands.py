"""
ratio_report command tests
"""

import contextlib
import io
import json
import tempfile
from pathlib import Path

import numpy as np

# Django
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from ..__main__ import main
from .test_report import write_population_csv
from .utils import CORRECTED_FIXTURE, DATA_DIR, LITERAL_FIXTURE, random_population


class RatioReportCommandTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls) -> None:
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        cls.csv = write_population_csv(cls.tmp / "pop.csv", random_population(np.random.default_rng(42), 10))

    @classmethod
    def tearDownClass(cls) -> None:
        cls._tmp.cleanup()
        super().tearDownClass()

    def run_command(self, **options) -> tuple[str, str]:
        """
        Run ratio_report and capture its output

        :return: stdout and stderr
        :rtype: tuple
        """
        out, err = io.StringIO(), io.StringIO()
        call_command("ratio_report", stdout=out, stderr=err, **options)
        return out.getvalue(), err.getvalue()

    def assert_exit_code(self, code: int, **options) -> dict:
        with self.assertRaises(CommandError) as cm:
            self.run_command(**options)
        self.assertEqual(cm.exception.returncode, code)
        record = json.loads(str(cm.exception))
        self.assertEqual(record["exit_code"], code)
        return record

    def test_fixture_report_shows_printed_table(self):
        out, err = self.run_command(config=DATA_DIR / "heads25.cfg", fixture=str(LITERAL_FIXTURE))
        self.assertIn("printed MSE2", out)
        self.assertIn("16156.6 [literal-fixture]", out)
        self.assertIn("275.926 [literal-fixture]", out)
        self.assertIn("warning: V020 listed 2 times", err)
        self.assertIn("malformed value, skipped", err)

    def test_data_report(self):
        out, _ = self.run_command(data=str(self.csv), n="3", estimators="t1,t4", params="explicit")
        self.assertTrue(out.startswith(f"source: {self.csv}  N=10  n=3"))
        self.assertIn("oracle MSE", out)
        self.assertIn("[enumerated]", out)

    def test_flags_override_config(self):
        config = self.tmp / "run.cfg"
        config.write_text(f"fixture = {CORRECTED_FIXTURE}\nestimators = t1,t2,t3\n", encoding="utf-8")
        out, _ = self.run_command(config=config, estimators="t4")
        self.assertIn("t4(", out)
        self.assertNotIn("t2(", out)

    def test_records_file(self):
        path = self.tmp / "cells.jsonl"
        _, err = self.run_command(fixture=str(CORRECTED_FIXTURE), estimators="t1", out=str(path))
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertIn(f"wrote {len(lines)} records to {path}", err)
        self.assertEqual(json.loads(lines[0])["estimator"], "t1")

    def test_fixed_seed_is_reproducible(self):
        options = {"data": str(self.csv), "n": "4", "estimators": "t1", "params": "explicit", "budget": "50"}
        first, _ = self.run_command(seed="9", reps="3000", workers="1", **options)
        second, _ = self.run_command(seed="9", reps="3000", workers="4", **options)
        self.assertEqual(first, second)
        self.assertIn("[monte-carlo]", first)

    def test_input_format_errors_exit_2(self):
        bad = self.tmp / "bad.csv"
        bad.write_text("x,y,z\n1,2,3\n", encoding="utf-8")
        record = self.assert_exit_code(2, data=str(bad), n="1")
        self.assertEqual(record["message"], "column order must be y,x,z")
        self.assert_exit_code(2, data=str(self.tmp / "absent.csv"), n="1")

    def test_configuration_errors_exit_4(self):
        self.assert_exit_code(4, data=str(self.csv))
        self.assert_exit_code(4, fixture=str(CORRECTED_FIXTURE), seed="3")
        self.assert_exit_code(4, data=str(self.csv), n="20")
        self.assert_exit_code(4, fixture=str(CORRECTED_FIXTURE), mode="sideways")

    def test_numerical_errors_exit_3(self):
        # a census leaves every V-term zero, so the optimum is undetermined
        record = self.assert_exit_code(3, data=str(self.csv), n="10", estimators="t1")
        self.assertEqual(record["error"], "SingularSystemError")

    def test_module_entry_point(self):
        with contextlib.redirect_stderr(io.StringIO()) as err, self.assertRaises(SystemExit) as cm:
            main(["--data", str(self.tmp / "absent.csv"), "--n", "2"])
        self.assertEqual(cm.exception.code, 2)
        self.assertIn("PopulationFormatError", err.getvalue())

    def test_dump_v_records(self):
        path = self.tmp / "v.txt"
        _, err = self.run_command(fixture=str(CORRECTED_FIXTURE), estimators="t1", dump_v=str(path))
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertIn(f"wrote {len(lines)} V records to {path}", err)
        self.assertEqual(lines[0], "2 0 0 0.000306792 literal-fixture")
        self.assertTrue(all(line.endswith(" literal-fixture") for line in lines))

    def test_dump_records_from_data(self):
        v_path, c_path = self.tmp / "v_data.txt", self.tmp / "c_data.txt"
        self.run_command(
            data=str(self.csv), n="3", estimators="t1", params="explicit", dump_v=str(v_path), dump_moments=str(c_path)
        )
        provenance = {line.rsplit(" ", 1)[1] for line in v_path.read_text(encoding="utf-8").splitlines()}
        self.assertEqual(provenance, {"closed-form", "enumerated"})
        moments = c_path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(moments), 34)
        self.assertTrue(all(line.endswith(" population") for line in moments))

    def test_dump_moments_needs_data(self):
        self.assert_exit_code(4, fixture=str(CORRECTED_FIXTURE), dump_moments=str(self.tmp / "c.txt"))

    def test_unknown_option_is_a_configuration_error(self):
        with self.assertRaises(CommandError) as cm:
            call_command("ratio_report", "--bogus", "1", stdout=io.StringIO(), stderr=io.StringIO())
        self.assertEqual(cm.exception.returncode, 4)
        record = json.loads(str(cm.exception))
        self.assertEqual(record["error"], "ConfigurationError")
        self.assertIn("unrecognized arguments: --bogus 1", record["message"])

    def test_module_entry_point_usage_error(self):
        with contextlib.redirect_stderr(io.StringIO()) as err, self.assertRaises(SystemExit) as cm:
            main(["--fixture", str(CORRECTED_FIXTURE), "--bogus", "1"])
        self.assertEqual(cm.exception.code, 4)
        record = json.loads(err.getvalue().rsplit("CommandError: ", 1)[1])
        self.assertEqual(record["exit_code"], 4)
        self.assertEqual(record["module"], "cli")

    def test_conflicting_sources_exit_4(self):
        with contextlib.redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as cm:
            main(["--fixture", str(CORRECTED_FIXTURE), "--data", str(self.csv)])
        self.assertEqual(cm.exception.code, 4)
