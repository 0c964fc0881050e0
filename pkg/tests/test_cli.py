import argparse
import io
import json
import math
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest import mock

import cli
from asymptotics import clt_prediction
from cli import (
    EXIT_PASS,
    EXIT_USAGE,
    LOCAL_LAW_COLUMNS,
    UsageError,
    parse_and_dispatch,
    parse_run_config,
    parse_z_grid,
    read_config_file,
)
from config import settings
from models import OutputFormat, Subcommand


def run_cli(argv):
    stdout, stderr = io.StringIO(), io.StringIO()
    with redirect_stdout(stdout), redirect_stderr(stderr):
        code = parse_and_dispatch(argv)
    return code, stdout.getvalue(), stderr.getvalue()


class TestConverters(unittest.TestCase):
    def test_z_grid(self):
        """Test complex grid parsing with i or j"""
        self.assertEqual(parse_z_grid("0.3+0.1i, 0.5-0.2j"), [(0.3, 0.1), (0.5, -0.2)])
        with self.assertRaises(argparse.ArgumentTypeError):
            parse_z_grid("uno+dos")

    def test_config_file(self):
        """Test key=value files with comments and dashed keys"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("# experimento\np = 3\n--N-list = 16,32  # tamaños\nz_grid=0.1+0.2i\n")
            values = read_config_file(path)
        self.assertEqual(values, {"p": "3", "N_list": [16, 32], "z_grid": [(0.1, 0.2)]})

    def test_config_file_errors(self):
        """Test missing files and malformed lines"""
        with self.assertRaises(UsageError):
            read_config_file("/nonexistent/run.cfg")
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "bad.cfg")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("p 3\n")
            with self.assertRaises(UsageError):
                read_config_file(path)


class TestParseRunConfig(unittest.TestCase):
    def test_defaults(self):
        """Test defaults for a bare subcommand"""
        cfg = parse_run_config(["predict"])
        self.assertEqual(cfg.subcommand, Subcommand.PREDICT)
        self.assertEqual(cfg.format, OutputFormat.JSON)
        self.assertEqual(cfg.N_list, [64, 128, 256, 512])

    def test_flags_override_file(self):
        """Test command-line flags take precedence over the config file"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("p=3\nbeta=1\n")
            cfg = parse_run_config(["predict", "--config", path, "--p", "4"])
        self.assertEqual(cfg.p, 4.0)
        self.assertEqual(cfg.beta, 1.0)

    def test_invalid_values(self):
        """Test validation errors become usage errors"""
        with self.assertRaises(UsageError):
            parse_run_config(["predict", "--p", "1.5"])
        with self.assertRaises(UsageError):
            parse_run_config(["kls", "--r", "3"])
        with self.assertRaises(UsageError):
            parse_run_config(["verify-loop", "--z-grid", "0.5"])


class TestExitCodes(unittest.TestCase):
    def test_usage_errors(self):
        """Test exit code 64 on bad input"""
        self.assertEqual(run_cli(["predict", "--p", "1.5"])[0], EXIT_USAGE)
        self.assertEqual(run_cli(["unknown"])[0], EXIT_USAGE)
        self.assertEqual(run_cli(["schatten", "--p", "2", "--beta", "3"])[0], EXIT_USAGE)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write("temperature=3\n")
            code, _, stderr = run_cli(["predict", "--config", path])
        self.assertEqual(code, EXIT_USAGE)
        self.assertIn("error", stderr)

    def test_help(self):
        """Test --help exits cleanly"""
        code, stdout, _ = run_cli(["verify-clt", "--help"])
        self.assertEqual(code, 0)
        self.assertIn("--replicas", stdout)
        self.assertIn("default", stdout)


class TestCommands(unittest.TestCase):
    def test_predict(self):
        """Test the CLT prediction output"""
        code, stdout, _ = run_cli(["predict", "--p", "2.5", "--beta", "2", "--f", "x2"])
        self.assertEqual(code, EXIT_PASS)
        payload = json.loads(stdout)
        self.assertEqual(payload["run_config"]["p"], 2.5)
        self.assertAlmostEqual(payload["prediction"]["mean"], 0.0)
        self.assertAlmostEqual(payload["prediction"]["variance"], 0.125, places=10)
        self.assertEqual(len(payload["prediction"]["moments"]), 4)

    def test_grid_order_is_passed_not_stored(self):
        """Test --grid-order reaches the prediction without touching global settings"""
        before = settings.grid_order
        with mock.patch.object(cli, "clt_prediction", wraps=clt_prediction) as prediction:
            code, stdout, _ = run_cli(["predict", "--p", "3", "--beta", "2", "--f", "x2", "--grid-order", "64"])
        self.assertEqual(code, EXIT_PASS)
        self.assertEqual(prediction.call_args.kwargs["grid_order"], 64)
        self.assertEqual(settings.grid_order, before)
        self.assertAlmostEqual(json.loads(stdout)["prediction"]["variance"], 0.125, places=6)

    def test_free_energy(self):
        """Test the free-energy expansion output"""
        code, stdout, _ = run_cli(["free-energy", "--p", "2", "--beta", "2"])
        self.assertEqual(code, EXIT_PASS)
        values = json.loads(stdout)["free_energy"]
        self.assertAlmostEqual(values["leading"], -0.721574, delta=1e-6)
        self.assertAlmostEqual(values["fg_minus1"], 0.418939, delta=1e-6)

    def test_schatten_exact_volume(self):
        """Test the S_2 ball volume is the Euclidean one"""
        code, stdout, _ = run_cli(["schatten", "--p", "2", "--beta", "2", "--N", "2"])
        self.assertEqual(code, EXIT_PASS)
        values = json.loads(stdout)["schatten"]
        self.assertAlmostEqual(values["log_volume_exact"], math.log(math.pi ** 2 / 2.0), delta=1e-10)
        self.assertAlmostEqual(values["a"], -1.0)

    def test_sample(self):
        """Test a short exact Gaussian chain"""
        code, stdout, _ = run_cli(["sample", "--p", "2", "--beta", "2", "--N", "4", "--sweeps", "100", "--seed", "5"])
        self.assertEqual(code, EXIT_PASS)
        payload = json.loads(stdout)
        self.assertEqual(payload["header"]["method"], "tridiagonal")
        self.assertEqual(len(payload["samples"]), 8)
        self.assertEqual(len(payload["samples"][0]), 4)

    def test_local_law_csv(self):
        """Test the local-law CSV layout"""
        with tempfile.TemporaryDirectory() as tmp:
            out = os.path.join(tmp, "local_law.csv")
            code, _, _ = run_cli([
                "verify-local-law", "--alpha", "0", "--N-list", "8,16", "--replicas", "10", "--sweeps", "200",
                "--threads", "1", "--seed", "3", "--format", "csv", "--out", out,
            ])
            with open(out, encoding="utf-8") as handle:
                lines = handle.read().splitlines()
        self.assertIn(code, (0, 1, 2))
        self.assertTrue(lines[0].startswith("# run_config: "))
        self.assertEqual(lines[1].split(","), LOCAL_LAW_COLUMNS)
        self.assertEqual(len(lines), 4)


if __name__ == '__main__':
    unittest.main()
