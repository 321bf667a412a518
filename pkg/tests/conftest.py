import numpy as np
import pytest

from siwsampler import RandomStream, SampleBatch
from siwsampler.batch import Provenance
from siwsampler.cli import main
from siwsampler.experiments import gen_psi_case

# (criterion id, description, passed, detail) rows filled by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[str, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid:<5} {desc}: {detail}")


@pytest.fixture
def stream():
    return RandomStream(12345)


@pytest.fixture(scope="session")
def psi_case1_k10():
    return gen_psi_case(10, 1, RandomStream(7, 0, (10, 1)))


@pytest.fixture(scope="session")
def psi_case2_k10():
    return gen_psi_case(10, 2, RandomStream(7, 0, (10, 2)))


def constant_batch(sigma, n=5, nu=10.0):
    """A batch holding ``n`` copies of ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    prov = Provenance(algorithm="constant", nu=nu, psi="none", K=sigma.shape[0], N=n)
    return SampleBatch.from_matrices(np.repeat(sigma[None], n, axis=0), prov)


def run_cli(tmp_path, name, *args):
    """Run the CLI in-process with ``--out-dir tmp_path/name``; returns (exit code, out dir)."""
    out = tmp_path / name
    return main([*args, "--out-dir", str(out)]), out


COMMAND_LINES = {
    "sample": ["sample", "--K", "3", "--nu", "4", "--c", "1", "--N", "200"],
    "sample-sir": ["sample-sir", "--nu", "6", "--K", "4", "--case", "2", "--M", "300", "--mt-exponent", "0.5"],
    "ess": ["ess", "--K", "4", "--nu", "6", "--case", "1", "--M", "100", "200", "--reps", "2"],
    "verify-moments": ["verify-moments", "--K", "3", "--nu", "5", "--N", "50", "100", "--reps", "2"],
    "convergence": ["convergence", "--K", "3", "--nu", "5", "--case", "2", "--M", "100", "200", "--reps", "2"],
    "runtime": ["runtime", "--K", "3", "--nu", "4", "--N", "20", "--M", "50", "--reps", "1"],
}

# files whose content legitimately varies between runs
NONDETERMINISTIC = {"manifest.json", "runtime.csv", "curve_timings.csv"}


def deterministic_outputs(out_dir):
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir()) if p.name not in NONDETERMINISTIC}
