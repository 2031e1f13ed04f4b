"""Fill the acceptance run cache, then run the acceptance tests.

    python3 scripts/run_acceptance.py [--parallel J]

The cache fill takes hours on one core; later pytest runs reuse it.
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import acceptance_runs  # noqa: E402

if __name__ == "__main__":
    acceptance_runs.main(sys.argv[1:])
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", "-q", str(ROOT / "tests" / "test_acceptance.py")], cwd=ROOT))
