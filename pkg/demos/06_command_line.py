"""Drive the command-line tool on the coarse benchmark config.

Each command writes into a directory named after a hash of the config, so
repeated runs with the same inputs land in the same place and reuse the
cached solution.
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp(prefix="goalgrid_"))
for cmd in ("solve", "boundary", "oracle", "simulate", "export"):
    proc = subprocess.run([sys.executable, "-m", "goalgrid.cli", cmd, "--config", "benchmark_rho05_coarse",
                           "--out", str(out)], capture_output=True, text=True, check=True)
    doc = json.loads(proc.stdout)
    print(f"{cmd}: {sorted(k for k in doc if k != 'run_dir')}")
run = next(out.iterdir())
print(f"\nfiles in {run}:")
for p in sorted(run.rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(run)}")
