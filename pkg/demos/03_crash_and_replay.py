"""End-to-end CLI session: run, analyze, report and replay a crash.

One resolver in the fleet dies whenever a client query contains the octet
0x40. The crash oracle picks those cases up from liveness checks and
replay reproduces each one from the persisted seed.
"""

import json
import sys
import tempfile
from pathlib import Path

from qrfuzz.cli import main

out = Path(tempfile.mkdtemp()) / "campaign"
main(["run", "--mode", "forward-only", "--units", "4", "--cases", "300", "--seed", "5",
      "--adapter", "reference:name=steady", "--adapter", "reference:name=fragile,crash-on-pattern=40",
      "--out", str(out)])
main(["analyze", "--out", str(out)])
main(["report", "--out", str(out)])

crashes = [json.loads(l) for l in (out / "findings/crash.jsonl").read_text().splitlines()]
print(f"\n{len(crashes)} crash findings, e.g. cases {[c['case_id'] for c in crashes[:5]]}")
if not crashes:
    sys.exit(0)
print("replaying the first one:")
main(["replay", "--out", str(out), "--case", str(crashes[0]["case_id"]), "--adapter", "fragile"])
print("\nreport written to", out / "report/report.md")
print((out / "report/report.md").read_text()[:1200])
