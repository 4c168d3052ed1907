"""The batch pipeline through the command line, in a scratch directory.

Equivalent shell session:

    damvol clean run.json
    damvol train run.json --set n_jobs=4
    damvol evaluate run.json
    damvol blend-sweep run.json
    damvol rating-threshold run.json
    damvol report run.json

Run: python3 demos/05_cli_pipeline.py   (about 40 s)
"""
import json
import sys
import tempfile
from pathlib import Path

from damvol import cli, ratingcurve, synthetic

work = Path(tempfile.mkdtemp(prefix="damvol-"))
synthetic.write_csv(work / "obs.csv")
ratingcurve.write_curve_csv(synthetic.loskop_profile_curve(), work / "curve.csv")
config = {
    "observations": "obs.csv",
    "rating_curve": "curve.csv",
    "schema": synthetic.SCHEMA,
    "rf_renditions": ["base", "full_capacity", "geographical", "full_elevation"],
    "blends": [{"mode": "rating_curve", "value": None}, {"mode": "fixed_mcm", "value": 200}],
    "n_jobs": 4,
}
(work / "run.json").write_text(json.dumps(config, indent=1))

for cmd in ("clean", "train", "evaluate", "blend-sweep", "rating-threshold", "report"):
    print(f"$ damvol {cmd} run.json")
    code = cli.main([cmd, str(work / "run.json")])
    if code:
        sys.exit(code)
print("outputs in", work / "out")
