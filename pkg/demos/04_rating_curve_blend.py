"""Rating-curve threshold detection and a Ridge/forest blend sweep.

Run: python3 demos/04_rating_curve_blend.py   (about 20 s)
"""
import io

from damvol import blend, ingest, linmod, ratingcurve, synthetic
from damvol.features import assemble
from damvol.forest import RfParams
from damvol.preprocess import iqr_filter

curve = synthetic.loskop_profile_curve()
print("knots:", curve.knots())
print("segment slopes (MCM/m):", ratingcurve.segment_slopes(curve).round(2))
stage, vol = ratingcurve.detect_threshold(curve)
print(f"largest slope increase at {stage} m = {vol} MCM")
print("volume at 15 m:", ratingcurve.volume_at(curve, 15.0))

ds = ingest.drop_sentinels(ingest.parse_csv(
    io.StringIO(synthetic.to_csv_text(synthetic.generate_rows())), synthetic.SCHEMA))
train, test = ingest.chronological_split(ds, 0.8)
ref = train
train, _ = iqr_filter(train)
test, _ = iqr_filter(test, reference=ref)
tr, te = assemble(train, "full_elevation"), assemble(test, "full_elevation")

lam, _ = linmod.cv_select_lambda(tr.X, tr.y, 0.0, linmod.default_grid(tr.X, tr.y))
p25, p50, p75 = blend.percentile_thresholds(tr.y, [25, 50, 75])
gauge_rule, prov = blend.gauge_threshold_from_curve(curve)
cands = [("p25", p25), ("p50", p50), ("p75", p75), ("200 MCM", 200.0), ("300 MCM", 300.0),
         (f"gauge {prov['stage_m']} m", gauge_rule)]
rows = blend.threshold_sweep(tr, te, cands, lam, RfParams(), n_jobs=4)
print(blend.format_sweep(rows))
