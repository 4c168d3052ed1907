"""Random forest renditions: how each feature set changes test error.

Run: python3 demos/03_forest.py   (about 20 s)
"""
import io

from damvol import ingest, synthetic
from damvol.features import RENDITION_ORDER, assemble
from damvol.forest import RfParams, fit_forest, predict_forest, tree_depth
from damvol.metrics import r2, rmse
from damvol.preprocess import iqr_filter

ds = ingest.drop_sentinels(ingest.parse_csv(
    io.StringIO(synthetic.to_csv_text(synthetic.generate_rows())), synthetic.SCHEMA))
train, test = ingest.chronological_split(ds, 0.8)
ref = train
train, _ = iqr_filter(train)
test, _ = iqr_filter(test, reference=ref)

params = RfParams(n_trees=200, seed=0)
for rend in RENDITION_ORDER:
    tr, te = assemble(train, rend), assemble(test, rend)
    f = fit_forest(tr.X, tr.y, params, tr.columns, n_jobs=4)
    pred = predict_forest(f, te.X)
    depth = max(tree_depth(t) for t in f.trees)
    print(f"{rend:<15} p={len(tr.columns)} pool={list(f.feature_pool)} depth<={depth}  "
          f"RMSE={rmse(te.y, pred):.3f}  R2={r2(te.y, pred):.3f}")
