"""OLS, Ridge, Lasso and ElasticNet on the full-elevation feature set.

Run: python3 demos/02_linear_models.py
"""
import io

import numpy as np

from damvol import ingest, linmod, synthetic
from damvol.features import assemble
from damvol.metrics import r2, rmse

ds = ingest.drop_sentinels(ingest.parse_csv(
    io.StringIO(synthetic.to_csv_text(synthetic.generate_rows())), synthetic.SCHEMA))
train, test = ingest.chronological_split(ds, 0.8)
tr, te = assemble(train, "full_elevation"), assemble(test, "full_elevation")
print("columns:", tr.columns)

# the geographical columns are constant for one dam; they get zero weight
flags = linmod.fit_ridge(tr.X, tr.y, 0.1).standardizer.constant
print("constant columns:", [c for c, k in zip(tr.columns, flags) if k])

grid = linmod.default_grid(tr.X, tr.y, n=30)
for name, alpha in [("ridge", 0.0), ("lasso", 1.0), ("elasticnet", 0.5)]:
    lam, table = linmod.cv_select_lambda(tr.X, tr.y, alpha, grid)
    if alpha == 0:
        fit = linmod.fit_ridge(tr.X, tr.y, lam, tr.columns)
    else:
        fit = linmod.fit_elasticnet(tr.X, tr.y, linmod.PenaltySpec(lam, alpha), columns=tr.columns)
    pred = linmod.predict(fit, te.X)
    print(f"{name:<11} lambda={lam:.3g}  RMSE={rmse(te.y, pred):.2f}  R2={r2(te.y, pred):.3f}")
    print("   standardized coefs:", np.round(fit.coefficients, 2))

# a lasso path: coefficients enter as lambda falls
path = linmod.elasticnet_path(tr.X, tr.y, 1.0, grid)
print("nonzero counts along the path:", [int(np.count_nonzero(f.coefficients)) for f in path[::5]])
