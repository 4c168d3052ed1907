"""Cleaning a gauge export: sentinels, malformed rows and IQR outliers.

Run: python3 demos/01_cleaning.py
"""
import io

import numpy as np

from damvol import ingest, synthetic
from damvol.preprocess import iqr_filter, quartiles

rows = synthetic.generate_rows(synthetic.ReservoirParams(n_records=300))
text = synthetic.to_csv_text(rows)
print(text.splitlines()[0])

ds = ingest.parse_csv(io.StringIO(text), synthetic.SCHEMA)
print("parsed", len(ds), "records")

# -9.9 marks a missing reading; any field carrying it drops the record
ds = ingest.drop_sentinels(ds)
print("after sentinels:", len(ds), ds.provenance.as_dict()["dropped_sentinel"], "dropped")

train, test = ingest.chronological_split(ds, 0.8)
q = quartiles(train.column("water_area"))
print("train area quartiles: q1=%.1f median=%.1f q3=%.1f" % (q.q1, q.median, q.q3))
print("IQR bounds (k=1.5):", np.round(q.bounds(1.5), 1))

# bounds come from train only and are reused on test
clean_train, n_tr = iqr_filter(train)
clean_test, n_te = iqr_filter(test, reference=train)
print(f"outliers removed: train {n_tr}, test {n_te}")
print("max area left:", clean_train.column("water_area").max())
