"""Regenerate data/corpus/ from datasets bundled with scikit-learn and statsmodels.

Every dataset is reduced to a binary task; the label is the last column.
No network access is needed.
"""
import os

import numpy as np
import pandas as pd
import sklearn.datasets as skd
import statsmodels.api as sm

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "corpus")


def write(name, frame, label):
    frame = frame.copy()
    frame.columns = [str(c).replace(" ", "_") for c in frame.columns]
    frame["label"] = label
    frame.to_csv(os.path.join(OUT, name + ".csv"), index=False)
    counts = pd.Series(label).value_counts().to_dict()
    print(f"{name}: n={len(frame)} p={frame.shape[1] - 1} classes={counts}")


def main():
    os.makedirs(OUT, exist_ok=True)

    bc = skd.load_breast_cancer(as_frame=True)
    write("breast_cancer", bc.data, np.where(bc.target == 1, "benign", "malignant"))

    dg = skd.load_digits(as_frame=True)
    write("digits_low_high", dg.data, np.where(dg.target < 5, "low", "high"))

    ir = skd.load_iris(as_frame=True)
    keep = ir.target > 0
    write("iris_versicolor_virginica", ir.data[keep],
          np.where(ir.target[keep] == 1, "versicolor", "virginica"))

    wn = skd.load_wine(as_frame=True)
    write("wine_cultivar0", wn.data, np.where(wn.target == 0, "c0", "other"))

    db = skd.load_diabetes(as_frame=True, scaled=False)
    write("diabetes_progression", db.data,
          np.where(db.target > np.median(db.target), "high", "low"))

    an = sm.datasets.anes96.load_pandas().data
    write("anes96_vote", an.drop(columns=["vote"]),
          np.where(an["vote"] == 1, "dole", "clinton"))

    fa = sm.datasets.fair.load_pandas().data.sample(n=2000, random_state=7)
    write("fair_affairs", fa.drop(columns=["affairs"]),
          np.where(fa["affairs"] > 0, "yes", "no"))

    mc = sm.datasets.modechoice.load_pandas().data
    write("modechoice_choice", mc.drop(columns=["individual", "choice"]),
          np.where(mc["choice"] == 1, "chosen", "other"))


if __name__ == "__main__":
    main()
