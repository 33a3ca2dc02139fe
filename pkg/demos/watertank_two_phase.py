"""
Two-phase detection on the water tank
=====================================

The tank's outflow follows q_o = a*sqrt(H). A one-dimensional autoencoder
learns that curve, so points pushed off the curve get a large reconstruction
error. Points that stay on the curve but leave the operating range are
invisible to that test; a hypercube in the latent space catches them.
"""

import numpy as np

from twophase import (
    AeArchitecture,
    FirstPhaseDetector,
    TrainConfig,
    WaterTankParams,
    confusion,
    detect,
    fit_normalizer,
    fit_pca,
    fit_second_phase,
    gen_watertank,
    gen_watertank_anomalies,
    roc_auc,
    train,
)

# Normal operation: 10 000 noisy samples of (H, q_o).
train_ds = gen_watertank(WaterTankParams(seed=1))
test_ds = gen_watertank(WaterTankParams(n=2000, seed=2))

# Normalization statistics come from the training data only.
norm = fit_normalizer(train_ds)
x_train, x_test = norm.apply(train_ds.x), norm.apply(test_ds.x)

# A linear model cannot follow the curvature, a small autoencoder can.
pca = fit_pca(x_train, 1)
ae = train(x_train, AeArchitecture.symmetric(2, 1, (16, 16)), TrainConfig(seed=0))
for name, model in (("PCA", pca), ("AE", ae)):
    err = np.mean((x_test - model.reconstruct(x_test)) ** 2)
    print(f"{name:>3} test MSE at p=1: {err:.5f}")

# 100 anomalies of each kind: off the curve, and on the curve beyond H_max.
anomalies = gen_watertank_anomalies(WaterTankParams(seed=3), ["off_manifold", "out_of_range"], 100)
x_eval = norm.apply(np.vstack([test_ds.x, anomalies.x]))
labels = np.r_[np.zeros(test_ds.n, dtype=int), anomalies.labels]

# Phase 1 thresholds the reconstruction error at its 99.9 % training quantile.
first = FirstPhaseDetector.fit(ae, x_train, 0.999)
alone = detect(first, None, x_eval)

# Phase 2 bounds the latent code; the decision is the OR of both phases.
second = fit_second_phase("hypercube", None, ae.encode(x_train), 0.999)
both = detect(first, second, x_eval)

off = slice(test_ds.n, test_ds.n + 100)
oor = slice(test_ds.n + 100, None)
print(f"\nfalse-positive rate on normal test rows: {alone.anomaly[: test_ds.n].mean():.4f}")
print(f"phase 1 only:  off-manifold {alone.anomaly[off].mean():.0%}, "
      f"out-of-range {alone.anomaly[oor].mean():.0%}")
print(f"both phases:   off-manifold {both.anomaly[off].mean():.0%}, "
      f"out-of-range {both.anomaly[oor].mean():.0%}")

report = confusion(both.anomaly, labels, roc_auc(both.combined_score, labels).auc)
print(f"\ncombined: F1 {report.f1:.3f}, AU-ROC {report.auc:.4f}")
