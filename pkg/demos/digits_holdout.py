"""
Held-out digit as the anomaly
=============================

Train on nine digit classes, then ask whether the tenth stands out. The 8x8
digits bundled with scikit-learn (1797 images) stand in for a larger
handwritten-digit set; scikit-learn is only used to load them.

Three scores are compared by AU-ROC: PCA reconstruction error with 20
components, autoencoder reconstruction error with a 7-wide code, and the
nearest-neighbour distance inside a 20-wide autoencoder code.
"""

import sys

import numpy as np
from sklearn.datasets import load_digits

from twophase import (
    AeArchitecture,
    TrainConfig,
    fit_normalizer,
    fit_pca,
    fit_second_phase,
    reconstruction_scores,
    roc_auc,
    train,
)

held_out = [int(c) for c in sys.argv[1:]] or [0, 1, 2]

x, y = load_digits(return_X_y=True)
perm = np.random.default_rng(0).permutation(len(y))
cut = int(0.7 * len(y))
train_idx, test_idx = perm[:cut], perm[cut:]

print("class   PCA(20)  AE(7)  AE(20)+1NN")
rows = []
for c in held_out:
    # the held-out class never appears in training
    x_tr = x[train_idx][y[train_idx] != c]
    labels = (y[test_idx] == c).astype(int)
    norm = fit_normalizer(x_tr)
    a, b = norm.apply(x_tr), norm.apply(x[test_idx])

    cfg = TrainConfig(learning_rate=1e-3, max_epochs=400, patience=30, seed=c)
    pca = roc_auc(reconstruction_scores(fit_pca(a, 20), b), labels).auc
    ae7 = train(a, AeArchitecture.symmetric(64, 7, (128, 128)), cfg)
    ae = roc_auc(reconstruction_scores(ae7, b), labels).auc
    ae20 = train(a, AeArchitecture.symmetric(64, 20, (128, 128)), cfg)
    knn = fit_second_phase("knn", {"k": 1}, ae20.encode(a))
    ae_knn = roc_auc(knn.score(ae20.encode(b)), labels).auc

    rows.append((pca, ae, ae_knn))
    print(f"{c:5d}   {pca:.3f}    {ae:.3f}  {ae_knn:.3f}")

mean = np.mean(rows, axis=0)
print(f" mean   {mean[0]:.3f}    {mean[1]:.3f}  {mean[2]:.3f}")
