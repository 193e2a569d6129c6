"""Regenerate data/nb_params.tsv (illustrative innovation parameters).

Means are log-uniform on [1, 20], dispersions uniform on [0.2, 1.0].
"""
import numpy as np

rng = np.random.default_rng(20240101)
n = 100
mean = np.exp(rng.uniform(np.log(1.0), np.log(20.0), n))
disp = rng.uniform(0.2, 1.0, n)
with open("data/nb_params.tsv", "w") as f:
    f.write("taxon\tmean\tdispersion\n")
    for i in range(n):
        f.write(f"{i + 1}\t{mean[i]:.4f}\t{disp[i]:.4f}\n")
