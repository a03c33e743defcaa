"""Why uniform random sampling starves small clusters.

A single class of 200 points is split across four clusters with sizes
80/60/40/20. We draw a coreset of 40 both ways and compare how many
samples each cluster contributes.
"""
import numpy as np

from coreselect.data_model import EmbeddingMatrix
from coreselect.kmedoids import ClassClustering
from coreselect.sampler import (intelligent_sample, random_sample,
                                representation_report, rs_expected_counts)

sizes = np.array([80, 60, 40, 20])
n_total = int(sizes.sum())
coreset_size = 40

# Build the ground-truth clustering directly; the points themselves do not
# matter for allocation, only the cluster membership does.
assignment = np.repeat(np.arange(4), sizes)
clustering = ClassClustering(
    class_index=0, ids=np.arange(n_total), assignment=assignment,
    medoid_ids=np.array([0, 80, 140, 180]), k=4,
    mean_silhouette=None, per_cluster_silhouette=None)

rng = np.random.default_rng(0)
m = EmbeddingMatrix(ids=np.arange(n_total), labels=np.zeros(n_total, int),
                    data=rng.normal(size=(n_total, 2)), class_names=["cells"])

print("cluster sizes:", sizes.tolist())
print("expected counts under random sampling:",
      rs_expected_counts(sizes, coreset_size).tolist())

sel_rs = random_sample(m, coreset_size, seed=7)
sel_is = intelligent_sample(m, {0: clustering}, coreset_size, allocation="equal")

print("\n%-8s %8s %8s %8s" % ("cluster", "size", "random", "intel"))
rows_rs = representation_report(sel_rs, {0: clustering})
rows_is = representation_report(sel_is, {0: clustering})
for r_rs, r_is in zip(rows_rs, rows_is):
    print("%-8d %8d %8d %8d" % (r_rs.cluster, r_rs.source_size,
                                r_rs.selected, r_is.selected))

# The smallest cluster keeps a fixed floor under intelligent sampling but
# fluctuates (sometimes to zero) under random draws.
smallest = []
for seed in range(1000):
    sel = random_sample(m, coreset_size, seed=seed)
    smallest.append(representation_report(sel, {0: clustering})[-1].selected)
smallest = np.array(smallest)
print("\nsmallest cluster under 1000 random draws:"
      f" mean {smallest.mean():.2f}, min {smallest.min()},"
      f" empty in {np.mean(smallest == 0):.1%} of draws")
print("smallest cluster under intelligent sampling: always",
      rows_is[-1].selected)
