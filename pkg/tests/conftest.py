import csv
from pathlib import Path

import numpy as np
import pytest

from labelforge import AnnotationMatrix, EmbeddingStore, ImageRecord, LabelValue

DATA = Path(__file__).parent / "data"


def load_rows(name):
    with (DATA / name).open() as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def make_matrix(attributes, rows, unusable=()):
    """rows: {image_id: [LabelValue or 1/-1/0 per attribute]}"""
    images = [ImageRecord(i, unusable=i in set(unusable)) for i in rows]
    values = np.array(
        [[v.value if isinstance(v, LabelValue) else v for v in row]
         for row in rows.values()],
        dtype=np.int8,
    )
    return AnnotationMatrix(images, list(attributes), values)


def write_attr_file(path, attributes, rows):
    """rows: {image_id: [int tokens]}"""
    with open(path, "w") as fh:
        fh.write(f"{len(rows)}\n")
        fh.write(" ".join(attributes) + "\n")
        for image_id, vals in rows.items():
            fh.write(image_id + " " + " ".join(str(v) for v in vals) + "\n")
    return path


class NoisyBlobs:
    """Two separable Gaussian clusters with asymmetric label noise.

    Ground truth is the cluster of origin.  Noisy labels are derived by
    flipping the lowest-margin members of each class so that, among
    noisy-FALSE items, a chosen fraction are truly TRUE (and likewise for
    noisy-TRUE), mimicking audited per-stratum error rates.  Flipping the
    points nearest the class boundary mirrors how real annotation errors
    concentrate on ambiguous items.
    """

    def __init__(self, n=50_000, dim=8, separation=4.0, true_fraction=0.583,
                 err_n=0.209, err_p=0.016, seed=0, direction=None):
        rng = np.random.default_rng(seed)
        if direction is None:
            direction = rng.normal(size=dim)
            direction /= np.linalg.norm(direction)
        self.direction = direction
        self.separation = separation
        n_true = int(round(true_fraction * n))
        truth = np.zeros(n, dtype=bool)
        truth[:n_true] = True
        X = rng.normal(size=(n, dim))
        X[truth] += (separation / 2.0) * direction
        X[~truth] -= (separation / 2.0) * direction
        margin = X @ direction  # signed distance along the class axis

        # counts that realize the target per-stratum error rates exactly:
        #   n_false_observed = (F - flips_to_true) + flips_to_false
        #   err_n = flips_to_false / n_false_observed, err_p analogous
        F = n - n_true
        n_false_obs = (F - err_p * n) / (1.0 - err_n - err_p)
        flips_to_false = int(round(err_n * n_false_obs))        # truth TRUE, labeled FALSE
        flips_to_true = int(round(err_p * (n - n_false_obs)))   # truth FALSE, labeled TRUE

        noisy = truth.copy()
        true_idx = np.flatnonzero(truth)
        false_idx = np.flatnonzero(~truth)
        noisy[true_idx[np.argsort(margin[true_idx])[:flips_to_false]]] = False
        noisy[false_idx[np.argsort(-margin[false_idx])[:flips_to_true]]] = True

        self.ids = [f"img_{i:06d}" for i in range(n)]
        self.X = X
        self.truth = {self.ids[i]: bool(truth[i]) for i in range(n)}
        self.noisy = {self.ids[i]: bool(noisy[i]) for i in range(n)}
        self.store = EmbeddingStore.from_arrays(self.ids, X)
        self._rng = rng

    def split_seed(self, fraction=0.10):
        """(oracle-clean seed labels, remaining pool ids); deterministic."""
        k = int(round(fraction * len(self.ids)))
        order = self._rng.permutation(len(self.ids))
        seed_ids = [self.ids[i] for i in order[:k]]
        pool_ids = [self.ids[i] for i in order[k:]]
        return {i: self.truth[i] for i in seed_ids}, set(pool_ids)

    def sample_test_set(self, n=5000, seed=1):
        """Fresh clean draw from the same generative process (same class axis)."""
        fresh = NoisyBlobs(n=n, dim=self.X.shape[1], separation=self.separation,
                           seed=seed, direction=self.direction)
        test_ids = [f"test_{i}" for i in range(n)]
        store = EmbeddingStore.from_arrays(test_ids, fresh.X)
        truth = {test_ids[i]: fresh.truth[fresh.ids[i]] for i in range(n)}
        return store, truth

    def true_error(self, labels):
        wrong = sum(1 for i, v in labels.items() if v != self.truth[i])
        return wrong / len(labels)


@pytest.fixture(scope="session")
def pair_conflict_rows():
    return load_rows("celeba_pair_conflicts.tsv")


@pytest.fixture(scope="session")
def annotator_difference_rows():
    return load_rows("celeba_annotator_differences.tsv")


@pytest.fixture(scope="session")
def audit_error_rows():
    return load_rows("celeba_audit_error_rates.tsv")
