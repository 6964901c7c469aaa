"""Shared batch builders and the acceptance-report summary hook."""

import numpy as np

from modalmetric import Dataset, Modality, SampleRecord, l2_normalize

# test_acceptance appends one "criterion N ...: PASS/FAIL" line per
# criterion; printing them in the terminal summary keeps the whole gate
# visible in one block at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def unit_rows(rng, n, d):
    """n random rows on the unit sphere in d dimensions."""
    return l2_normalize(rng.standard_normal((n, d)))


def pk_batch(rng, p, k, d):
    """Random unit batch shaped like sampler output: p classes, k
    sketches then k photos per class.

    Returns:
        (embeddings, labels, modalities).
    """
    labels = np.repeat(np.arange(p), 2 * k)
    mods = np.tile(np.repeat([0, 1], k), p)
    return unit_rows(rng, 2 * p * k, d), labels, mods


def make_dataset(features, labels, mods):
    """Hand-rolled Dataset from parallel lists (no validation)."""
    features = [np.asarray(f, dtype=np.float64) for f in features]
    samples = [
        SampleRecord(i, int(lab), Modality(int(m)), f)
        for i, (f, lab, m) in enumerate(zip(features, labels, mods))
    ]
    return Dataset(samples, int(max(labels)) + 1, len(features[0]))
