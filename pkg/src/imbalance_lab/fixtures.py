"""Small hand-built inputs with known answers, shared by ``verify`` and the tests."""

import numpy as np

from .taskgen import Dataset

# Two covariance pairs along w = e1: equal spread (ratio 1) and 4x spread.
COV_EQUAL_ALONG_W = (np.array([[2.0, 0.0], [0.0, 8.0]]), np.array([[2.0, 0.0], [0.0, 4.0]]))
COV_FOURFOLD_ALONG_W = (np.array([[8.0, 0.0], [0.0, 2.0]]), np.array([[2.0, 0.0], [0.0, 8.0]]))
AXIS_W = np.array([1.0, 0.0])


def neighbourhood_graph() -> Dataset:
    """Nine-node, three-colour graph (0-2 red, 3-5 blue, 6-8 green).

    Node LDIs are red {1/2, 1/3, 1/3} and blue {1, 1, 1/2}. The blue 1/2
    needs a same-colour neighbour that is not itself fully heterophilous,
    so node 5 carries a self-loop.
    """
    labels = np.repeat(np.arange(3), 3)
    edges = np.array([(0, 1), (0, 2), (0, 3), (0, 6), (1, 2), (1, 7), (2, 8), (4, 7), (5, 5),
                      (5, 8)])
    feats = np.eye(3)[labels]
    return Dataset(feats, labels, 3, edges=edges)


NEIGHBOURHOOD_LDI = {0: [1 / 2, 1 / 3, 1 / 3], 1: [1.0, 1.0, 1 / 2]}
