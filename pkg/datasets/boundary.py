import os
import os.path as osp

import numpy as np

from gradforge.errors import DomainError
from gradforge.network import forward_many


class BoundaryGrid:
    """Nodes of a resolution x resolution lattice over the unit square.

    Nodes are ordered with y in the outer loop and x in the inner loop.
    """

    def __init__(self, xs, ys, classes, outputs):
        self.xs = xs
        self.ys = ys
        self.classes = classes
        self.outputs = outputs

    def __len__(self):
        return self.xs.shape[0]


def boundary_grid(net, resolution):
    """Predicted class and raw outputs at every lattice node."""
    if net.input_dim != 2:
        raise DomainError(f"boundary grids need a 2-input network, this one has {net.input_dim} inputs")
    if resolution < 2:
        raise DomainError(f"resolution must be >= 2, got {resolution}")
    ticks = np.linspace(0.0, 1.0, resolution)
    ys, xs = np.meshgrid(ticks, ticks, indexing="ij")
    points = np.column_stack([xs.ravel(), ys.ravel()])
    outputs = forward_many(net, points)
    return BoundaryGrid(points[:, 0], points[:, 1], np.argmax(outputs, axis=1), outputs)


def write_boundary_csv(grid, path):
    """Header ``x,y,class,out_0,...`` then one row per node, reals to 17 significant digits."""
    if osp.dirname(path) and not osp.exists(osp.dirname(path)):
        os.makedirs(osp.dirname(path))
    k = grid.outputs.shape[1]
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(["x", "y", "class"] + [f"out_{j}" for j in range(k)]) + "\n")
        for x, y, c, out in zip(grid.xs, grid.ys, grid.classes, grid.outputs):
            values = [format(x, ".17g"), format(y, ".17g"), str(int(c))] + [format(v, ".17g") for v in out]
            f.write(",".join(values) + "\n")
