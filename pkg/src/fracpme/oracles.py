"""Independent reference computations used to check the spectral-box operator."""

from __future__ import annotations

import numpy as np

from .operators import DomainLayout


def fft_fractional_laplacian(
    func, layout: DomainLayout, s: float, width_factor: int = 8, refine: int = 2, symbol: str = "continuum"
) -> np.ndarray:
    """``(-Delta)^s func`` on the layout's interior nodes by FFT on a wide periodic grid.

    ``func`` maps an ``(M, dim)`` array of points to values.  It is sampled on a
    periodic grid ``width_factor`` times wider than the box and ``refine`` times
    finer, aligned so that every box node is a fine-grid node.

    ``symbol="continuum"`` uses ``|xi|^(2s)``.  ``symbol="lattice"`` uses the
    three-point Laplacian symbol ``(4/h^2) sin^2(xi h/2)`` raised to ``s`` on the
    layout's own spacing (``refine`` is forced to 1): the fractional power of
    the infinite-grid Laplacian, which shares the box operator's discretisation
    error and so isolates the effect of the walls.
    """
    if symbol not in ("continuum", "lattice"):
        raise ValueError(f"unknown symbol {symbol!r}")
    if symbol == "lattice":
        refine = 1
    dim = layout.dimension
    fine_axes, offsets = [], []
    for a in range(dim):
        lo, hi = layout.box[a]
        hf = layout.spacing[a] / refine
        nodes_per_box = int(round((hi - lo) / hf))
        pad = int(round(0.5 * (width_factor - 1) * nodes_per_box))
        total = nodes_per_box + 2 * pad
        fine_axes.append(lo - pad * hf + hf * np.arange(total))
        offsets.append(pad)
    grids = np.meshgrid(*fine_axes, indexing="ij")
    shape = grids[0].shape
    values = np.asarray(func(np.stack([g.ravel() for g in grids], axis=1))).reshape(shape)

    xi2 = np.zeros(shape)
    for a in range(dim):
        hf = layout.spacing[a] / refine
        k = 2.0 * np.pi * np.fft.fftfreq(shape[a], d=hf)
        bshape = [1] * dim
        bshape[a] = shape[a]
        sq = k ** 2 if symbol == "continuum" else (2.0 / hf * np.sin(0.5 * k * hf)) ** 2
        xi2 = xi2 + sq.reshape(bshape)
    out = np.real(np.fft.ifftn(np.fft.fftn(values) * xi2 ** s))

    index = tuple(
        offsets[a] + refine * np.arange(1, layout.n_grid - 1) for a in range(dim)
    )
    return out[np.ix_(*index)].ravel()
