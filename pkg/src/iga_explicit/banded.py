"""Symmetric banded matrices, optionally with periodic (wrap-around) band structure."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericalError


class BandedSymmetricMatrix:
    """Symmetric matrix stored by diagonals.

    ``bands[d, i]`` holds the entry ``(i, i + d)`` for offsets ``d = 0 .. halfwidth``;
    symmetry supplies the lower triangle. With ``periodic=True`` the column index
    wraps modulo ``n``, which requires ``2 * halfwidth < n`` so that wrapped
    diagonals cannot collide with themselves.

    For clamped (non-periodic) storage, ``bands[d, i]`` is meaningful for
    ``i < n - d``; the trailing entries of each diagonal are kept at zero.
    """

    def __init__(self, n, halfwidth, periodic=False, bands=None):
        if n < 1:
            raise ValueError("matrix dimension must be positive")
        if halfwidth < 0:
            raise ValueError("halfwidth must be non-negative")
        if periodic:
            if 2 * halfwidth >= n:
                raise ValueError("periodic band storage requires 2*halfwidth < n")
        else:
            halfwidth = min(halfwidth, n - 1)
        self.n = n
        self.halfwidth = halfwidth
        self.periodic = periodic
        if bands is None:
            bands = np.zeros((halfwidth + 1, n))
        else:
            bands = np.asarray(bands, dtype=float)
            if bands.shape != (halfwidth + 1, n):
                raise ValueError("bands array has wrong shape")
        self.bands = bands
        self._chol = None

    @classmethod
    def from_dense(cls, dense, halfwidth, periodic=False):
        dense = np.asarray(dense, dtype=float)
        n = dense.shape[0]
        out = cls(n, halfwidth, periodic=periodic)
        hw = out.halfwidth
        for d in range(hw + 1):
            if periodic:
                cols = (np.arange(n) + d) % n
                out.bands[d, :] = dense[np.arange(n), cols]
            else:
                out.bands[d, : n - d] = dense[np.arange(n - d), np.arange(d, n)]
        return out

    def copy(self):
        return BandedSymmetricMatrix(
            self.n, self.halfwidth, periodic=self.periodic, bands=self.bands.copy()
        )

    def add_at(self, i, j, value):
        """Accumulate ``value`` at entry ``(i, j)``; the mirrored entry is implied."""
        self._chol = None
        if self.periodic:
            d = (j - i) % self.n
            if d <= self.halfwidth:
                self.bands[d, i] += value
                return
            d2 = (i - j) % self.n
            if d2 <= self.halfwidth:
                self.bands[d2, j] += value
                return
            raise IndexError("entry outside band")
        if j < i:
            i, j = j, i
        d = j - i
        if d > self.halfwidth:
            raise IndexError("entry outside band")
        self.bands[d, i] += value

    def to_dense(self):
        n = self.n
        dense = np.zeros((n, n))
        for d in range(self.halfwidth + 1):
            if self.periodic:
                rows = np.arange(n)
                cols = (rows + d) % n
                dense[rows, cols] += self.bands[d]
                if d > 0:
                    dense[cols, rows] += self.bands[d]
            else:
                rows = np.arange(n - d)
                dense[rows, rows + d] = self.bands[d, : n - d]
                if d > 0:
                    dense[rows + d, rows] = self.bands[d, : n - d]
        return dense

    def matvec(self, x):
        """Product with a vector, or with a matrix along its first axis."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(self.n, -1)
        y = self.bands[0][:, None] * flat
        n = self.n
        for d in range(1, self.halfwidth + 1):
            if self.periodic:
                bd = self.bands[d][:, None]
                y += bd * np.roll(flat, -d, axis=0)
                y += np.roll(bd * flat, d, axis=0)
            else:
                bd = self.bands[d, : n - d][:, None]
                y[: n - d] += bd * flat[d:]
                y[d:] += bd * flat[: n - d]
        return y.reshape(x.shape)

    def rowsums(self):
        return self.matvec(np.ones(self.n))

    def submatrix(self, lo, hi):
        """Restriction to the index range ``[lo, hi)`` (non-periodic only)."""
        if self.periodic:
            raise ValueError("cannot restrict a periodic banded matrix")
        if not (0 <= lo <= hi <= self.n):
            raise ValueError("invalid restriction range")
        m = hi - lo
        hw = min(self.halfwidth, m - 1)
        out = BandedSymmetricMatrix(m, hw)
        for d in range(hw + 1):
            out.bands[d, : m - d] = self.bands[d, lo : lo + m - d]
        return out

    # -- SPD solves ---------------------------------------------------------

    def _upper_ab(self):
        hw = self.halfwidth
        ab = np.zeros((hw + 1, self.n))
        for d in range(hw + 1):
            ab[hw - d, d:] = self.bands[d, : self.n - d]
        return ab

    def _factorize(self):
        if self._chol is not None:
            return self._chol
        try:
            if self.periodic:
                self._chol = ("dense", scipy.linalg.cho_factor(self.to_dense()))
            else:
                cb = scipy.linalg.cholesky_banded(self._upper_ab(), lower=False)
                self._chol = ("banded", cb)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(
                f"banded Cholesky failed (matrix not SPD): {exc}; "
                f"smallest eigenvalue ~ {self.smallest_eigenvalue():.3e}"
            ) from None
        return self._chol

    def solve(self, b):
        """SPD solve; ``b`` may be a vector or a matrix of columns."""
        kind, fac = self._factorize()
        b = np.asarray(b, dtype=float)
        flat = b.reshape(self.n, -1)
        if kind == "dense":
            y = scipy.linalg.cho_solve(fac, flat)
        else:
            y = scipy.linalg.cho_solve_banded((fac, False), flat)
        return y.reshape(b.shape)

    def is_spd(self):
        try:
            self._factorize()
        except NumericalError:
            return False
        return True

    def smallest_eigenvalue(self):
        if self.periodic:
            return float(np.linalg.eigvalsh(self.to_dense())[0])
        w = scipy.linalg.eig_banded(
            self._upper_ab(), lower=False, eigvals_only=True, select="i", select_range=(0, 0)
        )
        return float(w[0])

    @property
    def storage_entries(self):
        return int(self.bands.size)
